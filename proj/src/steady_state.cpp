#include "mmcim/steady_state.hpp"

#include <cmath>
#include <numbers>

namespace mmcim {

bool current_order_flows(int h) {
    if (h % 2 == 0)
        return true;            // common-mode loops close through the bus
    return h % 3 != 0;          // transformer blocks zero-sequence odd orders
}

bool bus_order_ripples(int h) { return h > 0 && h % 6 == 0; }

namespace {

constexpr double kCapScale = 1e3;   // capacitor rows, kV -> V-ish conditioning
constexpr double kCccScale = 10.0;
constexpr double kPowerScale = 1e-2;
constexpr double kVmagScale = 0.1;
constexpr double kKclScale = 10.0;

// valve-referred Thevenin source coefficient: line-line RMS, sine reference
cplx grid_source(const GridParams& g, double a) {
    const double mag = (g.v_g_kv / a) * std::sqrt(2.0 / 3.0) / 2.0;
    const double ph = (g.v_g_deg - 90.0) * std::numbers::pi / 180.0;
    return mag * std::exp(cplx(0.0, ph));
}

// valve-referred grid impedance at harmonic h (transformer leakage excluded)
cplx grid_z(const GridParams& g, double a, double w1, int h) {
    return (g.R_g + cplx(0.0, h * w1) * g.L_g) / (a * a);
}

struct Layout {
    int n;
    std::vector<int> flow;      // h >= 1 flowing current orders
    std::vector<int> bus;       // bus ripple orders
    int per_end;
    int dim;

    explicit Layout(const SystemParams& p) : n(p.n) {
        for (int h = 1; h <= n; ++h)
            if (current_order_flows(h))
                flow.push_back(h);
        for (int h = 1; h <= n; ++h)
            if (bus_order_ripples(h))
                bus.push_back(h);
        per_end = 4 + 1 + 2 * static_cast<int>(flow.size()) + 1 + 2 * n;
        dim = 2 * per_end + 2 * static_cast<int>(bus.size());
    }

    int off_m(int e, int g) const { return e * per_end + 2 * (g - 1); }
    int off_i0(int e) const { return e * per_end + 4; }
    int off_i(int e, int h) const {
        for (size_t q = 0; q < flow.size(); ++q)
            if (flow[q] == h)
                return e * per_end + 5 + 2 * static_cast<int>(q);
        return -1;
    }
    int off_v0(int e) const { return e * per_end + 5 + 2 * static_cast<int>(flow.size()); }
    int off_v(int e, int h) const { return off_v0(e) + 1 + 2 * (h - 1); }
    int off_vdc(int h) const {
        for (size_t q = 0; q < bus.size(); ++q)
            if (bus[q] == h)
                return 2 * per_end + 2 * static_cast<int>(q);
        return -1;
    }
};

// one equation row (complex pair or single real) written into r and J
struct Assembler {
    Eigen::VectorXd* r = nullptr;
    Eigen::MatrixXd* J = nullptr;
    int row = 0;
    bool real_row = false;
    double scale = 1.0;

    void value(cplx val) {
        if (r) {
            (*r)(row) = scale * val.real();
            if (!real_row)
                (*r)(row + 1) = scale * val.imag();
        }
    }
    // complex unknown at column col: d(eq)/dz = A, d(eq)/dconj(z) = B
    void addC(int col, cplx A, cplx B) {
        if (!J)
            return;
        const cplx sum = A + B, dif = A - B;
        (*J)(row, col) += scale * sum.real();
        (*J)(row, col + 1) += -scale * dif.imag();
        if (!real_row) {
            (*J)(row + 1, col) += scale * sum.imag();
            (*J)(row + 1, col + 1) += scale * dif.real();
        }
    }
    void addR(int col, cplx D) {
        if (!J)
            return;
        (*J)(row, col) += scale * D.real();
        if (!real_row)
            (*J)(row + 1, col) += scale * D.imag();
    }
    int advance() { return row + (real_row ? 1 : 2); }
};

struct EndWork {
    Eigen::VectorXcd M, I, V;   // two-sided, length 2n+1
    Eigen::VectorXcd MV, MI;
    cplx vg;                    // valve-referred source coefficient
    cplx zg1;                   // grid impedance at fundamental, valve side
    cplx vpcc;                  // fundamental PCC coefficient, valve side
};

cplx side(const Eigen::VectorXcd& two, int n, int k) {
    if (k < -n || k > n)
        return 0.0;
    return two(k + n);
}

void evaluate(const SteadyState& st, const SystemParams& p, const Layout& lay,
              Eigen::VectorXd* r, Eigen::MatrixXd* J) {
    const int n = lay.n;
    const double w1 = p.omega_1();
    const double VDC = p.references.v_dc_ref;
    const double LT = p.L_T();
    const double a = p.transformer.a;

    for (int e = 0; e < 2; ++e)
        if (st.end(e).m.n != n || st.end(e).i.n != n || st.end(e).v.n != n)
            throw std::invalid_argument("steady-state candidate order differs from params.n");

    EndWork w[2];
    for (int e = 0; e < 2; ++e) {
        const EndSteady& es = st.end(e);
        w[e].M = es.m.coeffs;
        w[e].I = es.i.coeffs;
        w[e].V = es.v.coeffs;
        HarmonicVector mh = es.m;
        Eigen::MatrixXcd T = toeplitz(mh).entries;
        w[e].MV = T * w[e].V;
        w[e].MI = T * w[e].I;
        w[e].vg = grid_source(p.grid(e), a);
        w[e].zg1 = grid_z(p.grid(e), a, w1, 1);
        w[e].vpcc = w[e].vg + 2.0 * w[e].zg1 * side(w[e].I, n, 1);
    }

    Assembler as;
    as.r = r;
    as.J = J;
    as.row = 0;

    for (int e = 0; e < 2; ++e) {
        const MmcParams& mmc = p.mmc(e);
        const EndWork& ew = w[e];
        auto M_at = [&](int k) { return side(ew.M, n, k); };
        auto I_at = [&](int k) { return side(ew.I, n, k); };
        auto V_at = [&](int k) { return side(ew.V, n, k); };

        // arm KVL rows
        for (int h = 0; h <= n; ++h) {
            if (!current_order_flows(h))
                continue;
            as.real_row = (h == 0);
            as.scale = 1.0;
            const cplx zarm = mmc.L * cplx(0.0, h * w1) + mmc.R;
            cplx val = zarm * I_at(h) + side(ew.MV, n, h);
            cplx zser = 0.0;
            if (h % 2 == 1) {   // grid-coupled row
                zser = grid_z(p.grid(e), a, w1, h) + cplx(0.0, h * w1) * LT;
                val += (h == 1 ? ew.vg : 0.0) + zser * 2.0 * I_at(h);
            }
            if (h == 0)
                val -= 0.5 * VDC;
            if (bus_order_ripples(h))
                val -= 0.5 * side(st.end(0).v_dc.coeffs, n, h);
            as.value(val);
            if (J) {
                for (int g = 1; g <= 2; ++g)
                    as.addC(lay.off_m(e, g), V_at(h - g), V_at(h + g));
                for (int g = 1; g <= n; ++g)
                    as.addC(lay.off_v(e, g), M_at(h - g), M_at(h + g));
                as.addR(lay.off_v0(e), M_at(h));
                if (h == 0)
                    as.addR(lay.off_i0(e), zarm);
                else if (lay.off_i(e, h) >= 0)
                    as.addC(lay.off_i(e, h), zarm + 2.0 * zser, 0.0);
                if (bus_order_ripples(h))
                    as.addC(lay.off_vdc(h), -0.5, 0.0);
            }
            as.row = as.advance();
        }

        // capacitor rows
        for (int h = 0; h <= n; ++h) {
            as.real_row = (h == 0);
            as.scale = kCapScale;
            const cplx yc = mmc.C() * cplx(0.0, h * w1);
            as.value(yc * V_at(h) - side(ew.MI, n, h));
            if (J) {
                for (int g = 1; g <= 2; ++g)
                    as.addC(lay.off_m(e, g), -I_at(h - g), -I_at(h + g));
                for (int g : lay.flow)
                    as.addC(lay.off_i(e, g), -M_at(h - g), -M_at(h + g));
                as.addR(lay.off_i0(e), -M_at(h));
                if (h >= 1)
                    as.addC(lay.off_v(e, h), yc, 0.0);
            }
            as.row = as.advance();
        }

        // circulating-current constraint
        as.real_row = false;
        as.scale = kCccScale;
        if (st.ccc_mode == CccMode::ccsc) {
            as.value(I_at(2));
            if (J)
                as.addC(lay.off_i(e, 2), 1.0, 0.0);
        } else {
            as.value(V_at(2));
            if (J)
                as.addC(lay.off_v(e, 2), 1.0, 0.0);
        }
        as.row = as.advance();

        // outer-loop constraints at the PCC
        if (e == 1) {
            as.real_row = false;
            as.scale = kPowerScale;
            const cplx S = 12.0 * ew.vpcc * std::conj(I_at(1));
            as.value(S - cplx(p.references.P_s_ref, p.references.Q_ref_se));
            if (J)
                as.addC(lay.off_i(e, 1), 24.0 * ew.zg1 * std::conj(I_at(1)),
                        12.0 * ew.vpcc);
            as.row = as.advance();
        } else {
            as.real_row = true;
            as.scale = kVmagScale;
            const double vb1 = (p.V_acb / a) * std::sqrt(2.0 / 3.0) / 2.0;
            const double mag = std::abs(ew.vpcc);
            as.value(mag - p.references.v_ac_ref_pu * vb1);
            if (J && mag > 0.0) {
                const cplx alpha = 2.0 * ew.zg1;
                const cplx wbar = std::conj(ew.vpcc) / mag;
                const int col = lay.off_i(e, 1);
                (*J)(as.row, col) += as.scale * (wbar * alpha).real();
                (*J)(as.row, col + 1) += as.scale * (wbar * alpha * cplx(0, 1)).real();
            }
            as.row = as.advance();
        }
    }

    // bus KCL: DC power balance and shared ripple orders
    as.real_row = true;
    as.scale = kKclScale;
    as.value(side(w[0].I, n, 0) + side(w[1].I, n, 0));
    if (J) {
        as.addR(lay.off_i0(0), 1.0);
        as.addR(lay.off_i0(1), 1.0);
    }
    as.row = as.advance();
    for (int h : lay.bus) {
        as.real_row = false;
        as.scale = kKclScale;
        as.value(side(w[0].I, n, h) + side(w[1].I, n, h));
        if (J) {
            as.addC(lay.off_i(0, h), 1.0, 0.0);
            as.addC(lay.off_i(1, h), 1.0, 0.0);
        }
        as.row = as.advance();
    }
}

}  // namespace

Eigen::VectorXd residuals(const SteadyState& candidate, const SystemParams& params) {
    Layout lay(params);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(lay.dim);
    evaluate(candidate, params, lay, &r, nullptr);
    return r;
}

Eigen::MatrixXd residual_jacobian(const SteadyState& candidate, const SystemParams& params) {
    Layout lay(params);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(lay.dim, lay.dim);
    evaluate(candidate, params, lay, nullptr, &J);
    return J;
}

Eigen::VectorXd pack_unknowns(const SteadyState& state, const SystemParams& params) {
    Layout lay(params);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(lay.dim);
    for (int e = 0; e < 2; ++e) {
        const EndSteady& es = state.end(e);
        for (int g = 1; g <= 2; ++g) {
            x(lay.off_m(e, g)) = es.m.at(g).real();
            x(lay.off_m(e, g) + 1) = es.m.at(g).imag();
        }
        x(lay.off_i0(e)) = es.i.at(0).real();
        for (int h : lay.flow) {
            x(lay.off_i(e, h)) = es.i.at(h).real();
            x(lay.off_i(e, h) + 1) = es.i.at(h).imag();
        }
        x(lay.off_v0(e)) = es.v.at(0).real();
        for (int h = 1; h <= lay.n; ++h) {
            x(lay.off_v(e, h)) = es.v.at(h).real();
            x(lay.off_v(e, h) + 1) = es.v.at(h).imag();
        }
    }
    for (int h : lay.bus) {
        x(lay.off_vdc(h)) = state.end(0).v_dc.at(h).real();
        x(lay.off_vdc(h) + 1) = state.end(0).v_dc.at(h).imag();
    }
    return x;
}

SteadyState unpack_unknowns(const Eigen::VectorXd& x, const SystemParams& params) {
    Layout lay(params);
    const int n = lay.n;
    SteadyState st;
    st.ccc_mode = params.ccc_mode;
    HarmonicVector vdc(n, "V", true);
    vdc.at(0) = params.references.v_dc_ref;
    for (int h : lay.bus) {
        vdc.at(h) = cplx(x(lay.off_vdc(h)), x(lay.off_vdc(h) + 1));
        vdc.at(-h) = std::conj(vdc.at(h));
    }
    for (int e = 0; e < 2; ++e) {
        EndSteady& es = st.end(e);
        std::vector<cplx> mpos{0.5};
        for (int g = 1; g <= 2; ++g)
            mpos.push_back(cplx(x(lay.off_m(e, g)), x(lay.off_m(e, g) + 1)));
        es.m = HarmonicVector::from_positive(mpos, n);
        std::vector<cplx> ipos(n + 1, 0.0);
        ipos[0] = x(lay.off_i0(e));
        for (int h : lay.flow)
            ipos[h] = cplx(x(lay.off_i(e, h)), x(lay.off_i(e, h) + 1));
        es.i = HarmonicVector::from_positive(ipos, n, "A");
        std::vector<cplx> vpos(n + 1, 0.0);
        vpos[0] = x(lay.off_v0(e));
        for (int h = 1; h <= n; ++h)
            vpos[h] = cplx(x(lay.off_v(e, h)), x(lay.off_v(e, h) + 1));
        es.v = HarmonicVector::from_positive(vpos, n, "V");
        const cplx vpcc = grid_source(params.grid(e), params.transformer.a) +
                          2.0 * grid_z(params.grid(e), params.transformer.a,
                                       params.omega_1(), 1) * es.i.at(1);
        es.v_v = HarmonicVector::from_positive({0.0, vpcc}, n, "V");
        es.v_dc = vdc;
    }
    return st;
}

SteadyState initial_guess(const SystemParams& params) {
    const int n = params.n;
    const double VDC = params.references.v_dc_ref;
    const double w1 = params.omega_1();
    SteadyState st;
    st.ccc_mode = params.ccc_mode;
    HarmonicVector vdc(n, "V", true);
    vdc.at(0) = VDC;
    for (int e = 0; e < 2; ++e) {
        EndSteady& es = st.end(e);
        const double sgn = (e == 0) ? -1.0 : 1.0;
        const cplx vg = grid_source(params.grid(e), params.transformer.a);
        const double P = params.references.P_s_ref;
        const double Q = (e == 1) ? params.references.Q_ref_se : 0.0;
        const double i0 = (VDC > 0.0) ? sgn * P / (3.0 * VDC) : 0.0;
        cplx i1 = 0.0;
        if (std::abs(vg) > 0.0)
            i1 = std::conj(cplx(sgn * P, Q) / (12.0 * vg));
        const cplx ztot = grid_z(params.grid(e), params.transformer.a, w1, 1) +
                          cplx(0.0, w1) * params.L_T();
        const cplx m1 = (VDC > 0.0) ? -(vg + ztot * 2.0 * i1) / VDC : 0.0;
        const cplx v1 = (0.5 * i1 + m1 * i0) / (params.mmc(e).C() * cplx(0.0, w1));
        es.m = HarmonicVector::from_positive({0.5, m1, 0.0}, n);
        std::vector<cplx> ipos(n + 1, 0.0);
        ipos[0] = i0;
        ipos[1] = i1;
        es.i = HarmonicVector::from_positive(ipos, n, "A");
        std::vector<cplx> vpos(n + 1, 0.0);
        vpos[0] = VDC;
        vpos[1] = v1;
        es.v = HarmonicVector::from_positive(vpos, n, "V");
        es.v_v = HarmonicVector::from_positive({0.0, vg}, n, "V");
        es.v_dc = vdc;
    }
    return st;
}

SteadyState solve_steady_state(const SystemParams& params,
                               const std::optional<SteadyState>& initial) {
    Layout lay(params);
    SteadyState guess = initial ? *initial : initial_guess(params);
    Eigen::VectorXd x = pack_unknowns(guess, params);
    const double tol = 1e-10;
    const int maxit = 50;
    double norm = 0.0;
    for (int it = 1; it <= maxit; ++it) {
        SteadyState cur = unpack_unknowns(x, params);
        Eigen::VectorXd r = residuals(cur, params);
        norm = r.lpNorm<Eigen::Infinity>();
        if (!std::isfinite(norm))
            throw SolveError("steady-state residual not finite", norm);
        if (norm <= tol) {
            cur.residual_norm = norm;
            cur.iterations = it;
            return cur;
        }
        Eigen::MatrixXd J = residual_jacobian(cur, params);
        Eigen::VectorXd step = J.partialPivLu().solve(r);
        if (!step.allFinite())
            throw SolveError("singular Jacobian in steady-state solve", norm);
        double lam = 1.0;
        while (lam > 1e-4) {
            Eigen::VectorXd xn = x - lam * step;
            Eigen::VectorXd rn = residuals(unpack_unknowns(xn, params), params);
            if (rn.lpNorm<Eigen::Infinity>() < norm || lam < 2e-4)
                break;
            lam *= 0.5;
        }
        x -= lam * step;
    }
    throw SolveError("steady-state Newton did not converge", norm);
}

}  // namespace mmcim
