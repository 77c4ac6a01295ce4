#include "mmcim/linearization.hpp"

#include <cmath>
#include <functional>
#include <numbers>

namespace mmcim {

namespace {

constexpr double kPi = std::numbers::pi;

// half the output-delay phase shift is compensated in the command frames,
// matching the simulated controller's half-advance
constexpr double kDelayCompensation = 0.5;

cplx jc(double x) { return cplx(0.0, x); }

// measurement and command bases shared by the operating point and the chain
struct Bases {
    double w1, VDC, A, VB, IB, VBV, IBV, VCS;
};

Bases bases_of(const SystemParams& p) {
    Bases b;
    b.w1 = p.omega_1();
    b.VDC = p.references.v_dc_ref;
    b.A = p.transformer.a;
    b.VB = p.V_acb * std::sqrt(2.0 / 3.0);
    b.IB = (2.0 / 3.0) * p.S_b / b.VB;
    b.VBV = b.VB / b.A;
    b.IBV = (2.0 / 3.0) * p.S_b / b.VBV;
    b.VCS = p.V_dcb / 2.0;
    return b;
}

// integrator poles sitting exactly on a lattice frequency are displaced so
// sweeps stepping through 0 Hz keep evaluating
cplx displaced(cplx u) { return std::abs(u) < 1e-12 ? cplx(1e-9, 0.0) : u; }

cplx pi_at(const PiParams& pi, cplx u) {
    u = displaced(u);
    return pi.Kp + 1.0 / (pi.Ti * u);
}

int mod_sigma(int k) { return ((2 - k) % 3 + 3) % 3; }

using Mat = Eigen::MatrixXcd;

// four-channel linear dependence of a chain signal on the perturbation inputs
struct Quad {
    Mat i, v, dc, cap;
    explicit Quad(int nr)
        : i(Mat::Zero(nr, nr)), v(Mat::Zero(nr, nr)), dc(Mat::Zero(nr, nr)),
          cap(Mat::Zero(nr, nr)) {}
};

Quad operator+(const Quad& a, const Quad& b) {
    Quad r(static_cast<int>(a.i.rows()));
    r.i = a.i + b.i;
    r.v = a.v + b.v;
    r.dc = a.dc + b.dc;
    r.cap = a.cap + b.cap;
    return r;
}

Quad operator-(const Quad& a, const Quad& b) {
    Quad r(static_cast<int>(a.i.rows()));
    r.i = a.i - b.i;
    r.v = a.v - b.v;
    r.dc = a.dc - b.dc;
    r.cap = a.cap - b.cap;
    return r;
}

Quad lmul(const Mat& m, const Quad& q) {
    Quad r(static_cast<int>(q.i.rows()));
    r.i = m * q.i;
    r.v = m * q.v;
    r.dc = m * q.dc;
    r.cap = m * q.cap;
    return r;
}

Quad lmul(cplx c, const Quad& q) {
    Quad r(static_cast<int>(q.i.rows()));
    r.i = c * q.i;
    r.v = c * q.v;
    r.dc = c * q.dc;
    r.cap = c * q.cap;
    return r;
}

// abc-row <-> dq-row channel operators for frame angle mu*theta; z picks
// sigma = 2 rows, zt picks sigma = 1 rows, shifts leaving the lattice drop
void park_ops(int mu, double th0, int N, Mat& Pz, Mat& Pzt, Mat& Qz, Mat& Qzt) {
    const int nr = 2 * N + 1;
    Pz = Mat::Zero(nr, nr);
    Pzt = Mat::Zero(nr, nr);
    Qz = Mat::Zero(nr, nr);
    Qzt = Mat::Zero(nr, nr);
    const cplx rot = std::polar(1.0, mu * th0);
    for (int r = -N; r <= N; ++r) {
        if (mod_sigma(r) == 2 && std::abs(r - mu) <= N)
            Pz(r - mu + N, r + N) = 2.0 / rot;
        if (mod_sigma(r) == 1 && std::abs(r + mu) <= N)
            Pzt(r + mu + N, r + N) = 2.0 * rot;
    }
    for (int m = -N; m <= N; ++m) {
        if (std::abs(m + mu) <= N)
            Qz(m + mu + N, m + N) = 0.5 * rot;
        if (std::abs(m - mu) <= N)
            Qzt(m - mu + N, m + N) = 0.5 / rot;
    }
}

Mat law_diag(const std::function<cplx(cplx)>& fn, cplx s, double w1, int N) {
    const int nr = 2 * N + 1;
    Mat d = Mat::Zero(nr, nr);
    for (int k = -N; k <= N; ++k)
        d(k + N, k + N) = fn(s + jc(k * w1));
    return d;
}

}  // namespace

int lattice_sigma(int k) { return mod_sigma(k); }
bool lattice_dm(int k) { return ((k % 2) + 2) % 2 == 0; }
bool lattice_ac_coupled(int k) { return lattice_dm(k) && mod_sigma(k) != 0; }
bool lattice_blocked(int k) { return lattice_dm(k) && mod_sigma(k) == 0; }

OperatingPoint operating_point(const SteadyState& state, const SystemParams& params,
                               int end) {
    const Bases b = bases_of(params);
    const EndSteady& es = state.end(end);
    const GridParams& g = params.grid(end);
    const double Td = params.T_d(end);
    const cplx I1 = es.i.at(1);
    const cplx vg = (g.v_g_kv / b.A) * std::sqrt(2.0 / 3.0) / 2.0 *
                    std::polar(1.0, (g.v_g_deg - 90.0) * kPi / 180.0);
    const cplx zg1 = cplx(g.R_g, b.w1 * g.L_g) / (b.A * b.A);
    const cplx vpcc1 = vg + 2.0 * zg1 * I1;
    OperatingPoint op;
    op.theta0 = std::arg(vpcc1);
    const cplx rot0 = std::polar(1.0, -op.theta0);
    op.i_dq0 = (4.0 * I1 / b.A) / b.IB * rot0;
    op.v_dq0 = (2.0 * vpcc1 * b.A) / b.VB * rot0;
    const double gamma = kDelayCompensation;
    const cplx e_appl = -2.0 * es.m.at(1) * b.VDC / b.VBV * rot0;
    op.e_cmd0 = e_appl * std::polar(1.0, (1.0 - gamma) * b.w1 * Td);
    const cplx u_appl =
        2.0 * std::conj(-es.m.at(2) * b.VDC / b.VCS) * std::polar(1.0, 2.0 * op.theta0);
    op.u_cmd0 = u_appl * std::polar(1.0, -2.0 * (1.0 - gamma) * b.w1 * Td);
    op.ic_dq0 = 2.0 * std::conj(es.i.at(2)) * std::polar(1.0, 2.0 * op.theta0) / b.IB;
    op.v_d0 = std::abs(op.v_dq0);
    op.p0 = (op.v_dq0 * std::conj(op.i_dq0)).real();
    op.q0 = (op.v_dq0 * std::conj(op.i_dq0)).imag();
    op.v_mag0 = op.v_d0;
    return op;
}

cplx pll_sensitivity(const SteadyState& state, const SystemParams& params, cplx s,
                     int end) {
    const OperatingPoint op = operating_point(state, params, end);
    const cplx u = displaced(s);
    const cplx h = pi_at(params.controllers.h_PLL, u);
    const cplx den = u + h * op.v_d0;
    if (std::abs(den) < 1e-30)
        throw AnalysisError("PLL loop singular at the requested frequency");
    return h / den;
}

ControlSensitivities control_sensitivities(const SteadyState& state,
                                           const SystemParams& params, int end, cplx s) {
    const int N = params.n_ptb;
    const int nr = 2 * N + 1;
    const Bases b = bases_of(params);
    const OperatingPoint op = operating_point(state, params, end);
    const GridParams& g = params.grid(end);
    const double Td = params.T_d(end);
    const Controllers& K = params.controllers;

    auto Fpq = [&](cplx u) { return pi_at(K.h_PQ, u); };
    auto Fvdc = [&](cplx u) { return pi_at(K.h_vdc, u); };
    auto Fi1 = [&](cplx u) { return pi_at(K.h_i1, u); };
    auto Fi2 = [&](cplx u) { return pi_at(K.h_i2, u); };
    auto Fov = [&](cplx u) { return pi_at(K.h_ov, u); };
    auto Fpll = [&](cplx u) {
        u = displaced(u);
        const cplx h = pi_at(K.h_PLL, u);
        return h / (u + h * op.v_d0);
    };

    Mat Pz1, Pzt1, Qz1, Qzt1, Pzc, Pztc, Qzc, Qztc;
    park_ops(1, op.theta0, N, Pz1, Pzt1, Qz1, Qzt1);
    park_ops(-2, op.theta0, N, Pzc, Pztc, Qzc, Qztc);
    Mat DMm = Mat::Zero(nr, nr), CMm = Mat::Zero(nr, nr);
    for (int k = -N; k <= N; ++k)
        (lattice_dm(k) ? DMm : CMm)(k + N, k + N) = 1.0;

    Quad di(nr), vpcc(nr), dvdc(nr), dv(nr);
    di.i = Mat::Identity(nr, nr);
    vpcc.v = Mat::Identity(nr, nr);
    dvdc.dc = Mat::Identity(nr, nr);
    dv.cap = Mat::Identity(nr, nr);

    const Quad th =
        lmul(law_diag(Fpll, s, b.w1, N) * ((b.A / b.VB) * (Pz1 - Pzt1) / jc(2.0)), vpcc);
    const Quad iz =
        lmul((2.0 / (b.A * b.IB)) * (Pz1 * DMm), di) + lmul(jc(-1.0) * op.i_dq0, th);
    const Quad izt = lmul((2.0 / (b.A * b.IB)) * (Pzt1 * DMm), di) +
                     lmul(jc(1.0) * std::conj(op.i_dq0), th);
    const Quad vz =
        lmul((b.A / b.VB) * Pz1, vpcc) + lmul(jc(-1.0) * op.v_dq0, th);
    const Quad vzt =
        lmul((b.A / b.VB) * Pzt1, vpcc) + lmul(jc(1.0) * std::conj(op.v_dq0), th);
    const Quad v_d = lmul(0.5, vz + vzt);
    const Quad v_q = lmul(1.0 / jc(2.0), vz - vzt);
    const Quad i_d = lmul(0.5, iz + izt);
    const Quad i_q = lmul(1.0 / jc(2.0), iz - izt);
    const double id0 = op.i_dq0.real(), iq0 = op.i_dq0.imag();

    // reactive-power deviation in the PLL frame (vq0 = 0 at the orbit)
    const Quad dq_ = lmul(id0, v_q) - lmul(op.v_d0, i_q) - lmul(iq0, v_d);
    Quad isd(nr), isq(nr);
    if (end == 1) {
        const Quad dp = lmul(op.v_d0, i_d) + lmul(id0, v_d) + lmul(iq0, v_q);
        isd = lmul(-1.0, lmul(law_diag(Fpq, s, b.w1, N), dp));
        isq = lmul(law_diag(Fpq, s, b.w1, N), dq_);
    } else {
        isd = lmul(law_diag(Fvdc, s, b.w1, N) / b.VDC, dvdc);
        // the magnitude loop reads |v| = v_d at the operating frame
        isq = lmul(law_diag(Fpq, s, b.w1, N), v_d);
    }
    const Quad isz = isd + lmul(jc(1.0), isq);
    const Quad iszt = isd - lmul(jc(1.0), isq);
    Quad ez = lmul(law_diag(Fi1, s, b.w1, N), isz - iz);
    Quad ezt = lmul(law_diag(Fi1, s, b.w1, N), iszt - izt);

    const double gamma = kDelayCompensation;
    if (Td > 0.0) {
        const cplx rot_e = std::polar(1.0, gamma * b.w1 * Td);
        ez = lmul(rot_e, ez);
        ezt = lmul(std::conj(rot_e), ezt);
    }

    // circulating-current measurement in the -2 theta frame, on the base of
    // the fundamental current
    const double icb = b.IBV / b.IB;
    const Quad icz = lmul(icb, lmul((1.0 / b.IBV) * (Pzc * CMm), di) +
                                   lmul(jc(2.0) * op.ic_dq0, th));
    const Quad iczt = lmul(icb, lmul((1.0 / b.IBV) * (Pztc * CMm), di) +
                                    lmul(jc(-2.0) * std::conj(op.ic_dq0), th));
    Quad uz(nr), uzt(nr);
    if (params.ccc_mode == CccMode::fccc) {
        const double km = params.scaling.k_m;
        const Quad v2z = lmul((km * 2.0 / b.VDC) * (Pzc * CMm), dv);
        const Quad v2zt = lmul((km * 2.0 / b.VDC) * (Pztc * CMm), dv);
        const Quad icsz = lmul(-1.0, lmul(law_diag(Fov, s, b.w1, N), v2z));
        const Quad icszt = lmul(-1.0, lmul(law_diag(Fov, s, b.w1, N), v2zt));
        uz = lmul(law_diag(Fi2, s, b.w1, N), icsz - icz);
        uzt = lmul(law_diag(Fi2, s, b.w1, N), icszt - iczt);
    } else {
        uz = lmul(-1.0, lmul(law_diag(Fi2, s, b.w1, N), icz));
        uzt = lmul(-1.0, lmul(law_diag(Fi2, s, b.w1, N), iczt));
    }
    if (Td > 0.0) {
        const cplx rot_u = std::polar(1.0, -2.0 * gamma * b.w1 * Td);
        uz = lmul(rot_u, uz);
        uzt = lmul(std::conj(rot_u), uzt);
    }

    // inverse Park with output frame wobble around the applied command point
    const cplx ec0 = op.e_cmd0 * std::polar(1.0, -gamma * b.w1 * Td);
    const cplx uc0 = op.u_cmd0 * std::polar(1.0, 2.0 * gamma * b.w1 * Td);
    const Quad e_eff_z = ez + lmul(jc(1.0) * ec0, th);
    const Quad e_eff_zt = ezt + lmul(jc(-1.0) * std::conj(ec0), th);
    const Quad u_eff_z = uz + lmul(jc(-2.0) * uc0, th);
    const Quad u_eff_zt = uzt + lmul(jc(2.0) * std::conj(uc0), th);
    Quad vcmd = lmul(-b.VBV, lmul(Qz1, e_eff_z) + lmul(Qzt1, e_eff_zt)) +
                lmul(-b.VCS, lmul(Qzc, u_eff_z) + lmul(Qztc, u_eff_zt));
    if (Td > 0.0) {
        Mat dly = Mat::Zero(nr, nr);
        for (int k = -N; k <= N; ++k)
            dly(k + N, k + N) = std::exp(-(s + jc(k * b.w1)) * Td);
        vcmd = lmul(dly, vcmd);
    }
    const Quad m = lmul(1.0 / b.VDC, vcmd);

    ControlSensitivities cs;
    cs.s = s;
    cs.end = end;
    cs.ccc_mode = params.ccc_mode;
    auto wrap = [N](const Mat& mat) {
        HarmonicOperator o;
        o.n = N;
        o.kind = OperatorKind::General;
        o.entries = mat;
        return o;
    };
    cs.B_i = wrap(m.i);
    cs.B_v = wrap(m.v);
    cs.B_vdc = wrap(m.dc);
    cs.B_vcap = wrap(m.cap);
    return cs;
}

}  // namespace mmcim
