#include "mmcim/timesim.hpp"

#include "mmcim/linearization.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>

namespace mmcim {

namespace {

constexpr double kPi = 3.141592653589793238462643;
const cplx kAlpha = std::polar(1.0, 2.0 * kPi / 3.0);

using Vec3 = std::array<double, 3>;

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }

// amplitude-invariant dq (complex d + jq) in frame angle theta_f
cplx park(const double* abc, double theta_f) {
    cplx psi = (2.0 / 3.0) * (abc[0] + kAlpha * abc[1] + kAlpha * kAlpha * abc[2]);
    return psi * std::polar(1.0, -theta_f);
}

// inverse-transform phase pattern a, b, c
Vec3 inv_park(cplx dq, double theta_f) {
    cplx r = dq * std::polar(1.0, theta_f);
    return {r.real(), (r * kAlpha * kAlpha).real(), (r * kAlpha).real()};
}

struct Gains {
    double kp = 0.0, ki = 0.0;
};

Gains from_pi(const PiParams& pi) { return {pi.Kp, 1.0 / pi.Ti}; }

}  // namespace

// runtime constants and controller state bookkeeping for one converter end
struct Simulator::EndRt {
    int end = 0;
    CccMode mode = CccMode::ccsc;
    double Lg = 0.0, Rg = 0.0, Td = 0.0;
    double L = 0.0, R = 0.0, C = 0.0;

    std::vector<cplx> M, I, V;  // one-sided steady harmonics
    cplx vg;                    // valve-referred two-sided source phasor
    double th0 = 0.0;
    cplx i_dq0, v_dq0, e_cmd0, u_cmd0, ic_dq0;
    double p_ref = 0.0, q_ref = 0.0, vmag_ref = 0.0;

    Gains pll, pq, vdc, i1, i2, ov;

    bool inj_on = false;
    double inj_amp = 0.0, inj_w = 0.0;

    int nd = 0;  // delay buffer depth in steps
    std::vector<Vec3> buf_p, buf_n;
};

namespace {

// per-phase waveform of one-sided harmonic list with the steady sequence
// pattern sigma_h = (-h) mod 3; flip negates odd orders (lower arms)
Vec3 harm_eval(const std::vector<cplx>& X, double w1, double t, bool flip = false) {
    Vec3 out{X[0].real(), X[0].real(), X[0].real()};
    const int n = static_cast<int>(X.size()) - 1;
    for (int h = 1; h <= n; ++h) {
        cplx Xh = X[h] * ((flip && h % 2 == 1) ? -1.0 : 1.0);
        const int sig = ((-h) % 3 + 3) % 3;
        const cplx rot = Xh * std::polar(1.0, h * w1 * t);
        for (int p = 0; p < 3; ++p)
            out[p] += 2.0 * (rot * std::polar(1.0, sig * 2.0 * kPi / 3.0 * p)).real();
    }
    return out;
}

// half the delay phase shift is compensated in the command frame rotation
constexpr double kDelayGamma = 0.5;

}  // namespace

struct SimShared {
    double w1, VDC, A, LT, VB, IB, VBV, VCS;
};

namespace {

SimShared shared_of(const SystemParams& p) {
    SimShared sh;
    sh.w1 = p.omega_1();
    sh.VDC = p.references.v_dc_ref;
    sh.A = p.transformer.a;
    sh.LT = p.L_T();
    sh.VB = p.V_acb * std::sqrt(2.0 / 3.0);
    sh.IB = (2.0 / 3.0) * p.S_b / sh.VB;
    sh.VBV = sh.VB / sh.A;
    sh.VCS = p.V_dcb / 2.0;
    return sh;
}

Vec3 source_wave(const cplx vg, double w1, double t) {
    Vec3 out;
    const cplx r = 2.0 * vg * std::polar(1.0, w1 * t);
    out[0] = r.real();
    out[1] = (r * kAlpha * kAlpha).real();
    out[2] = (r * kAlpha).real();
    return out;
}

Vec3 injection_wave(const Simulator::EndRt& e, double t) {
    if (!e.inj_on)
        return {0.0, 0.0, 0.0};
    Vec3 out;
    const cplx r = std::polar(e.inj_amp, e.inj_w * t);
    out[0] = r.real();
    out[1] = (r * kAlpha).real();  // NS set: phase b leads by 120 degrees
    out[2] = (r * kAlpha * kAlpha).real();
    return out;
}

struct Meas {
    double theta;
    cplx i_dq, v_dq, ic_dq, v2_dq;
};

Meas measurements(const Simulator::EndRt& e, const SimShared& sh, const double* y,
                  double t, const Vec3* diac_dt) {
    Meas m;
    m.theta = y[12];
    double ig[3] = {y[3] / sh.A, y[4] / sh.A, y[5] / sh.A};
    m.i_dq = park(ig, m.theta) / sh.IB;
    Vec3 vsrc = source_wave(e.vg, sh.w1, t);
    double vpcc[3];
    for (int p = 0; p < 3; ++p) {
        vpcc[p] = vsrc[p] * sh.A + (e.Rg / sh.A) * y[3 + p];
        if (e.Lg > 0.0 && diac_dt)
            vpcc[p] += (e.Lg / sh.A) * (*diac_dt)[p];
    }
    m.v_dq = park(vpcc, m.theta) / sh.VB;
    m.ic_dq = park(y, -2.0 * m.theta) / sh.IB;
    double vsum[3] = {y[6] + y[9], y[7] + y[10], y[8] + y[11]};
    m.v2_dq = park(vsum, -2.0 * m.theta) / sh.VDC;
    return m;
}

// undelayed insertion-index command (upper, lower) from current states
void command(const Simulator::EndRt& e, const SimShared& sh, const double* y, double t,
             double vdc, const Vec3* diac_dt, Vec3* mp, Vec3* mn) {
    const Meas ms = measurements(e, sh, y, t, diac_dt);
    double ed, eq;
    if (e.end == 1) {
        const double pw = (ms.v_dq * std::conj(ms.i_dq)).real();
        const double qw = ms.v_dq.imag() * ms.i_dq.real() - ms.v_dq.real() * ms.i_dq.imag();
        ed = e.pq.kp * (e.p_ref - pw) + y[14];
        eq = e.pq.kp * (qw - e.q_ref) + y[15];
    } else {
        // export-positive d current drains the bus: error reversed
        ed = e.vdc.kp * (vdc - sh.VDC) / sh.VDC + y[14];
        eq = e.pq.kp * (std::abs(ms.v_dq) - e.vmag_ref) + y[15];
    }
    const cplx istar(ed, eq);
    cplx e_dq = e.i1.kp * (istar - ms.i_dq) + cplx(y[16], y[17]);
    cplx icstar = 0.0;
    if (e.mode == CccMode::fccc)
        icstar = e.ov.kp * (-ms.v2_dq) + cplx(y[20], y[21]);
    cplx u_dq = e.i2.kp * (icstar - ms.ic_dq) + cplx(y[18], y[19]);
    if (e.Td > 0.0) {
        e_dq *= std::polar(1.0, kDelayGamma * sh.w1 * e.Td);
        u_dq *= std::polar(1.0, -2.0 * kDelayGamma * sh.w1 * e.Td);
    }
    const Vec3 e_abc = inv_park(e_dq, ms.theta);
    const Vec3 u_abc = inv_park(u_dq, -2.0 * ms.theta);
    for (int p = 0; p < 3; ++p) {
        (*mp)[p] = (0.5 * sh.VDC - sh.VBV * e_abc[p] - sh.VCS * u_abc[p]) / sh.VDC;
        (*mn)[p] = (0.5 * sh.VDC + sh.VBV * e_abc[p] - sh.VCS * u_abc[p]) / sh.VDC;
    }
}

void ctrl_deriv(const Simulator::EndRt& e, const SimShared& sh, const double* y, double t,
                double vdc, const Vec3* diac_dt, double* d) {
    const Meas ms = measurements(e, sh, y, t, diac_dt);
    d[12] = sh.w1 + e.pll.kp * ms.v_dq.imag() + y[13];
    d[13] = e.pll.ki * ms.v_dq.imag();
    double ed, eq;
    if (e.end == 1) {
        const double pw = (ms.v_dq * std::conj(ms.i_dq)).real();
        const double qw = ms.v_dq.imag() * ms.i_dq.real() - ms.v_dq.real() * ms.i_dq.imag();
        const double errd = e.p_ref - pw, errq = qw - e.q_ref;
        d[14] = e.pq.ki * errd;
        d[15] = e.pq.ki * errq;
        ed = e.pq.kp * errd + y[14];
        eq = e.pq.kp * errq + y[15];
    } else {
        const double errd = (vdc - sh.VDC) / sh.VDC;
        const double errq = std::abs(ms.v_dq) - e.vmag_ref;
        d[14] = e.vdc.ki * errd;
        d[15] = e.pq.ki * errq;
        ed = e.vdc.kp * errd + y[14];
        eq = e.pq.kp * errq + y[15];
    }
    const cplx istar(ed, eq);
    const cplx ie = istar - ms.i_dq;
    d[16] = e.i1.ki * ie.real();
    d[17] = e.i1.ki * ie.imag();
    cplx icstar = 0.0;
    if (e.mode == CccMode::fccc) {
        icstar = e.ov.kp * (-ms.v2_dq) + cplx(y[20], y[21]);
        d[20] = e.ov.ki * (-ms.v2_dq).real();
        d[21] = e.ov.ki * (-ms.v2_dq).imag();
    }
    const cplx ue = icstar - ms.ic_dq;
    d[18] = e.i2.ki * ue.real();
    d[19] = e.i2.ki * ue.imag();
}

// delayed command at stage offset delta; buffer slot k holds t - k*dt
void applied_m(const Simulator::EndRt& e, double delta, double dt, Vec3* mp, Vec3* mn) {
    const double off = e.nd - delta / dt;
    const int k0 = static_cast<int>(std::floor(off));
    const double frac = off - k0;
    if (frac < 1e-12) {
        *mp = e.buf_p[k0];
        *mn = e.buf_n[k0];
        return;
    }
    *mp = (1.0 - frac) * e.buf_p[k0] + frac * e.buf_p[k0 + 1];
    *mn = (1.0 - frac) * e.buf_n[k0] + frac * e.buf_n[k0 + 1];
}

}  // namespace

Simulator::Simulator(const SystemParams& params, const SimOptions& opts)
    : params_(params), opts_(opts) {
    SystemParams pinit = params;
    pinit.n = std::max(params.n, opts.init_order);
    steady_ = solve_steady_state(pinit);
    const SimShared sh = shared_of(params);
    const int n = pinit.n;
    ends_.resize(2);
    for (int e = 0; e < 2; ++e) {
        EndRt& er = ends_[e];
        er.end = e;
        er.mode = params.ccc_mode;
        er.Lg = params.grid(e).L_g;
        er.Rg = params.grid(e).R_g;
        er.Td = params.T_d(e);
        er.L = params.mmc(e).L;
        er.R = params.mmc(e).R;
        er.C = params.mmc(e).C();
        const EndSteady& es = steady_.end(e);
        for (int h = 0; h <= n; ++h) {
            er.M.push_back(es.m.at(h));
            er.I.push_back(es.i.at(h));
            er.V.push_back(es.v.at(h));
        }
        er.vg = (params.grid(e).v_g_kv / sh.A) * std::sqrt(2.0 / 3.0) / 2.0 *
                std::polar(1.0, (params.grid(e).v_g_deg - 90.0) * kPi / 180.0);
        const OperatingPoint op = operating_point(steady_, params, e);
        er.th0 = op.theta0;
        er.i_dq0 = op.i_dq0;
        er.v_dq0 = op.v_dq0;
        er.e_cmd0 = op.e_cmd0;
        er.u_cmd0 = op.u_cmd0;
        er.ic_dq0 = op.ic_dq0;
        er.p_ref = op.p0;
        er.q_ref = op.q0;
        er.vmag_ref = op.v_mag0;
        er.pll = from_pi(params.controllers.h_PLL);
        er.pq = from_pi(params.controllers.h_PQ);
        er.vdc = from_pi(params.controllers.h_vdc);
        er.i1 = from_pi(params.controllers.h_i1);
        er.i2 = from_pi(params.controllers.h_i2);
        er.ov = from_pi(params.controllers.h_ov);
        er.nd = static_cast<int>(std::lround(er.Td / opts.dt));
        if (er.nd > 0) {
            er.buf_p.resize(er.nd + 2);
            er.buf_n.resize(er.nd + 2);
            for (int k = 0; k < er.nd + 2; ++k) {
                const double tc = -k * opts.dt + er.Td;
                er.buf_p[k] = harm_eval(er.M, sh.w1, tc, false);
                er.buf_n[k] = harm_eval(er.M, sh.w1, tc, true);
            }
        }
    }
    // seed every state on the periodic orbit so the hold test starts settled
    y_.assign(44, 0.0);
    for (int e = 0; e < 2; ++e) {
        EndRt& er = ends_[e];
        double* y = y_.data() + 22 * e;
        std::vector<cplx> cm(er.I.size(), 0.0), dm(er.I.size(), 0.0);
        for (size_t h = 0; h < er.I.size(); ++h)
            (h % 2 == 0 ? cm : dm)[h] = er.I[h];
        const Vec3 ic = harm_eval(cm, sh.w1, 0.0);
        const Vec3 iac = harm_eval(dm, sh.w1, 0.0);
        const Vec3 vp = harm_eval(er.V, sh.w1, 0.0, false);
        const Vec3 vn = harm_eval(er.V, sh.w1, 0.0, true);
        for (int p = 0; p < 3; ++p) {
            y[p] = ic[p];
            y[3 + p] = 2.0 * iac[p];
            y[6 + p] = vp[p];
            y[9 + p] = vn[p];
        }
        y[12] = er.th0;
        y[14] = er.i_dq0.real();
        y[15] = er.i_dq0.imag();
        y[16] = er.e_cmd0.real();
        y[17] = er.e_cmd0.imag();
        y[18] = er.u_cmd0.real();
        y[19] = er.u_cmd0.imag();
        if (er.mode == CccMode::fccc) {
            y[20] = er.ic_dq0.real();
            y[21] = er.ic_dq0.imag();
        }
    }
}

Simulator::~Simulator() = default;

double Simulator::bus_voltage(double t, const double* y, double delta) const {
    const SimShared sh = shared_of(params_);
    double acc = 0.0;
    for (int e = 0; e < 2; ++e) {
        const EndRt& er = ends_[e];
        const double* ye = y + 22 * e;
        Vec3 mp, mn;
        if (er.nd > 0)
            applied_m(er, delta, opts_.dt, &mp, &mn);
        else
            command(er, sh, ye, t, sh.VDC, nullptr, &mp, &mn);
        const Vec3 ptb = injection_wave(er, t);
        for (int p = 0; p < 3; ++p)
            acc += mp[p] * ye[6 + p] + mn[p] * ye[9 + p] + 2.0 * ptb[p];
    }
    return acc / 6.0;
}

void Simulator::derivative(double t, const double* y, double delta, double* dy) const {
    const SimShared sh = shared_of(params_);
    Vec3 mp[2], mn[2];
    for (int e = 0; e < 2; ++e) {
        const EndRt& er = ends_[e];
        if (er.nd > 0)
            applied_m(er, delta, opts_.dt, &mp[e], &mn[e]);
        else
            command(er, sh, y + 22 * e, t, sh.VDC, nullptr, &mp[e], &mn[e]);
    }
    double vdc = 0.0;
    for (int e = 0; e < 2; ++e) {
        const double* ye = y + 22 * e;
        const Vec3 ptb = injection_wave(ends_[e], t);
        for (int p = 0; p < 3; ++p)
            vdc += mp[e][p] * ye[6 + p] + mn[e][p] * ye[9 + p] + 2.0 * ptb[p];
    }
    vdc /= 6.0;
    std::fill(dy, dy + 44, 0.0);
    Vec3 diac[2];
    for (int e = 0; e < 2; ++e) {
        const EndRt& er = ends_[e];
        const double* ye = y + 22 * e;
        double* de = dy + 22 * e;
        const Vec3 ptb = injection_wave(er, t);
        const Vec3 vsrc = source_wave(er.vg, sh.w1, t);
        double rhs[3], mean_rhs = 0.0;
        for (int p = 0; p < 3; ++p) {
            const double ic = ye[p], iac = ye[3 + p];
            const double ip = ic + iac / 2.0, in = ic - iac / 2.0;
            de[6 + p] = mp[e][p] * ip / er.C;
            de[9 + p] = mn[e][p] * in / er.C;
            de[p] = (vdc - (mp[e][p] * ye[6 + p] + mn[e][p] * ye[9 + p]) - 2.0 * ptb[p]) /
                        (2.0 * er.L) -
                    (er.R / er.L) * ic;
            rhs[p] = -(mp[e][p] * ye[6 + p] - mn[e][p] * ye[9 + p]) / 2.0 - vsrc[p];
            mean_rhs += rhs[p] / 3.0;
        }
        const double Le = er.L / 2.0 + sh.LT + er.Lg / (sh.A * sh.A);
        const double Re = er.R / 2.0 + er.Rg / (sh.A * sh.A);
        for (int p = 0; p < 3; ++p) {
            de[3 + p] = (rhs[p] - mean_rhs - Re * ye[3 + p]) / Le;
            diac[e][p] = de[3 + p];
        }
    }
    for (int e = 0; e < 2; ++e)
        ctrl_deriv(ends_[e], sh, y + 22 * e, t, vdc, &diac[e], dy + 22 * e);
}

void Simulator::step() {
    const double h = opts_.dt;
    const double t = t_;
    double k1[44], k2[44], k3[44], k4[44], tmp[44];
    derivative(t, y_.data(), 0.0, k1);
    for (int i = 0; i < 44; ++i)
        tmp[i] = y_[i] + h / 2.0 * k1[i];
    derivative(t + h / 2.0, tmp, h / 2.0, k2);
    for (int i = 0; i < 44; ++i)
        tmp[i] = y_[i] + h / 2.0 * k2[i];
    derivative(t + h / 2.0, tmp, h / 2.0, k3);
    for (int i = 0; i < 44; ++i)
        tmp[i] = y_[i] + h * k3[i];
    derivative(t + h, tmp, h, k4);
    for (int i = 0; i < 44; ++i)
        y_[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    t_ += h;
    // issue the next delayed command; the buffer is not yet pushed, so the
    // command applied at the new time sits in slot nd - 1
    const SimShared sh = shared_of(params_);
    for (int e = 0; e < 2; ++e) {
        EndRt& er = ends_[e];
        if (er.nd == 0)
            continue;
        double vdc = 0.0;
        Vec3 mpn[2], mnn[2];
        for (int q = 0; q < 2; ++q) {
            const EndRt& eq = ends_[q];
            if (eq.nd > 0) {
                mpn[q] = eq.buf_p[eq.nd - 1];
                mnn[q] = eq.buf_n[eq.nd - 1];
            } else {
                command(eq, sh, y_.data() + 22 * q, t_, sh.VDC, nullptr, &mpn[q], &mnn[q]);
            }
            const double* yq = y_.data() + 22 * q;
            const Vec3 ptb = injection_wave(eq, t_);
            for (int p = 0; p < 3; ++p)
                vdc += mpn[q][p] * yq[6 + p] + mnn[q][p] * yq[9 + p] + 2.0 * ptb[p];
        }
        vdc /= 6.0;
        const double* ye = y_.data() + 22 * e;
        const Vec3 vsrc = source_wave(er.vg, sh.w1, t_);
        double rhs[3], mean_rhs = 0.0;
        for (int p = 0; p < 3; ++p) {
            rhs[p] = -(mpn[e][p] * ye[6 + p] - mnn[e][p] * ye[9 + p]) / 2.0 - vsrc[p];
            mean_rhs += rhs[p] / 3.0;
        }
        const double Le = er.L / 2.0 + sh.LT + er.Lg / (sh.A * sh.A);
        const double Re = er.R / 2.0 + er.Rg / (sh.A * sh.A);
        Vec3 diac;
        for (int p = 0; p < 3; ++p)
            diac[p] = (rhs[p] - mean_rhs - Re * ye[3 + p]) / Le;
        Vec3 mp, mn;
        command(er, sh, ye, t_, vdc, &diac, &mp, &mn);
        er.buf_p.insert(er.buf_p.begin(), mp);
        er.buf_p.pop_back();
        er.buf_n.insert(er.buf_n.begin(), mn);
        er.buf_n.pop_back();
    }
}

bool Simulator::blown_up() const {
    for (double v : y_)
        if (!std::isfinite(v) || std::abs(v) > opts_.blowup_cap)
            return true;
    return false;
}

void Simulator::set_injection(int end, double amplitude_kv, double omega_inj) {
    ends_[end].inj_on = true;
    ends_[end].inj_amp = amplitude_kv;
    ends_[end].inj_w = omega_inj;
}

void Simulator::apply_event(const SystemParams& updated) {
    const SimShared sh = shared_of(updated);
    for (int e = 0; e < 2; ++e) {
        EndRt& er = ends_[e];
        er.pll = from_pi(updated.controllers.h_PLL);
        er.pq = from_pi(updated.controllers.h_PQ);
        er.vdc = from_pi(updated.controllers.h_vdc);
        er.i1 = from_pi(updated.controllers.h_i1);
        er.i2 = from_pi(updated.controllers.h_i2);
        er.ov = from_pi(updated.controllers.h_ov);
        er.Lg = updated.grid(e).L_g;
        er.Rg = updated.grid(e).R_g;
        er.L = updated.mmc(e).L;
        er.R = updated.mmc(e).R;
        er.C = updated.mmc(e).C();
        er.vg = (updated.grid(e).v_g_kv / sh.A) * std::sqrt(2.0 / 3.0) / 2.0 *
                std::polar(1.0, (updated.grid(e).v_g_deg - 90.0) * kPi / 180.0);
    }
    params_ = updated;
    // the delay depth and operating-point references deliberately stay fixed
}

double Simulator::probe(const std::string& name) const {
    const SimShared sh = shared_of(params_);
    if (name == "v_dc")
        return bus_voltage(t_, y_.data(), 0.0);
    if (name == "P_r" || name == "P_s") {
        const int e = (name == "P_r") ? 0 : 1;
        const EndRt& er = ends_[e];
        const double* ye = y_.data() + 22 * e;
        Vec3 mp, mn;
        if (er.nd > 0)
            applied_m(er, 0.0, opts_.dt, &mp, &mn);
        else
            command(er, sh, ye, t_, sh.VDC, nullptr, &mp, &mn);
        const Vec3 vsrc = source_wave(er.vg, sh.w1, t_);
        double rhs[3], mean_rhs = 0.0;
        for (int p = 0; p < 3; ++p) {
            rhs[p] = -(mp[p] * ye[6 + p] - mn[p] * ye[9 + p]) / 2.0 - vsrc[p];
            mean_rhs += rhs[p] / 3.0;
        }
        const double Le = er.L / 2.0 + sh.LT + er.Lg / (sh.A * sh.A);
        const double Re = er.R / 2.0 + er.Rg / (sh.A * sh.A);
        double pw = 0.0;
        for (int p = 0; p < 3; ++p) {
            const double diac = (rhs[p] - mean_rhs - Re * ye[3 + p]) / Le;
            double vpcc = vsrc[p] * sh.A + (er.Rg / sh.A) * ye[3 + p];
            if (er.Lg > 0.0)
                vpcc += (er.Lg / sh.A) * diac;
            pw += vpcc * ye[3 + p] / sh.A;
        }
        return pw;
    }
    // remaining probes follow the pattern kind_{re|se}_{a|b|c}
    const auto u1 = name.find('_');
    const auto u2 = name.rfind('_');
    if (u1 == std::string::npos || u2 == u1 || u2 + 2 != name.size())
        throw SimError("unknown probe: " + name);
    const std::string kind = name.substr(0, u1);
    const std::string end_tag = name.substr(u1 + 1, u2 - u1 - 1);
    const char ph = name[u2 + 1];
    if ((end_tag != "re" && end_tag != "se") || ph < 'a' || ph > 'c')
        throw SimError("unknown probe: " + name);
    const int e = (end_tag == "re") ? 0 : 1;
    const int p = ph - 'a';
    const double* ye = y_.data() + 22 * e;
    if (kind == "ic")
        return ye[p];
    if (kind == "iac")
        return ye[3 + p];
    if (kind == "iarm")
        return ye[p] + ye[3 + p] / 2.0;
    if (kind == "vcap")
        return ye[6 + p];
    throw SimError("unknown probe: " + name);
}

std::map<std::string, double> Simulator::orbit_deviation() const {
    const SimShared sh = shared_of(params_);
    std::map<std::string, double> dev{{"ic", 0.0}, {"iac", 0.0}, {"vcap", 0.0}, {"vdc", 0.0}};
    for (int e = 0; e < 2; ++e) {
        const EndRt& er = ends_[e];
        const double* ye = y_.data() + 22 * e;
        std::vector<cplx> cm(er.I.size(), 0.0), dm(er.I.size(), 0.0);
        for (size_t h = 0; h < er.I.size(); ++h)
            (h % 2 == 0 ? cm : dm)[h] = er.I[h];
        const Vec3 ic = harm_eval(cm, sh.w1, t_);
        const Vec3 iac = harm_eval(dm, sh.w1, t_);
        const Vec3 vp = harm_eval(er.V, sh.w1, t_, false);
        const Vec3 vn = harm_eval(er.V, sh.w1, t_, true);
        const double iac_pk = 4.0 * std::abs(er.I[1]);
        for (int p = 0; p < 3; ++p) {
            dev["ic"] = std::max(dev["ic"], std::abs(ye[p] - ic[p]) / std::abs(er.I[0]));
            dev["iac"] =
                std::max(dev["iac"], std::abs(ye[3 + p] - 2.0 * iac[p]) / iac_pk);
            dev["vcap"] = std::max(dev["vcap"], std::abs(ye[6 + p] - vp[p]) / sh.VDC);
            dev["vcap"] = std::max(dev["vcap"], std::abs(ye[9 + p] - vn[p]) / sh.VDC);
        }
    }
    dev["vdc"] = std::abs(bus_voltage(t_, y_.data(), 0.0) - sh.VDC) / sh.VDC;
    return dev;
}

double TimeSeries::at_time(double t) const {
    if (values.empty() || dt <= 0.0)
        throw SimError("empty series");
    const double x = (t - t0) / dt;
    const int k = static_cast<int>(std::floor(x));
    if (k < 0 || k + 1 >= static_cast<int>(values.size()))
        return values.at(std::min<size_t>(std::max(k, 0), values.size() - 1));
    const double f = x - k;
    return (1.0 - f) * values[k] + f * values[k + 1];
}

std::map<std::string, TimeSeries> simulate(const SystemParams& params,
                                           const std::vector<SimEvent>& events,
                                           double duration,
                                           const std::vector<std::string>& probes,
                                           const SimOptions& opts) {
    if (duration <= 0.0)
        throw SimError("nonpositive duration");
    std::vector<SimEvent> evs = events;
    std::sort(evs.begin(), evs.end(),
              [](const SimEvent& a, const SimEvent& b) { return a.t < b.t; });
    Simulator sim(params, opts);
    SystemParams current = params;
    std::map<std::string, TimeSeries> out;
    const int rec_every = std::max(1, static_cast<int>(std::lround(opts.record_dt / opts.dt)));
    for (const std::string& p : probes) {
        out[p].dt = rec_every * opts.dt;
        out[p].t0 = 0.0;
        out[p].label = p;
        out[p].values.push_back(sim.probe(p));
    }
    const long nstep = std::lround(duration / opts.dt);
    size_t next_ev = 0;
    for (long k = 0; k < nstep; ++k) {
        while (next_ev < evs.size() && evs[next_ev].t <= sim.time() + 1e-12) {
            set_param(current, evs[next_ev].path, evs[next_ev].value);
            sim.apply_event(current);
            ++next_ev;
        }
        sim.step();
        if ((k + 1) % rec_every == 0) {
            if (sim.blown_up()) {
                for (auto& [nm, ts] : out) {
                    ts.diverged = true;
                    ts.diverged_at = sim.time();
                }
                break;
            }
            for (auto& [nm, ts] : out)
                ts.values.push_back(sim.probe(nm));
        }
    }
    return out;
}

cplx frequency_scan(const SystemParams& params, double f_p_hz, double amplitude_kv,
                    double settle_s, double measure_s, int end, const SimOptions& opts) {
    if (amplitude_kv <= 0.0)
        throw SimError("zero injection amplitude");
    Simulator sim(params, opts);
    const double w_inj = 2.0 * kPi * (f_p_hz + params.f_1);
    sim.set_injection(end, amplitude_kv, w_inj);
    const long nset = std::lround(settle_s / opts.dt);
    for (long k = 0; k < nset; ++k)
        sim.step();
    if (sim.blown_up())
        throw SimError("base case unstable during settle");
    const long nwin = std::lround(measure_s / opts.dt);
    cplx acc[3] = {0.0, 0.0, 0.0}, accv[3] = {0.0, 0.0, 0.0};
    const char* ic_names[2][3] = {{"ic_re_a", "ic_re_b", "ic_re_c"},
                                  {"ic_se_a", "ic_se_b", "ic_se_c"}};
    for (long k = 0; k < nwin; ++k) {
        sim.step();
        const cplx ph = std::polar(1.0, -w_inj * sim.time());
        const cplx inj = std::polar(amplitude_kv, w_inj * sim.time());
        acc[0] += sim.probe(ic_names[end][0]) * ph;
        acc[1] += sim.probe(ic_names[end][1]) * ph;
        acc[2] += sim.probe(ic_names[end][2]) * ph;
        accv[0] += inj.real() * ph;
        accv[1] += (inj * kAlpha).real() * ph;
        accv[2] += (inj * kAlpha * kAlpha).real() * ph;
    }
    if (sim.blown_up())
        throw SimError("base case unstable during measurement");
    // NS projection of the single-bin correlation phasors
    const cplx nsw[3] = {1.0, std::polar(1.0, -2.0 * kPi / 3.0),
                         std::polar(1.0, 2.0 * kPi / 3.0)};
    cplx i_ns = 0.0, v_ns = 0.0;
    for (int p = 0; p < 3; ++p) {
        i_ns += (2.0 * acc[p] / static_cast<double>(nwin)) * nsw[p] / 3.0;
        v_ns += (2.0 * accv[p] / static_cast<double>(nwin)) * nsw[p] / 3.0;
    }
    if (std::abs(i_ns) < 1e-12)
        throw SimError("response below numeric floor");
    // the injected source drives the loop, so the passive ratio needs a sign
    return -v_ns / i_ns;
}

namespace {

// peak-to-peak amplitude of the detrended series over one fundamental period
double envelope_at(const TimeSeries& s, double t, double period) {
    const long k0 = std::lround((t - s.t0) / s.dt);
    const long np = std::max<long>(2, std::lround(period / s.dt));
    if (k0 < 0 || k0 + np > static_cast<long>(s.values.size()))
        throw SimError("envelope window outside series");
    double mean = 0.0;
    for (long k = k0; k < k0 + np; ++k)
        mean += s.values[k];
    mean /= np;
    double lo = s.values[k0] - mean, hi = s.values[k0] - mean;
    for (long k = k0; k < k0 + np; ++k) {
        lo = std::min(lo, s.values[k] - mean);
        hi = std::max(hi, s.values[k] - mean);
    }
    return hi - lo;
}

}  // namespace

double divergence_rate(const TimeSeries& series, double t0, double T_i, double f_1_hz) {
    if (T_i <= 0.0)
        throw SimError("nonpositive interval");
    const double period = 1.0 / f_1_hz;
    const double e0 = envelope_at(series, t0, period);
    const double e1 = envelope_at(series, t0 + T_i, period);
    if (e0 == 0.0 && e1 == 0.0)
        return 0.0;
    if (e0 <= 0.0 || e1 <= 0.0)
        throw SimError("non-positive envelope");
    return std::log(e1 / e0) / T_i;
}

namespace {

void fft_radix2(std::vector<cplx>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1)
            j ^= bit;
        j ^= bit;
        if (i < j)
            std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const cplx wl = std::polar(1.0, -2.0 * kPi / static_cast<double>(len));
        for (size_t i = 0; i < n; i += len) {
            cplx w = 1.0;
            for (size_t k = 0; k < len / 2; ++k) {
                const cplx u = a[i + k], v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

}  // namespace

Spectrum short_time_fft(const TimeSeries& series, double window_s) {
    const long nw = std::lround(window_s / series.dt);
    if (nw < 2 || nw > static_cast<long>(series.values.size()))
        throw SimError("window does not fit the series");
    const long k0 = static_cast<long>(series.values.size()) - nw;
    size_t nfft = 1;
    while (nfft < static_cast<size_t>(nw))
        nfft <<= 1;
    std::vector<cplx> a(nfft, 0.0);
    double wsum = 0.0;
    for (long k = 0; k < nw; ++k) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * k / (nw - 1));
        a[k] = series.values[k0 + k] * w;
        wsum += w;
    }
    fft_radix2(a);
    Spectrum sp;
    const size_t nout = nfft / 2 + 1;
    sp.f_hz.resize(nout);
    sp.mag.resize(nout);
    // dominance compares raw bin magnitudes; the single-sided doubling would
    // otherwise let the smeared flank of a DC line outweigh the line itself
    double best = -1.0;
    for (size_t k = 0; k < nout; ++k) {
        sp.f_hz[k] = static_cast<double>(k) / (static_cast<double>(nfft) * series.dt);
        sp.mag[k] = std::abs(a[k]) / wsum * (k == 0 ? 1.0 : 2.0);
        if (std::abs(a[k]) > best) {
            best = std::abs(a[k]);
            sp.dominant_hz = sp.f_hz[k];
        }
    }
    return sp;
}

std::vector<double> spectrum_peaks(const Spectrum& sp, int count) {
    std::vector<size_t> idx;
    const size_t n = sp.mag.size();
    for (size_t k = 0; k < n; ++k) {
        const bool up = (k == 0) || sp.mag[k] > sp.mag[k - 1];
        const bool down = (k + 1 == n) || sp.mag[k] > sp.mag[k + 1];
        if (up && down)
            idx.push_back(k);
    }
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return sp.mag[a] > sp.mag[b]; });
    std::vector<double> out;
    for (size_t q = 0; q < idx.size() && static_cast<int>(out.size()) < count; ++q)
        out.push_back(sp.f_hz[idx[q]]);
    return out;
}

}  // namespace mmcim
