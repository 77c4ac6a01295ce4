#pragma once
#include "mmcim/harmonics.hpp"
#include "mmcim/steady_state.hpp"

namespace mmcim {

struct AnalysisError : std::runtime_error {
    explicit AnalysisError(const std::string& what) : std::runtime_error(what) {}
};

// Perturbation lattice geometry, fixed project-wide: row k carries the
// frequency s + j k w1 and the sequence sigma(k) = (2 - k) mod 3; even k is
// differential-mode, odd k common-mode.  Zero-sequence DM rows carry no
// current (transformer delta blocks them); the DC bus attaches at row -1.
int lattice_sigma(int k);
bool lattice_dm(int k);
bool lattice_ac_coupled(int k);
bool lattice_blocked(int k);

// controller operating point implied by the steady solution of one end;
// measurement-frame phasors are per-unit, command phasors are dimensionless
struct OperatingPoint {
    double theta0 = 0.0;    // PLL angle at t = 0
    cplx i_dq0, v_dq0;      // fundamental current / PCC voltage phasors
    cplx ic_dq0;            // circulating current in the -2 theta frame
    cplx e_cmd0, u_cmd0;    // commanded outputs including the delay advance
    double v_d0 = 0.0;      // |v_dq0|, the PLL linearization point
    double p0 = 0.0, q0 = 0.0, v_mag0 = 0.0;    // realized outer references
};

OperatingPoint operating_point(const SteadyState& state, const SystemParams& params,
                               int end);

// insertion-index sensitivity to the four perturbation channels at one
// frequency: delta_m = B_i di + B_v dv_v + B_vdc dv_dc + B_vcap dv
struct ControlSensitivities {
    HarmonicOperator B_i, B_v, B_vdc, B_vcap;
    cplx s;
    int end = 0;
    CccMode ccc_mode = CccMode::ccsc;
};

ControlSensitivities control_sensitivities(const SteadyState& state,
                                           const SystemParams& params, int end, cplx s);

// closed-loop transfer from q-axis PCC voltage (per-unit) to PLL angle
cplx pll_sensitivity(const SteadyState& state, const SystemParams& params, cplx s,
                     int end = 0);

}  // namespace mmcim
