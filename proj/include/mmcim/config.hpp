#pragma once
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmcim {

using cplx = std::complex<double>;

// Internal unit convention: voltages kV, currents kA, powers MW.  Component
// values (H, F, ohm, s) are unchanged by that scaling, so all impedance and
// time-constant arithmetic is plain SI.  The JSON boundary is SI (V, A, W)
// except grid source magnitudes, which are tagged kV in their field names.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class CccMode { ccsc, fccc };

struct PiParams {
    double Kp = 0.0;   // proportional gain
    double Ti = 1.0;   // integral time constant, s; transfer Kp + 1/(Ti s)
};

struct GridParams {
    double v_g_kv = 0.0;    // Thevenin source, line-line RMS, grid side
    double v_g_deg = 0.0;   // sine-reference phase angle
    double L_g = 0.0;       // H, grid side
    double R_g = 0.0;       // ohm, grid side
};

struct MmcParams {
    double L = 0.0;         // arm inductance, H
    double R = 0.0;         // arm resistance, ohm
    double C_sm = 0.0;      // submodule capacitance, F
    int N = 1;              // submodules per arm
    double C() const { return C_sm / N; }   // equivalent arm capacitance
};

struct TransformerParams {
    double a = 1.0;         // grid-to-valve voltage ratio
    double X_T = 0.0;       // leakage reactance, pu on the valve base
};

struct References {
    double P_s_ref = 0.0;       // MW, sending end
    double Q_ref_re = 0.0;      // Mvar
    double Q_ref_se = 0.0;      // Mvar
    double v_dc_ref = 0.0;      // kV
    double v_ac_ref_pu = 1.0;   // receiving-end AC voltage magnitude target
};

struct Controllers {
    PiParams h_PQ, h_ov, h_vdc, h_PLL, h_i1, h_i2;
};

struct Delays {
    double T_d_re = 0.0;    // s
    double T_d_se = 0.0;
};

// Scale factors of the assembled model.  k_a maps arm quantities to the grid
// side (defaults to the transformer ratio), k_m scales the modulation rows,
// k_dc and k_ac scale the extracted DC / AC terminal loop impedances.  None
// of them moves a zero of the inner-loop impedance, which the property suite
// checks explicitly.
struct Scaling {
    double k_a = 1.0;
    double k_m = 1.0;
    double k_dc = 0.5;
    double k_ac = 1.0 / 3.0;
};

struct SystemParams {
    double S_b = 0.0;       // MVA
    double V_acb = 0.0;     // kV, line-line RMS, grid side
    double V_dcb = 0.0;     // kV
    double f_1 = 0.0;       // Hz
    GridParams grid_re, grid_se;
    MmcParams mmc_re, mmc_se;
    TransformerParams transformer;
    References references;
    Controllers controllers;
    Delays delays;
    CccMode ccc_mode = CccMode::ccsc;
    int n = 4;              // steady-state truncation order
    int n_ptb = 6;          // perturbation lattice order; below 6 the roots
                            // near -2 f_1 are not converged in n
    Scaling scaling;

    double omega_1() const;
    double valve_kv() const;        // V_acb / a, line-line RMS on the valve side
    double L_T() const;             // transformer leakage, H, valve side
    const GridParams& grid(int end) const;      // end: 0 = RE, 1 = SE
    const MmcParams& mmc(int end) const;
    double T_d(int end) const;
};

// Table I operating point; also the fallback for fields a config omits.
SystemParams default_params();

SystemParams load_config(const std::string& path);
SystemParams load_config_text(const std::string& json_text);

// "section.field=value" assignments applied to the JSON document before
// parsing; used by the CLI --set flag and the sensitivity sweeps.
std::string apply_overrides(const std::string& json_text,
                            const std::vector<std::string>& assignments);

// resolved parameter set serialized back to boundary units; feeds the run
// manifest and round-trips through load_config_text
std::string dump_config(const SystemParams& p);

// single numeric assignment by config path ("controllers.h_i2.Kp"), applied
// to a resolved set; used by simulation events and the sweep driver
void set_param(SystemParams& p, const std::string& path, double value);

void validate(const SystemParams& p);   // throws ConfigError naming the field

cplx evaluate_pi(const PiParams& p, cplx s);
cplx delay_tf(double T_d, cplx s);

}  // namespace mmcim
