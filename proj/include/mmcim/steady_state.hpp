#pragma once
#include <optional>

#include "mmcim/harmonics.hpp"

namespace mmcim {

struct SolveError : std::runtime_error {
    double residual_norm;
    SolveError(const std::string& what, double norm)
        : std::runtime_error(what), residual_norm(norm) {}
};

struct EndSteady {
    HarmonicVector m;       // insertion indices, dimensionless
    HarmonicVector i;       // upper-arm phase-a current, kA
    HarmonicVector v;       // arm capacitor sum voltage, kV
    HarmonicVector v_v;     // valve-side AC bus voltage, kV (fundamental only)
    HarmonicVector v_dc;    // DC bus voltage, kV (shared between ends)
};

struct SteadyState {
    EndSteady ends[2];      // 0 = RE, 1 = SE
    CccMode ccc_mode = CccMode::ccsc;
    double residual_norm = 0.0;
    int iterations = 0;

    const EndSteady& end(int e) const { return ends[e]; }
    EndSteady& end(int e) { return ends[e]; }
};

// Harmonic sets of the balance.  Current flows at even orders (common-mode
// loops close through the bus or between phases) and at odd orders whose
// sequence is not zero (the transformer blocks zero-sequence differential
// current); the bus itself ripples at zero-sequence common-mode orders.
bool current_order_flows(int h);
bool bus_order_ripples(int h);

// Stacked real residuals: arm KVL rows, capacitor rows, circulating-current
// constraint (i<2> or v<2> = 0), outer-loop constraints, bus KCL rows.
Eigen::VectorXd residuals(const SteadyState& candidate, const SystemParams& params);

// Analytic Jacobian of residuals() with respect to the packed unknown vector;
// column order matches pack_unknowns().
Eigen::MatrixXd residual_jacobian(const SteadyState& candidate, const SystemParams& params);

// Unknowns are the k >= 0 coefficients (m<1..2>, flowing i<h>, v<0..n>, bus
// ripple) stacked as reals; negative orders come from conjugate symmetry.
Eigen::VectorXd pack_unknowns(const SteadyState& state, const SystemParams& params);
SteadyState unpack_unknowns(const Eigen::VectorXd& x, const SystemParams& params);

SteadyState initial_guess(const SystemParams& params);

SteadyState solve_steady_state(const SystemParams& params,
                               const std::optional<SteadyState>& initial = {});

}  // namespace mmcim
