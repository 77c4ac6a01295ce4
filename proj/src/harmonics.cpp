#include "mmcim/harmonics.hpp"

#include <cmath>
#include <numbers>

namespace mmcim {

HarmonicVector::HarmonicVector(int order, std::string unit_tag, bool real)
    : n(order), coeffs(Eigen::VectorXcd::Zero(2 * order + 1)),
      unit(std::move(unit_tag)), real_signal(real) {}

HarmonicVector HarmonicVector::from_positive(const std::vector<cplx>& pos, int order,
                                             std::string unit_tag) {
    HarmonicVector h(order, std::move(unit_tag), true);
    if (!pos.empty())
        h.at(0) = pos[0].real();
    for (int k = 1; k < static_cast<int>(pos.size()) && k <= order; ++k) {
        h.at(k) = pos[k];
        h.at(-k) = std::conj(pos[k]);
    }
    return h;
}

bool HarmonicVector::is_conjugate_symmetric(double tol) const {
    double scale = coeffs.cwiseAbs().maxCoeff();
    if (scale == 0.0)
        return true;
    for (int k = 0; k <= n; ++k)
        if (std::abs(at(-k) - std::conj(at(k))) > tol * scale)
            return false;
    return true;
}

HarmonicOperator toeplitz(const HarmonicVector& h) {
    HarmonicOperator op;
    op.n = h.n;
    op.kind = OperatorKind::Toeplitz;
    const int m = h.size();
    op.entries = Eigen::MatrixXcd::Zero(m, m);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) {
            int k = r - c;
            if (std::abs(k) <= h.n)
                op.entries(r, c) = h.at(k);
        }
    return op;
}

HarmonicOperator diagonal_admittance(AdmittanceKind kind, const SystemParams& params,
                                     int end, cplx s, int order) {
    const int n = order < 0 ? params.n : order;
    const MmcParams& mmc = params.mmc(end);
    const double w1 = params.omega_1();
    HarmonicOperator op;
    op.n = n;
    op.kind = OperatorKind::Diagonal;
    op.entries = Eigen::MatrixXcd::Zero(2 * n + 1, 2 * n + 1);
    for (int k = -n; k <= n; ++k) {
        const cplx sk = s + cplx(0.0, k * w1);
        if (kind == AdmittanceKind::LR) {
            const cplx den = mmc.L * sk + mmc.R;
            if (std::abs(den) < 1e-300)
                throw std::runtime_error("LR resonance at shifted frequency");
            op.entries(k + n, k + n) = 1.0 / den;
        } else {
            op.entries(k + n, k + n) = mmc.C() * sk;
        }
    }
    return op;
}

double steady_evaluate(const HarmonicVector& h, double t, double f_1) {
    const double w1 = 2.0 * std::numbers::pi * f_1;
    cplx acc = 0.0;
    for (int k = -h.n; k <= h.n; ++k)
        acc += h.at(k) * std::exp(cplx(0.0, k * w1 * t));
    return acc.real();
}

}  // namespace mmcim
