#pragma once
#include <Eigen/Dense>
#include <string>

#include "mmcim/config.hpp"

namespace mmcim {

// Index convention, fixed project-wide: coefficient k lives at row r = k + n,
// zero-based.  The DC-DC matrix element is entries[n, n].

inline int hrow(int k, int n) { return k + n; }

struct HarmonicVector {
    int n = 0;
    Eigen::VectorXcd coeffs;    // length 2n+1, row r = k + n
    std::string unit;           // "A", "V" or "" for dimensionless
    bool real_signal = false;

    HarmonicVector() = default;
    HarmonicVector(int order, std::string unit_tag = "", bool real = false);

    cplx at(int k) const { return coeffs(k + n); }
    cplx& at(int k) { return coeffs(k + n); }
    int size() const { return 2 * n + 1; }

    // builds the conjugate-symmetric vector from coefficients at k >= 0;
    // pos[0] must be real up to rounding
    static HarmonicVector from_positive(const std::vector<cplx>& pos, int order,
                                        std::string unit_tag = "");

    bool is_conjugate_symmetric(double tol = 1e-12) const;
};

enum class OperatorKind { Toeplitz, Diagonal, General };
enum class AdmittanceKind { LR, C };

struct HarmonicOperator {
    int n = 0;
    Eigen::MatrixXcd entries;   // (2n+1) x (2n+1)
    OperatorKind kind = OperatorKind::General;

    cplx at(int kr, int kc) const { return entries(kr + n, kc + n); }
};

// entries[r, c] = h<r-c>, zero outside the stored band
HarmonicOperator toeplitz(const HarmonicVector& h);

// row k holds 1/(L (s + j k w1) + R) for LR, or C (s + j k w1) for C;
// order defaults to the steady truncation of params
HarmonicOperator diagonal_admittance(AdmittanceKind kind, const SystemParams& params,
                                     int end, cplx s, int order = -1);

// x(t) = sum_k h<k> exp(j k w1 t); requires a real-signal vector
double steady_evaluate(const HarmonicVector& h, double t, double f_1);

}  // namespace mmcim
