#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "mmcim/harmonics.hpp"

using namespace mmcim;

namespace {

HarmonicVector random_real_signal(std::mt19937& rng, int n, int max_order) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<cplx> pos(n + 1, 0.0);
    pos[0] = u(rng);
    for (int k = 1; k <= std::min(n, max_order); ++k)
        pos[k] = cplx(u(rng), u(rng));
    return HarmonicVector::from_positive(pos, n);
}

// Fourier coefficients k in [-n..n] of the pointwise product a(t) b(t),
// projected on a dense time grid over one fundamental period
Eigen::VectorXcd dense_product_coeffs(const HarmonicVector& a, const HarmonicVector& b,
                                      int n, double f_1) {
    const int grid = 4096;
    const double T = 1.0 / f_1;
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(2 * n + 1);
    for (int k = -n; k <= n; ++k) {
        cplx acc = 0.0;
        for (int q = 0; q < grid; ++q) {
            const double t = T * q / grid;
            const double prod = steady_evaluate(a, t, f_1) * steady_evaluate(b, t, f_1);
            acc += prod * std::exp(cplx(0.0, -k * 2.0 * std::numbers::pi * f_1 * t));
        }
        out(k + n) = acc / static_cast<double>(grid);
    }
    return out;
}

}  // namespace

TEST_CASE("toeplitz of a DC-only vector is a scaled identity") {
    HarmonicVector h(4);
    h.at(0) = 2.0;
    HarmonicOperator op = toeplitz(h);
    CHECK(op.kind == OperatorKind::Toeplitz);
    CHECK((op.entries - 2.0 * Eigen::MatrixXcd::Identity(9, 9)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("toeplitz places coefficient <1> on the first subdiagonal") {
    HarmonicVector h(4);
    h.at(1) = cplx(-0.2070, -0.0382);
    h.at(-1) = std::conj(h.at(1));
    HarmonicOperator op = toeplitz(h);
    CHECK(op.entries(5, 4) == h.at(1));
    CHECK(op.entries(4, 5) == h.at(-1));
    CHECK(op.at(1, 0) == h.at(1));
}

TEST_CASE("toeplitz convolution matches the dense time-grid product oracle") {
    std::mt19937 rng(23);
    const double f_1 = 50.0;
    for (int n : {4, 6}) {
        for (int rep = 0; rep < 5; ++rep) {
            HarmonicVector a = random_real_signal(rng, n, 2);
            HarmonicVector b = random_real_signal(rng, n, 2);
            Eigen::VectorXcd got = toeplitz(a).entries * b.coeffs;
            Eigen::VectorXcd ref = dense_product_coeffs(a, b, n, f_1);
            CHECK((got - ref).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("toeplitz is linear") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int n : {2, 4, 6}) {
        HarmonicVector a = random_real_signal(rng, n, n);
        HarmonicVector b = random_real_signal(rng, n, n);
        const double al = u(rng), be = u(rng);
        HarmonicVector mix(n);
        mix.coeffs = al * a.coeffs + be * b.coeffs;
        Eigen::MatrixXcd lhs = toeplitz(mix).entries;
        Eigen::MatrixXcd rhs = al * toeplitz(a).entries + be * toeplitz(b).entries;
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("convolution of real signals stays conjugate-symmetric where unclipped") {
    std::mt19937 rng(31);
    for (int n : {2, 4, 6}) {
        HarmonicVector a = random_real_signal(rng, n, n / 2);
        HarmonicVector b = random_real_signal(rng, n, n / 2);
        Eigen::VectorXcd prod = toeplitz(a).entries * b.coeffs;
        HarmonicVector out(n);
        out.coeffs = prod;
        CHECK(out.is_conjugate_symmetric(1e-13));
    }
}

TEST_CASE("diagonal admittance values") {
    SystemParams p = default_params();
    HarmonicOperator lr0 = diagonal_admittance(AdmittanceKind::LR, p, 0, cplx(0.0, 0.0));
    CHECK(lr0.kind == OperatorKind::Diagonal);
    CHECK(lr0.at(0, 0) == cplx(1.0, 0.0));
    HarmonicOperator c0 = diagonal_admittance(AdmittanceKind::C, p, 0, cplx(0.0, 0.0));
    CHECK(c0.at(0, 0) == cplx(0.0, 0.0));
    HarmonicOperator lr = diagonal_admittance(AdmittanceKind::LR, p, 0,
                                              cplx(0.0, 2.0 * std::numbers::pi * 10.0));
    cplx expect = 1.0 / (cplx(0.0, 2.0 * std::numbers::pi * 60.0 * 0.140) + 1.0);
    CHECK(std::abs(lr.at(1, 1) - expect) < 1e-15);
    CHECK(std::abs(lr.at(1, 1)) == doctest::Approx(0.0190).epsilon(2e-3));
    for (int r = -4; r <= 4; ++r)
        for (int c = -4; c <= 4; ++c)
            if (r != c)
                CHECK(lr.at(r, c) == cplx(0.0, 0.0));
}

TEST_CASE("diagonal admittance realness between mirrored rows") {
    SystemParams p = default_params();
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> w(-2e3, 2e3);
    for (int rep = 0; rep < 20; ++rep) {
        const double om = w(rng);
        for (AdmittanceKind kind : {AdmittanceKind::LR, AdmittanceKind::C}) {
            HarmonicOperator at = diagonal_admittance(kind, p, 1, cplx(0.0, om));
            HarmonicOperator mir = diagonal_admittance(kind, p, 1, cplx(0.0, -om));
            for (int k = -p.n; k <= p.n; ++k)
                CHECK(std::abs(at.at(k, k) - std::conj(mir.at(-k, -k))) < 1e-14 *
                      std::max(1.0, std::abs(at.at(k, k))));
        }
    }
}

TEST_CASE("time reconstruction of harmonic vectors") {
    HarmonicVector dc(3);
    dc.at(0) = 5.0;
    dc.real_signal = true;
    CHECK(steady_evaluate(dc, 0.123, 50.0) == doctest::Approx(5.0));
    HarmonicVector cosine(3, "", true);
    cosine.at(1) = 0.5;
    cosine.at(-1) = 0.5;
    CHECK(steady_evaluate(cosine, 0.0, 50.0) == doctest::Approx(1.0));
    std::mt19937 rng(41);
    for (int n : {2, 4, 6}) {
        HarmonicVector h = random_real_signal(rng, n, n);
        const double t = 0.0137;
        double direct = 0.0;
        for (int k = -n; k <= n; ++k)
            direct += (h.at(k) * std::exp(cplx(0.0, k * 2.0 * std::numbers::pi * 50.0 * t))).real();
        CHECK(steady_evaluate(h, t, 50.0) == doctest::Approx(direct).epsilon(1e-12));
    }
}
