#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <random>

#include "mmcim/config.hpp"

using namespace mmcim;

static std::string data_path(const char* name) {
    const char* dir = std::getenv("MMCIM_DATA_DIR");
    REQUIRE(dir != nullptr);
    return std::string(dir) + "/" + name;
}

TEST_CASE("default config carries the base operating point") {
    SystemParams p = load_config(data_path("base.json"));
    CHECK(p.mmc_re.L == doctest::Approx(0.140));
    CHECK(p.mmc_re.R == doctest::Approx(1.0));
    CHECK(p.mmc_re.N == 500);
    CHECK(p.mmc_re.C() == doctest::Approx(0.011 / 500));
    CHECK(p.n == 4);
    CHECK(p.ccc_mode == CccMode::ccsc);
    CHECK(p.S_b == doctest::Approx(1380.0));
    CHECK(p.V_acb == doctest::Approx(525.0));
    CHECK(p.references.P_s_ref == doctest::Approx(-1250.0));
    CHECK(p.controllers.h_i2.Kp == doctest::Approx(0.8));
    CHECK(p.controllers.h_i2.Ti == doctest::Approx(0.01));
    CHECK(p.delays.T_d_re == doctest::Approx(460e-6));
    CHECK(p.delays.T_d_se == 0.0);
}

TEST_CASE("missing fields take defaults, n defaults to 4") {
    SystemParams p = load_config_text("{\"ccc_mode\": \"FCCC\"}");
    CHECK(p.n == 4);
    CHECK(p.ccc_mode == CccMode::fccc);
    CHECK(p.mmc_se.L == doctest::Approx(0.140));
    CHECK(p.scaling.k_a == doctest::Approx(1.2007));
    CHECK(p.scaling.k_dc == doctest::Approx(1.2007 / 2.0));
    CHECK(p.n_ptb == 6);
}

TEST_CASE("invariant violations are reported with the field name") {
    CHECK_THROWS_WITH_AS(load_config_text("{\"mmc_re\": {\"L\": 0.0}}"),
                         doctest::Contains("invariant violation: L"), ConfigError);
    CHECK_THROWS_WITH_AS(load_config_text("{\"controllers\": {\"h_i1\": {\"Kp\": 1, \"Ti\": 0}}}"),
                         doctest::Contains("Ti"), ConfigError);
    CHECK_THROWS_WITH_AS(load_config_text("{\"truncation_n\": 1}"),
                         doctest::Contains("invariant violation: n"), ConfigError);
    CHECK_THROWS_AS(load_config_text("not json"), ConfigError);
    CHECK_THROWS_WITH_AS(load_config_text("{\"ccc_mode\": \"other\"}"),
                         doctest::Contains("ccc_mode"), ConfigError);
}

TEST_CASE("overrides compose left to right at the document level") {
    std::string text = apply_overrides(
        "{}", {"controllers.h_i2.Kp=1.9", "ccc_mode=FCCC", "controllers.h_i2.Kp=2.2"});
    SystemParams p = load_config_text(text);
    CHECK(p.controllers.h_i2.Kp == doctest::Approx(2.2));
    CHECK(p.ccc_mode == CccMode::fccc);
    CHECK_THROWS_AS(apply_overrides("{}", {"no-equals-sign"}), ConfigError);
}

TEST_CASE("pi evaluation") {
    PiParams p{0.8, 0.01};
    cplx far = evaluate_pi(p, cplx(0.0, 1e9));
    CHECK(std::abs(far - 0.8) < 1e-6);
    cplx at100 = evaluate_pi(p, cplx(0.0, 2.0 * std::numbers::pi * 100.0));
    CHECK(at100.real() == doctest::Approx(0.8));
    CHECK(at100.imag() == doctest::Approx(-0.15915).epsilon(1e-4));
    CHECK_THROWS_WITH_AS(evaluate_pi(PiParams{1.3, 0.01}, cplx(0.0, 0.0)),
                         doctest::Contains("integrator pole at DC"), ConfigError);
}

TEST_CASE("pi real part on the imaginary axis equals Kp") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> gain(0.1, 10.0), w(1.0, 1e5);
    for (int q = 0; q < 50; ++q) {
        PiParams p{gain(rng), gain(rng)};
        cplx v = evaluate_pi(p, cplx(0.0, w(rng)));
        CHECK(v.real() == doctest::Approx(p.Kp).epsilon(1e-14));
    }
}

TEST_CASE("delay transfer function") {
    CHECK(delay_tf(0.0, cplx(3.0, -2.0)) == cplx(1.0, 0.0));
    cplx d = delay_tf(460e-6, cplx(0.0, 2.0 * std::numbers::pi * 50.0));
    CHECK(std::abs(d) == doctest::Approx(1.0));
    CHECK(std::arg(d) == doctest::Approx(-0.144513).epsilon(1e-4));
    CHECK(delay_tf(460e-6, cplx(0.0, 0.0)) == cplx(1.0, 0.0));
}

TEST_CASE("delay obeys the exponent law and has unit magnitude on the axis") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> re(-200.0, 200.0), im(-1e4, 1e4);
    for (int q = 0; q < 50; ++q) {
        cplx s1(re(rng), im(rng)), s2(re(rng), im(rng));
        cplx lhs = delay_tf(460e-6, s1) * delay_tf(460e-6, s2);
        cplx rhs = delay_tf(460e-6, s1 + s2);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(rhs));
        CHECK(std::abs(delay_tf(120e-6, cplx(0.0, im(rng)))) == doctest::Approx(1.0));
    }
}
