#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bsdelab/drivers.hpp"
#include "bsdelab/rng.hpp"

#include "oracle_utils.hpp"

#include <cmath>
#include <vector>

using namespace bsdelab;

namespace {
const std::vector<double> no_z;
}

TEST_CASE("toy driver values") {
    const DriverSpec toy = make_toy_driver(3.0);
    CHECK(toy.evaluate(0.3, 2.0, no_z) == doctest::Approx(-16.0).epsilon(1e-15));
    CHECK(toy.evaluate(0.0, 0.0, no_z) == 0.0);
    CHECK(toy.evaluate(0.9, -2.0, no_z) == doctest::Approx(16.0).epsilon(1e-15));
    CHECK(toy.a(0.5) == 1.0);
}

TEST_CASE("control driver values and envelope coefficient") {
    const DriverSpec ctrl = make_control_driver([](double) { return 1.0; },
                                                [](double) { return 5.0; }, 3.0, 1.1);
    CHECK(ctrl.evaluate(0.1, 0.0, no_z) == 5.0);
    CHECK(ctrl.f0(0.7) == 5.0);
    // a(t) = 1/(q alpha^q)
    CHECK(ctrl.a(0.2) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    // any driver at the origin returns its zero level
    CHECK(ctrl.evaluate(0.4, 0.0, no_z) == ctrl.f0(0.4));
}

TEST_CASE("truncation caps the zero level and is monotone") {
    const DriverSpec ctrl = make_control_driver([](double) { return 1.0; },
                                                [](double) { return 5.0; }, 3.0, 1.1);
    const DriverSpec t3 = truncate(ctrl, 3.0);
    CHECK(t3.evaluate(0.0, 0.0, no_z) == doctest::Approx(3.0).epsilon(1e-15));

    // toy driver has f0 = 0: truncation idles
    const DriverSpec toy = make_toy_driver(3.0);
    const DriverSpec toy5 = truncate(toy, 5.0);
    CHECK(toy5.evaluate(0.0, 1.3, no_z) == toy.evaluate(0.0, 1.3, no_z));

    // a large cap restores the original values on a sample grid
    const DriverSpec big = truncate(ctrl, 1e6);
    for (double y : {-3.0, 0.0, 0.7, 11.0})
        CHECK(big.evaluate(0.5, y, no_z) == doctest::Approx(ctrl.evaluate(0.5, y, no_z)));

    // monotone in the level, and composition takes the smaller cap
    const Philox gen(5);
    const DriverSpec t4 = truncate(ctrl, 4.0);
    for (int i = 0; i < 10000; ++i) {
        const auto u = gen.uniform_pair(static_cast<uint64_t>(i), 0, 0);
        const double t = u[0];
        const double y = 40.0 * (u[1] - 0.5);
        CHECK(t3.evaluate(t, y, no_z) <= t4.evaluate(t, y, no_z) + 1e-12);
    }
    const DriverSpec t43 = truncate(t4, 3.0);
    const DriverSpec t34 = truncate(t3, 4.0);
    CHECK(t43.evaluate(0.2, 1.0, no_z) == t3.evaluate(0.2, 1.0, no_z));
    CHECK(t34.evaluate(0.2, 1.0, no_z) == t3.evaluate(0.2, 1.0, no_z));

    CHECK_THROWS_AS(truncate(ctrl, 0.0), std::invalid_argument);
}

TEST_CASE("condition spot-check: clean drivers and a designed counterexample") {
    ConditionSampleSpec spec;
    spec.n_samples = 5000;

    SUBCASE("toy driver is clean") {
        const ConditionReport rep = check_condition_a(make_toy_driver(3.0), spec);
        CHECK(rep.clean());
        CHECK(rep.integrability_finite);
        // a = 1: integrand (1/q)^(ell/q) + 0 = 3^(-1/3)
        CHECK(rep.integrability_value ==
              doctest::Approx(std::pow(1.0 / 3.0, 1.0 / 3.0)).epsilon(1e-6));
    }

    SUBCASE("control driver is clean with the quadrature value from the oracle") {
        const DriverSpec ctrl = make_control_driver([](double) { return 1.0; },
                                                    [](double) { return 5.0; }, 3.0, 1.1);
        const ConditionReport rep = check_condition_a(ctrl, spec);
        CHECK(rep.clean());
        // independent quadrature of (1/(q a))^{ell/q} + gamma^ell on [0,1]
        const double expected = oracle::integrate(
            [&](double t) {
                return std::pow(1.0 / (3.0 * ctrl.a(t)), 1.1 / 3.0) + std::pow(5.0, 1.1);
            },
            0.0, 1.0);
        CHECK(rep.integrability_value == doctest::Approx(expected).epsilon(1e-9));
    }

    SUBCASE("f(y) = +y^2 violates monotonicity and the envelope") {
        DriverSpec bad = make_toy_driver(1.0);
        bad.name = "designed_counterexample";
        bad.f = [](double, double y, std::span<const double>) { return y * y; };
        bad.power_family = false;
        const ConditionReport rep = check_condition_a(bad, spec);
        CHECK(rep.monotonicity_excess > 1.0);
        CHECK(rep.envelope_excess > 1.0);
    }
}

TEST_CASE("exponent validation for singular runs") {
    // ell = 1 is reserved for z-independent generators
    CHECK_THROWS_AS(validate_exponents_for_singular(3.0, 1.0, 0.5), std::invalid_argument);
    CHECK_NOTHROW(validate_exponents_for_singular(3.0, 1.0, 0.0));
    // for q > 2 the window is (1, 2q/(2+q))
    CHECK_NOTHROW(validate_exponents_for_singular(3.0, 1.1, 0.0));
    CHECK_THROWS_AS(validate_exponents_for_singular(3.0, 1.3, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(make_toy_driver(3.0, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(make_toy_driver(-1.0), std::invalid_argument);
}

TEST_CASE("envelope identity for the control driver holds exactly") {
    // f(t,y,0) - f(t,0,0) = -a(t) y^{1+q} for y >= 0, by construction
    const DriverSpec ctrl = make_control_driver([](double t) { return 1.0 + 0.5 * t; },
                                                [](double) { return 2.0; }, 3.0, 1.1);
    const Philox gen(17);
    for (int i = 0; i < 1000; ++i) {
        const auto u = gen.uniform_pair(static_cast<uint64_t>(i), 0, 0);
        const double t = u[0];
        const double y = 10.0 * u[1];
        const double lhs = ctrl.evaluate(t, y, no_z) - ctrl.evaluate(t, 0.0, no_z);
        const double rhs = -ctrl.a(t) * std::pow(y, 4.0);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}
