#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bsdelab/functional.hpp"
#include "bsdelab/rng.hpp"
#include "bsdelab/sde.hpp"

#include "oracle_utils.hpp"

#include <cmath>
#include <vector>

using namespace bsdelab;

namespace {

FunctionalSpec markovian_sin() {
    return make_markovian(
        "markovian_sin", [](double, std::span<const double> x) { return std::sin(x[0]); },
        [](double, std::span<const double>) { return 0.0; },
        [](double, std::span<const double> x, std::span<double> g) { g[0] = std::cos(x[0]); },
        [](double, std::span<const double> x, std::span<double> h) { h[0] = -std::sin(x[0]); });
}

FunctionalSpec markovian_identity() {
    return make_markovian(
        "markovian_identity", [](double, std::span<const double> x) { return x[0]; },
        [](double, std::span<const double>) { return 0.0; },
        [](double, std::span<const double>, std::span<double> g) { g[0] = 1.0; },
        [](double, std::span<const double>, std::span<double> h) { h[0] = 0.0; });
}

FunctionalSpec qv_integral_linear() {
    return make_qv_integral(
        "qv_integral_linear", [](double, std::span<const double> x) { return x[0]; },
        [](double, std::span<const double>) { return 0.0; },
        [](double, std::span<const double>, std::span<double> g) { g[0] = 1.0; });
}

} // namespace

TEST_CASE("horizontal derivative matches hand differentiation of the flat extension") {
    const auto g = make_uniform_grid(1.0, 10);

    SUBCASE("state readout has no explicit time dependence") {
        const auto f = markovian_identity();
        const auto x = oracle::path_from(g, [](double t) { return 2.0 * t + 1.0; });
        const auto v = oracle::path_from(g, [](double) { return 1.0; });
        for (int j = 0; j < 10; ++j) {
            const auto d = horizontal_derivative(f, j, view_stopped_at(x, j),
                                                 view_stopped_at(v, j));
            CHECK(d.numeric == doctest::Approx(0.0).epsilon(1e-14));
            CHECK(*d.analytic == 0.0);
        }
    }

    SUBCASE("square-minus-qv sees minus the current density") {
        const auto f = make_square_minus_qv();
        const auto x = oracle::path_from(g, [](double t) { return t; });
        const auto v = oracle::path_from(g, [](double) { return 0.8; });
        const auto d =
            horizontal_derivative(f, 4, view_stopped_at(x, 4), view_stopped_at(v, 4));
        CHECK(d.numeric == doctest::Approx(-0.8).epsilon(1e-12));
        CHECK(*d.analytic == doctest::Approx(-0.8).epsilon(1e-15));
    }

    SUBCASE("integral functional sees h(t, X(t)) A(t)") {
        const auto f = qv_integral_linear();
        const auto x = oracle::path_from(g, [](double) { return 2.0; });
        const auto v = oracle::path_from(g, [](double) { return 1.0; });
        const auto d =
            horizontal_derivative(f, 5, view_stopped_at(x, 5), view_stopped_at(v, 5));
        CHECK(d.numeric == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(*d.analytic == doctest::Approx(2.0).epsilon(1e-15));
    }

    SUBCASE("no forward room at the horizon") {
        const auto f = markovian_identity();
        const auto x = oracle::path_from(g, [](double t) { return t; });
        const auto v = oracle::path_from(g, [](double) { return 1.0; });
        CHECK_THROWS_AS(
            horizontal_derivative(f, 10, view_stopped_at(x, 10), view_stopped_at(v, 10)),
            std::invalid_argument);
    }
}

TEST_CASE("vertical derivatives") {
    const auto g = make_uniform_grid(1.0, 10);
    const auto v = oracle::path_from(g, [](double) { return 0.5; });

    SUBCASE("central difference is exact for the quadratic functional") {
        const auto f = make_square_minus_qv();
        const auto x = oracle::path_from(g, [](double) { return 1.5; });
        const auto d = vertical_derivative(f, 3, view_stopped_at(x, 3), view_stopped_at(v, 3));
        CHECK(d[0] == doctest::Approx(3.0).epsilon(1e-10));
    }

    SUBCASE("markovian gradient recovers the state derivative") {
        const auto f = markovian_sin();
        const auto x = oracle::path_from(g, [](double) { return 0.0; });
        const auto d = vertical_derivative(f, 3, view_stopped_at(x, 3), view_stopped_at(v, 3));
        CHECK(d[0] == doctest::Approx(1.0).epsilon(1e-8));
    }

    SUBCASE("integral functional has zero vertical derivative") {
        const auto f = qv_integral_linear();
        const auto x = oracle::path_from(g, [](double t) { return t + 1.0; });
        const auto d = vertical_derivative(f, 5, view_stopped_at(x, 5), view_stopped_at(v, 5));
        CHECK(d[0] == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("second vertical derivatives") {
    const auto g = make_uniform_grid(1.0, 10);
    const auto v = oracle::path_from(g, [](double) { return 0.0; });

    SUBCASE("quadratic functional: exactly 2") {
        const auto f = make_square_minus_qv();
        const auto x = oracle::path_from(g, [](double) { return 1.0; });
        const auto h =
            second_vertical_derivative(f, 4, view_stopped_at(x, 4), view_stopped_at(v, 4));
        CHECK(h[0] == doctest::Approx(2.0).epsilon(1e-7));
    }

    SUBCASE("linear functional: zero matrix") {
        const auto f = markovian_identity();
        const auto x = oracle::path_from(g, [](double t) { return 3.0 * t; });
        const auto h =
            second_vertical_derivative(f, 4, view_stopped_at(x, 4), view_stopped_at(v, 4));
        CHECK(h[0] == doctest::Approx(0.0).epsilon(1e-9));
    }

    SUBCASE("exponential martingale functional at the origin") {
        const auto f = make_exp_martingale();
        const auto x = oracle::path_from(g, [](double) { return 0.0; });
        const auto h =
            second_vertical_derivative(f, 0, view_stopped_at(x, 0), view_stopped_at(v, 0));
        CHECK(h[0] == doctest::Approx(1.0).epsilon(1e-7));
    }
}

TEST_CASE("two-dimensional stencils: gradient and cross Hessian terms") {
    // h(x) = x1 x2 + sin(x1): grad = (x2 + cos x1, x1), cross second
    // derivative = 1, diagonal = (-sin x1, 0)
    const auto f = make_markovian(
        "bilinear_sin",
        [](double, std::span<const double> x) { return x[0] * x[1] + std::sin(x[0]); },
        [](double, std::span<const double>) { return 0.0; },
        [](double, std::span<const double> x, std::span<double> g) {
            g[0] = x[1] + std::cos(x[0]);
            g[1] = x[0];
        },
        [](double, std::span<const double> x, std::span<double> h) {
            h[0] = -std::sin(x[0]);
            h[1] = 1.0;
            h[2] = 1.0;
            h[3] = 0.0;
        });
    const auto g = make_uniform_grid(1.0, 8);
    std::vector<double> xv(18), vv(18);
    for (int j = 0; j <= 8; ++j) {
        xv[static_cast<size_t>(2 * j)] = 0.3 + 0.1 * j;
        xv[static_cast<size_t>(2 * j + 1)] = -1.2 + 0.2 * j;
        vv[static_cast<size_t>(2 * j)] = 1.0;
        vv[static_cast<size_t>(2 * j + 1)] = 0.5;
    }
    const DiscretePath x(g, 2, xv);
    const DiscretePath v(g, 2, vv);
    const int t = 5;
    const auto xs = view_stopped_at(x, t);
    const auto vs = view_stopped_at(v, t);

    std::vector<double> grad_ana(2), hess_ana(4);
    f.gradient(t, xs, vs, grad_ana);
    f.hessian(t, xs, vs, hess_ana);
    const auto grad_num = vertical_derivative(f, t, xs, vs);
    const auto hess_num = second_vertical_derivative(f, t, xs, vs);
    for (int k = 0; k < 2; ++k)
        CHECK(grad_num[static_cast<size_t>(k)] ==
              doctest::Approx(grad_ana[static_cast<size_t>(k)]).epsilon(1e-7));
    for (int rc = 0; rc < 4; ++rc)
        CHECK(hess_num[static_cast<size_t>(rc)] ==
              doctest::Approx(hess_ana[static_cast<size_t>(rc)]).scale(1.0).epsilon(1e-5));
    // symmetrized output
    CHECK(hess_num[1] == hess_num[2]);
}

TEST_CASE("stencil-only functionals: residual and theta1 without analytic derivatives") {
    // same functional as square_minus_qv but with the analytic slots empty,
    // so the change-of-variable machinery has to go through the stencils
    FunctionalSpec plain;
    plain.name = "square_minus_qv_stencil";
    plain.eval = make_square_minus_qv().eval;

    const SdeModel bm = make_brownian_model({0.0}, 1.0);
    const auto grid = make_uniform_grid(1.0, 64);
    const Ensemble ens = euler_simulate(bm, grid, 8, 17);
    const auto analytic = make_square_minus_qv();
    for (int i = 0; i < ens.n_paths; ++i) {
        const double r_num = ito_residual(plain, ens.x_path(i), ens.a_path(i));
        const double r_ana = ito_residual(analytic, ens.x_path(i), ens.a_path(i));
        CHECK(r_num == doctest::Approx(r_ana).epsilon(1e-4).scale(1.0));
    }

    // theta1 via stencils: martingale functional, zero drift => flat zero;
    // the final node reuses the previous value by construction
    const auto zero_b = oracle::path_from(grid, [](double) { return 0.0; });
    const auto x1 = ens.x_path(0);
    const auto a1 = ens.a_path(0);
    const auto th = theta1(plain, x1, a1, zero_b);
    for (int j = 0; j < grid->n_nodes(); ++j)
        CHECK(std::abs(th.value(j)) <= 1e-4);
    CHECK(th.value(grid->n_nodes() - 1) == th.value(grid->n_nodes() - 2));
}

TEST_CASE("non-anticipativity and predictable dependence") {
    const auto g = make_uniform_grid(1.0, 16);
    const Philox gen(7);
    const std::vector<FunctionalSpec> fs = {markovian_sin(), qv_integral_linear(),
                                            make_square_minus_qv(), make_exp_martingale()};
    for (const auto& f : fs) {
        for (uint64_t rep = 0; rep < 20; ++rep) {
            std::vector<double> xv(17), vv(17);
            for (int j = 0; j <= 16; ++j) {
                const auto u = gen.uniform_pair(rep, static_cast<uint64_t>(j), 0);
                xv[static_cast<size_t>(j)] = 2.0 * u[0] - 1.0;
                vv[static_cast<size_t>(j)] = u[1]; // nonnegative density
            }
            const int t = 3 + static_cast<int>(gen.uniform_pair(rep, 99, 0)[0] * 10);
            const DiscretePath x(g, 1, xv);
            const DiscretePath v(g, 1, vv);
            const double base = f.eval(t, view_stopped_at(x, t), view_stopped_at(v, t));

            // tail scramble after t changes nothing
            auto xs = xv;
            auto vs = vv;
            for (int j = t + 1; j <= 16; ++j) {
                xs[static_cast<size_t>(j)] += 50.0 + j;
                vs[static_cast<size_t>(j)] += 50.0 + j;
            }
            const DiscretePath x2(g, 1, xs);
            const DiscretePath v2(g, 1, vs);
            CHECK(f.eval(t, view_stopped_at(x2, t), view_stopped_at(v2, t)) ==
                  doctest::Approx(base).epsilon(1e-15));

            // predictable dependence: the density at the current index is
            // invisible as well
            auto vcur = vv;
            vcur[static_cast<size_t>(t)] += 123.0;
            const DiscretePath v3(g, 1, vcur);
            CHECK(f.eval(t, view_stopped_at(x, t), view_stopped_at(v3, t)) ==
                  doctest::Approx(base).epsilon(1e-15));
        }
    }
}

TEST_CASE("theta1 examples") {
    const auto g = make_uniform_grid(1.0, 8);
    const auto zero_b = oracle::path_from(g, [](double) { return 0.0; });

    SUBCASE("state readout with zero drift is flat") {
        const auto f = markovian_identity();
        const auto x = oracle::path_from(g, [](double t) { return t; });
        const auto a = oracle::path_from(g, [](double) { return 1.0; });
        const auto th = theta1(f, x, a, zero_b);
        for (int j = 0; j < g->n_nodes(); ++j) CHECK(th.value(j) == doctest::Approx(0.0));
    }

    SUBCASE("square-minus-qv is a martingale functional: theta1 vanishes") {
        const auto f = make_square_minus_qv();
        const auto x = oracle::path_from(g, [](double t) { return 2.0 * t - 0.3; });
        const auto a = oracle::path_from(g, [](double) { return 1.0; });
        const auto th = theta1(f, x, a, zero_b);
        for (int j = 0; j < g->n_nodes(); ++j)
            CHECK(th.value(j) == doctest::Approx(0.0).epsilon(1e-12));
    }

    SUBCASE("integral functional keeps only the time term") {
        const auto f = qv_integral_linear();
        const auto x = oracle::path_from(g, [](double) { return 2.0; });
        const auto a = oracle::path_from(g, [](double) { return 1.0; });
        const auto th = theta1(f, x, a, zero_b);
        for (int j = 0; j < g->n_nodes(); ++j)
            CHECK(th.value(j) == doctest::Approx(2.0).epsilon(1e-12));
    }
}

TEST_CASE("ito residual: identities and telescoping") {
    const SdeModel bm = make_brownian_model({0.0}, 1.0);
    const auto grid = make_uniform_grid(1.0, 128);
    const Ensemble ens = euler_simulate(bm, grid, 64, 31);

    SUBCASE("linear markovian functional telescopes exactly") {
        const auto f = markovian_identity();
        for (int i = 0; i < ens.n_paths; ++i) {
            const double r = ito_residual(f, ens.x_path(i), ens.a_path(i));
            CHECK(std::abs(r) <= 1e-12);
        }
    }

    SUBCASE("square-minus-qv residual equals the discrete quadratic-variation defect") {
        const auto f = make_square_minus_qv();
        for (int i = 0; i < 16; ++i) {
            // independent route: the residual of x(t)^2 - int v dt collapses to
            // sum (dX)^2 - sum A dt
            double defect = 0.0;
            for (int j = 0; j < grid->n_steps(); ++j) {
                const double dx = ens.x_at(i, j + 1) - ens.x_at(i, j);
                defect += dx * dx - ens.a_at(i, j) * grid->dt(j);
            }
            const double r = ito_residual(f, ens.x_path(i), ens.a_path(i));
            CHECK(r == doctest::Approx(defect).epsilon(1e-9));
        }
    }

    SUBCASE("integral functional is exact for piecewise-constant paths") {
        const auto f = qv_integral_linear();
        for (int i = 0; i < 16; ++i) {
            const double r = ito_residual(f, ens.x_path(i), ens.a_path(i));
            CHECK(std::abs(r) <= 1e-12);
        }
    }

    SUBCASE("grid mismatch is rejected") {
        const auto g2 = make_uniform_grid(1.0, 64);
        const auto f = make_square_minus_qv();
        const auto a2 = oracle::path_from(g2, [](double) { return 1.0; });
        CHECK_THROWS_AS(ito_residual(f, ens.x_path(0), a2), std::invalid_argument);
    }
}

TEST_CASE("ito residual shrinks at order one-half for the diffusion functionals") {
    // smaller sibling of the acceptance check: 2 refinements, 100 paths
    const SdeModel bm = make_brownian_model({0.0}, 1.0);
    const int n_paths = 100;
    std::vector<double> logdt, logrms;
    for (int steps : {64, 128, 256}) {
        const auto grid = make_uniform_grid(1.0, steps);
        const Ensemble ens = euler_simulate(bm, grid, n_paths, 5);
        const auto f = make_square_minus_qv();
        double ms = 0.0;
        for (int i = 0; i < n_paths; ++i) {
            const double r = ito_residual(f, ens.x_path(i), ens.a_path(i));
            ms += r * r;
        }
        logdt.push_back(std::log(1.0 / steps));
        logrms.push_back(0.5 * std::log(ms / n_paths));
    }
    const auto fit = fit_slope(logdt, logrms);
    CHECK(fit.slope >= 0.35);
    CHECK(fit.slope <= 0.65);
}

TEST_CASE("derivative stencils against analytic built-ins on random stopped paths") {
    // the horizontal stencil can only step by whole grid intervals, so its
    // truncation error is O(dt^2) after extrapolation; the grid must be fine
    // enough for the 1e-6 gate
    const auto g = make_uniform_grid(1.0, 1024);
    const Philox gen(99);
    const std::vector<FunctionalSpec> fs = {markovian_sin(), qv_integral_linear(),
                                            make_square_minus_qv(), make_exp_martingale()};
    DerivativeStencil stencil;
    stencil.richardson_horizontal = true;

    double worst = 0.0;
    for (const auto& f : fs) {
        for (uint64_t rep = 0; rep < 40; ++rep) {
            std::vector<double> xv(1025), vv(1025);
            for (int j = 0; j <= 1024; ++j) {
                const auto u = gen.uniform_pair(rep + 500, static_cast<uint64_t>(j), 1);
                xv[static_cast<size_t>(j)] = (2.0 * u[0] - 1.0) * 3.0;
                vv[static_cast<size_t>(j)] = 2.0 * u[1];
            }
            const DiscretePath x(g, 1, xv);
            const DiscretePath v(g, 1, vv);
            const int t = 1 + static_cast<int>(gen.uniform_pair(rep + 500, 777, 0)[0] * 1000);
            const auto xs = view_stopped_at(x, t);
            const auto vs = view_stopped_at(v, t);

            std::vector<double> grad_ana(1), hess_ana(1);
            f.gradient(t, xs, vs, grad_ana);
            f.hessian(t, xs, vs, hess_ana);
            const auto grad_num = vertical_derivative(f, t, xs, vs, stencil);
            const auto hess_num = second_vertical_derivative(f, t, xs, vs, stencil);
            const auto dh = horizontal_derivative(f, t, xs, vs, stencil);

            auto scaled = [](double num, double ana) {
                return std::abs(num - ana) / std::max(1.0, std::abs(ana));
            };
            worst = std::max(worst, scaled(grad_num[0], grad_ana[0]));
            worst = std::max(worst, scaled(hess_num[0], hess_ana[0]));
            worst = std::max(worst, scaled(dh.numeric, *dh.analytic));
        }
    }
    CHECK(worst <= 1e-6);
}
