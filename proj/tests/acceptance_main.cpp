// Acceptance harness: one line per criterion, nonzero exit if any fails.
// Heavy ensembles are shared between the criteria they serve.

#include "bsdelab/analysis.hpp"
#include "bsdelab/bsde.hpp"
#include "bsdelab/config.hpp"
#include "bsdelab/csv.hpp"
#include "bsdelab/liquidation.hpp"
#include "bsdelab/pipeline.hpp"

#include "oracle_utils.hpp"

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

using namespace bsdelab;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

double now() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void report(int number, bool pass, const std::string& what, const std::string& detail) {
    std::printf("[%s] %02d %s: %s\n", pass ? "PASS" : "FAIL", number, what.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

FunctionalSpec identity_functional() {
    return make_markovian(
        "markovian_identity", [](double, std::span<const double> x) { return x[0]; },
        [](double, std::span<const double>) { return 0.0; },
        [](double, std::span<const double>, std::span<double> g) { g[0] = 1.0; },
        [](double, std::span<const double>, std::span<double> h) { h[0] = 0.0; });
}

TerminalSpec constant_terminal(double c) {
    TerminalSpec t;
    t.phi = make_phi_constant(c);
    t.functional = identity_functional();
    return t;
}

TerminalSpec infinite_terminal() {
    TerminalSpec t;
    t.phi = make_phi_infinite();
    t.functional = identity_functional();
    return t;
}

TerminalSpec markovian_singular_terminal() {
    TerminalSpec t;
    t.phi = make_phi_positive_identity();
    t.functional = identity_functional();
    return t;
}

RegressionBasis singular_basis(int bins = 6) {
    RegressionBasis b;
    b.features = {Feature::State};
    b.degree = 3;
    b.split_at_singular_boundary = true;
    b.quantile_bins = bins;
    return b;
}

// ---------------------------------------------------------------------------

void criterion_1_finite_oracle() {
    const double t0 = now();
    const DriverSpec toy = make_toy_driver(3.0);
    const auto grid = make_uniform_grid(1.0, 1000); // dt = 1e-3
    const Ensemble ens = euler_simulate(make_constant_model({0.0}), grid, 4, 1);
    const BsdeSolution sol = solve_truncated(ens, toy, constant_terminal(1.0), 10.0, {});
    const double exact = std::pow(4.0, -1.0 / 3.0); // 0.629961...
    const double rel = std::abs(sol.y0() - exact) / exact;
    const double secs = now() - t0;
    report(1, rel <= 1e-3 && secs < 5.0, "deterministic finite-terminal oracle",
           fmt("Y(0)=%.6f vs %.6f, rel_err=%.2e (tol 1e-3), %.2fs (budget 5s)", sol.y0(), exact,
               rel, secs));
}

void criterion_2_singular_oracle() {
    const double t0 = now();
    const DriverSpec toy = make_toy_driver(3.0);
    const auto grid = make_uniform_grid(1.0, 1000);
    const Ensemble ens = euler_simulate(make_constant_model({0.0}), grid, 4, 1);
    const std::vector<double> levels = {10.0, 1e2, 1e3, 1e4, 1e5, 1e6};
    const Ladder lad = truncation_ladder(ens, toy, infinite_terminal(), levels, {});

    const double exact = std::pow(3.0, -1.0 / 3.0); // 0.693361...
    const double rel = std::abs(lad.top().y0() - exact) / exact;

    // strictly increasing in the function order: <= at every node, < somewhere
    bool increasing = true;
    for (size_t s = 1; s < lad.solutions.size(); ++s) {
        const BsdeSolution& lo = lad.solutions[s - 1];
        const BsdeSolution& hi = lad.solutions[s];
        bool some_strict = false;
        for (int j = 0; j <= lo.n_steps() && increasing; ++j) {
            if (lo.y_at(0, j) > hi.y_at(0, j)) increasing = false;
            if (lo.y_at(0, j) < hi.y_at(0, j)) some_strict = true;
        }
        if (!some_strict) increasing = false;
    }
    const double secs = now() - t0;
    report(2, rel <= 0.01 && increasing && secs < 10.0, "deterministic singular ladder",
           fmt("Y(0)=%.6f vs %.6f, rel_err=%.2e (tol 1e-2), strictly_increasing=%d, %.2fs"
               " (budget 10s)",
               lad.top().y0(), exact, rel, increasing, secs));
}

struct StochasticRun {
    GridPtr grid;
    Ensemble ens;
    Ladder ladder;
    TerminalSpec term;
    DriverSpec driver;
};

StochasticRun make_stochastic_run(int n_steps, int n_paths, uint64_t seed,
                                  std::vector<double> levels) {
    StochasticRun run;
    run.driver = make_toy_driver(3.0);
    run.grid = make_uniform_grid(1.0, n_steps);
    run.ens = euler_simulate(make_brownian_model({1.0}, 1.0), run.grid, n_paths, seed);
    run.term = markovian_singular_terminal();
    run.ladder = truncation_ladder(run.ens, run.driver, run.term, levels, singular_basis());
    return run;
}

void criterion_3_apriori(const StochasticRun& run, double stochastic_secs) {
    // Deterministic branch: exact rung profiles against the explicit bound.
    const auto det_grid = make_uniform_grid(1.0, 256);
    double worst_det = 0.0;
    const std::vector<double> rungs = {10.0, 1e2, 1e3, 1e4, 1e5, 1e6,
                                       std::numeric_limits<double>::infinity()};
    for (double level : rungs) {
        const auto y = deterministic_ode_solve(make_toy_driver(3.0), level, *det_grid);
        for (int j = 0; j < det_grid->n_nodes() - 1; ++j) {
            const double tau = 1.0 - det_grid->point(j);
            worst_det = std::max(worst_det, y[static_cast<size_t>(j)] /
                                                std::pow(3.0 * tau, -1.0 / 3.0));
        }
    }
    const bool det_ok = worst_det <= 1.0 + 1e-9;

    const AprioriReport rep = apriori_bound_check(run.ladder, run.driver);
    const bool stoch_ok = rep.applicable && rep.violation_fraction <= 0.01;
    report(3, det_ok && stoch_ok && stochastic_secs < 60.0, "a priori bound",
           fmt("deterministic worst_ratio=%.12f (100%% of nodes <= bound); stochastic"
               " violation_fraction=%.4f (allow 1%%), worst_ratio=%.3f; ladder %.1fs"
               " (budget 60s)",
               worst_det, rep.violation_fraction, rep.worst_ratio, stochastic_secs));
}

void criterion_4_blowup() {
    // Halving steps toward T put the offsets T - 2^-k on exact grid nodes and
    // make the scheme's terminal-layer residue the same at every offset, so
    // it cancels out of the log-log slope; a uniform grid bends the fit at
    // the smallest offsets instead.
    const DriverSpec toy = make_toy_driver(3.0);
    const auto grid = make_geometric_grid(1.0, 40, 0.5, 1e-7);
    const Ensemble ens = euler_simulate(make_brownian_model({1.0}, 1.0), grid, 4000, 97);
    const TerminalSpec term = markovian_singular_terminal();
    const std::vector<double> levels = {10.0, 1e2, 1e3, 1e4};
    const Ladder lad = truncation_ladder(ens, toy, term, levels, singular_basis());

    std::vector<double> eps;
    for (int k = 4; k <= 9; ++k) eps.push_back(std::pow(2.0, -k));
    const BlowupReport rep = blowup_rate(lad, ens, term, eps, 0.25);
    const bool pass = rep.slope >= -1.2 / 3.0 && rep.slope <= -0.8 / 3.0;
    report(4, pass, "blow-up rate on the singular stratum",
           fmt("slope=%.4f (want [-0.4000, -0.2667]), se=%.4f, stratum_mass=%.3f", rep.slope,
               rep.slope_se, rep.stratum_mass));
}

void criterion_5_continuity(const StochasticRun& run) {
    const TestFunction tf(0.5, 2.0, 3.0, run.driver.q);
    // the driver damping keeps E[Y phi] below the target by O(T - t), so the
    // bracketing probes have to sit close to the horizon
    const std::vector<double> times = {0.875, 0.9375, 0.96875, 0.984375,
                                       0.9921875, 0.99609375};
    const ContinuityReport rep =
        weighted_terminal_continuity(run.ladder, run.ens, run.term, tf, times);

    // independent Gauss-quadrature target for Gaussian X(T) ~ N(1, 1)
    const double target = oracle::integrate(
        [&](double r) { return r * tf.value(r) * oracle::normal_pdf(r, 1.0, 1.0); }, 0.5, 2.0);

    const size_t m = rep.weighted_means.size();
    bool bracket = true;
    for (size_t k = m - 2; k < m; ++k) {
        const double dist = std::abs(rep.weighted_means[k].mean - target);
        if (dist > 2.0 * rep.weighted_means[k].se) bracket = false;
    }
    bool decreasing = true;
    for (size_t k = m - 2; k < m; ++k) {
        if (std::abs(rep.weighted_means[k].mean - target) >
            std::abs(rep.weighted_means[k - 1].mean - target))
            decreasing = false;
    }
    std::ostringstream seq;
    for (size_t k = 0; k < m; ++k)
        seq << fmt("%.4f±%.4f ", rep.weighted_means[k].mean, rep.weighted_means[k].se);
    report(5, bracket && decreasing, "weighted terminal continuity",
           fmt("E[Y phi] -> %s; quadrature target %.4f (MC target %.4f±%.4f); last two within"
               " 2 SE=%d, decreasing over last three=%d",
               seq.str().c_str(), target, rep.target.mean, rep.target.se, bracket, decreasing));
}

void criterion_6_monotone(const StochasticRun& run) {
    bool pass = true;
    std::ostringstream os;
    for (const auto& pair : run.ladder.pairs) {
        if (pair.violation_fraction > 0.01) pass = false;
        os << fmt("%g->%g:%.4f ", pair.level_low, pair.level_high, pair.violation_fraction);
    }
    report(6, pass, "monotone comparison across the ladder",
           fmt("violation fractions (allow 1%%): %s", os.str().c_str()));
}

void criterion_7_ito_orders() {
    const auto table = compute_ito_orders(/*seed=*/11, /*n_paths=*/200, /*base_steps=*/64,
                                          /*refinements=*/4, /*horizon=*/1.0);
    bool pass = true;
    std::ostringstream os;
    for (const auto& row : table) {
        if (row.functional == "markovian_linear" || row.functional == "qv_integral_linear") {
            // exact for the discrete path class: telescoping / exact quadrature
            const bool ok = row.max_rms <= 1e-10;
            pass = pass && ok;
            os << fmt("%s: exact rms=%.1e ", row.functional.c_str(), row.max_rms);
        } else {
            const bool ok = row.order >= 0.45 && row.order <= 0.55;
            pass = pass && ok;
            os << fmt("%s: order=%.3f ", row.functional.c_str(), row.order);
        }
    }
    report(7, pass, "functional change-of-variable residual orders",
           fmt("%s(window [0.45,0.55], exact rows <= 1e-10)", os.str().c_str()));
}

void criterion_8_derivative_fidelity() {
    const auto g = make_uniform_grid(1.0, 4096);
    const Philox gen(321);
    std::vector<FunctionalSpec> fs;
    fs.push_back(make_markovian(
        "markovian_sin", [](double, std::span<const double> x) { return std::sin(x[0]); },
        [](double, std::span<const double>) { return 0.0; },
        [](double, std::span<const double> x, std::span<double> gr) { gr[0] = std::cos(x[0]); },
        [](double, std::span<const double> x, std::span<double> h) { h[0] = -std::sin(x[0]); }));
    fs.push_back(make_qv_integral(
        "qv_integral_linear", [](double, std::span<const double> x) { return x[0]; },
        [](double, std::span<const double>) { return 0.0; },
        [](double, std::span<const double>, std::span<double> gr) { gr[0] = 1.0; }));
    fs.push_back(make_square_minus_qv());
    fs.push_back(make_exp_martingale());

    DerivativeStencil stencil;
    stencil.richardson_horizontal = true;

    const int n_paths = 1000;
    const int reps = n_paths / static_cast<int>(fs.size());
    double worst = 0.0;
    std::string worst_what = "-";
    std::vector<double> xv(4097), vv(4097);
    for (size_t fi = 0; fi < fs.size(); ++fi) {
        for (int rep = 0; rep < reps; ++rep) {
            for (int j = 0; j <= 4096; ++j) {
                const auto u = gen.uniform_pair(static_cast<uint64_t>(rep) + 1000 * fi,
                                                static_cast<uint64_t>(j), 1);
                xv[static_cast<size_t>(j)] = (2.0 * u[0] - 1.0) * 10.0;
                vv[static_cast<size_t>(j)] = 10.0 * u[1];
            }
            const DiscretePath x(g, 1, xv);
            const DiscretePath v(g, 1, vv);
            const int t = 1 + static_cast<int>(
                                  gen.uniform_pair(static_cast<uint64_t>(rep) + 1000 * fi, 777,
                                                   0)[0] *
                                  4000);
            const auto xs = view_stopped_at(x, t);
            const auto vs = view_stopped_at(v, t);

            std::vector<double> grad_ana(1), hess_ana(1);
            fs[fi].gradient(t, xs, vs, grad_ana);
            fs[fi].hessian(t, xs, vs, hess_ana);
            const auto grad_num = vertical_derivative(fs[fi], t, xs, vs, stencil);
            const auto hess_num = second_vertical_derivative(fs[fi], t, xs, vs, stencil);
            const auto dh = horizontal_derivative(fs[fi], t, xs, vs, stencil);

            auto scaled = [&](double num, double ana, const char* which) {
                const double err = std::abs(num - ana) / std::max(1.0, std::abs(ana));
                if (err > worst) {
                    worst = err;
                    worst_what = std::string(fs[fi].name) + "/" + which;
                }
            };
            scaled(grad_num[0], grad_ana[0], "grad");
            scaled(hess_num[0], hess_ana[0], "hess");
            scaled(dh.numeric, *dh.analytic, "DF");
        }
    }
    report(8, worst <= 1e-6, "derivative fidelity on random stopped paths",
           fmt("worst scaled error %.2e at %s over %d paths (tol 1e-6)", worst,
               worst_what.c_str(), reps * static_cast<int>(fs.size())));
}

void criterion_9_zenergy() {
    // Fine grid so the certified window [0, T - 1/64] is resolved by many
    // steps; the energies are integrated over that window, where the ladder
    // has converged.
    const DriverSpec toy = make_toy_driver(3.0);
    const auto grid = make_uniform_grid(1.0, 1024);
    const Ensemble ens = euler_simulate(make_brownian_model({1.0}, 1.0), grid, 4000, 97);
    const TerminalSpec term = markovian_singular_terminal();
    const std::vector<double> levels = {10.0, 1e2, 1e3, 1e4};
    const Ladder lad =
        truncation_ladder(ens, toy, term, levels, singular_basis(), {}, 1.0 / 64.0);

    const ZEnergyReport rep = z_weighted_energy(lad, toy, 0.8, lad.certified_node);
    std::ostringstream os;
    double top = 0.0;
    for (size_t i = 0; i < rep.levels.size(); ++i) {
        top = std::max(top, rep.energy[i].mean);
        os << fmt("%g:%.4f±%.4f ", rep.levels[i], rep.energy[i].mean, rep.energy[i].se);
    }
    const bool bounded = top <= rep.toy_bound;

    // deterministic branch: zero-noise Z vanishes identically
    const auto det_grid = make_uniform_grid(1.0, 256);
    const Ensemble det_ens = euler_simulate(make_constant_model({0.0}), det_grid, 4, 1);
    const std::vector<double> lv = {10.0, 100.0};
    const Ladder det_lad = truncation_ladder(det_ens, toy, infinite_terminal(), lv, {});
    const ZEnergyReport det = z_weighted_energy(det_lad, toy, 0.8);
    bool det_zero = true;
    for (const auto& e : det.energy) det_zero = det_zero && e.mean == 0.0;

    report(9, rep.flat_within_2se && bounded && det_zero, "weighted Z-energy across the ladder",
           fmt("%s top pair flat within 2 SE=%d; all below the toy constant"
               " 16(1/q)^(2/q)=%.4f: %d; deterministic energy exactly 0: %d",
               os.str().c_str(), rep.flat_within_2se, rep.toy_bound, bounded, det_zero));
}

void criterion_10_liquidation() {
    // (a) deterministic mandatory liquidation against the closed form
    const DriverSpec toy = make_toy_driver(3.0);
    const auto det_grid = make_uniform_grid(1.0, 10000);
    const Ensemble det_ens = euler_simulate(make_constant_model({0.0}), det_grid, 4, 3);
    const BsdeSolution det_sol = solve_truncated(det_ens, toy, infinite_terminal(), 1e6, {});
    ControlProblem det_problem;
    det_problem.alpha = [](double) { return std::pow(1.0 / 3.0, 1.0 / 3.0); };
    det_problem.gamma = [](double) { return 0.0; };
    det_problem.q = 3.0;
    det_problem.x0 = 2.0;
    const ControlPolicy det_cand = candidate_feedback(det_problem, det_sol);
    const CostEstimate det_cost = simulate_cost(det_problem, det_cand, det_ens, det_sol);
    const double target = std::pow(2.0, 4.0 / 3.0) * std::pow(3.0, -1.0 / 3.0);
    const double det_rel = std::abs(det_cost.cost - target) / target;
    const bool det_ok = det_rel <= 1e-3 && det_cost.violating_fraction == 0.0;

    // (b) stochastic-alpha scenario: the candidate must beat 10 perturbations
    const DriverSpec drv = make_control_driver(
        [](double t) { return 1.0 + 0.5 * std::abs(std::sin(t)); }, [](double) { return 0.0; },
        3.0, 1.1);
    const auto grid = make_uniform_grid(1.0, 1024);
    const Ensemble ens = euler_simulate(make_brownian_model({1.0}, 1.0), grid, 10000, 55);
    const TerminalSpec term = markovian_singular_terminal();
    const BsdeSolution sol = solve_truncated(ens, drv, term, 1000.0, singular_basis(8));
    ControlProblem pb;
    pb.alpha = [](double t) { return 1.0 + 0.5 * std::abs(std::sin(t)); };
    pb.gamma = [](double) { return 0.0; };
    pb.q = 3.0;
    pb.x0 = 1.0;
    const OptimalityReport rep = optimality_gap(pb, sol, ens, 10, 777);
    double min_margin = std::numeric_limits<double>::infinity();
    for (double m : rep.beat_margin_se) min_margin = std::min(min_margin, m);
    // (c) terminal constraint: any nonzero X(T) on a singular path would show
    // up as a violation with infinite cost
    const bool constraint_ok = rep.candidate.violating_fraction == 0.0;
    const bool stoch_ok = rep.candidate_beats_all && constraint_ok;

    report(10, det_ok && stoch_ok, "liquidation optimality",
           fmt("deterministic cost=%.6f vs %.6f (rel %.2e, tol 1e-3); stochastic-alpha:"
               " min margin %.1f paired SE over 10 perturbations, value gap %.3f,"
               " |X*(T)|=0 on the singular set: %d",
               det_cost.cost, target, det_rel, min_margin, rep.value_gap, constraint_ok));
}

void criterion_11_reproducibility() {
    const std::string cfg_text = R"({
      "model": {"name": "brownian", "x0": [1.0], "sigma": 1.0},
      "driver": {"name": "toy", "q": 3.0, "ell": 1.0},
      "terminal": {"phi": {"kind": "positive_identity"},
                   "functional": {"name": "markovian_identity"}},
      "grid": {"n_steps": 64, "horizon": 1.0},
      "solver": {"levels": [10.0, 100.0, 1000.0]},
      "probes": {"apriori": true,
                 "blowup": {"eps": [0.25, 0.125, 0.0625, 0.03125]},
                 "zenergy": {"rho": 0.8},
                 "continuity": {"times": [0.5, 0.75, 0.875, 0.9375],
                                 "psi_lo": 0.5, "psi_hi": 2.0, "gamma": 3.0},
                 "liminf": {"eps": [0.25, 0.125, 0.0625],
                            "thresholds": [0.5, 0.7, 0.9]}},
      "liquidation": {"x0": 1.0, "perturbations": 3},
      "n_paths": 500,
      "seed": 42
    })";
    const ExperimentConfig cfg = parse_config_text(cfg_text);
    const fs::path base = fs::temp_directory_path() / "bsdelab_acceptance_repro";
    fs::remove_all(base);
    fs::create_directories(base);
    run_pipeline(cfg, (base / "a").string(), 1);
    run_pipeline(cfg, (base / "b").string(), 3);

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        return os.str();
    };
    int compared = 0;
    bool identical = true;
    for (const auto& entry : fs::directory_iterator(base / "a")) {
        if (entry.path().extension() != ".csv") continue;
        ++compared;
        if (slurp(entry.path()) != slurp(base / "b" / entry.path().filename()))
            identical = false;
    }
    fs::remove_all(base);
    report(11, identical && compared >= 6, "byte-identical reruns",
           fmt("%d CSV files compared across two runs (different worker counts), identical=%d",
               compared, identical));
}

} // namespace

int main() {
    std::printf("acceptance suite, 11 criteria\n");
    criterion_1_finite_oracle();
    criterion_2_singular_oracle();

    const double t0 = now();
    const StochasticRun run = make_stochastic_run(256, 10000, 2024, {10.0, 1e2, 1e3, 1e4});
    const double stochastic_secs = now() - t0;

    criterion_3_apriori(run, stochastic_secs);
    criterion_4_blowup();
    criterion_5_continuity(run);
    criterion_6_monotone(run);
    criterion_7_ito_orders();
    criterion_8_derivative_fidelity();
    criterion_9_zenergy();
    criterion_10_liquidation();
    criterion_11_reproducibility();

    std::printf("%s: %d of 11 criteria failed\n", g_failures == 0 ? "SUCCESS" : "FAILURE",
                g_failures);
    return g_failures == 0 ? 0 : 1;
}
