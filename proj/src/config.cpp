#include "bsdelab/config.hpp"

#include "bsdelab/stats.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace bsdelab {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError("config: " + msg); }

const json& get(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) fail(std::string("missing field '") + key + "'");
    return *it;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    return it->get<T>();
}

std::function<double(double)> parse_coefficient(const json& j, const char* what) {
    if (j.is_number()) {
        const double v = j.get<double>();
        return [v](double) { return v; };
    }
    if (j.is_object()) {
        const std::string kind = get(j, "kind").get<std::string>();
        if (kind == "const") {
            const double v = get(j, "value").get<double>();
            return [v](double) { return v; };
        }
        if (kind == "one_plus_half_abs_sin") {
            return [](double t) { return 1.0 + 0.5 * std::abs(std::sin(t)); };
        }
    }
    fail(std::string("unknown coefficient spec for ") + what);
}

SdeModel parse_model(const json& j) {
    const std::string name = get(j, "name").get<std::string>();
    std::vector<double> x0 = get(j, "x0").get<std::vector<double>>();
    if (x0.empty()) fail("model.x0 must be non-empty");
    if (name == "constant") return make_constant_model(std::move(x0));
    if (name == "brownian") return make_brownian_model(std::move(x0), get_or(j, "sigma", 1.0));
    if (name == "drifted_brownian")
        return make_drifted_brownian_model(std::move(x0), get_or(j, "mu", 0.0),
                                           get_or(j, "sigma", 1.0));
    if (name == "running_max_pull") {
        if (x0.size() != 1) fail("running_max_pull is a scalar model");
        return make_running_max_pull_model(x0[0], get_or(j, "sigma", 0.1));
    }
    fail("unknown model '" + name + "'");
}

DriverSpec parse_driver(const json& j) {
    const std::string name = get(j, "name").get<std::string>();
    const double q = get(j, "q").get<double>();
    const double ell = get_or(j, "ell", 1.0);
    try {
        if (name == "toy") return make_toy_driver(q, ell);
        if (name == "control") {
            auto alpha = parse_coefficient(get(j, "alpha"), "driver.alpha");
            auto gamma = parse_coefficient(get(j, "gamma"), "driver.gamma");
            return make_control_driver(std::move(alpha), std::move(gamma), q, ell);
        }
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
    fail("unknown driver '" + name + "'");
}

FunctionalSpec parse_functional(const json& j) {
    const std::string name = get(j, "name").get<std::string>();
    if (name == "markovian_identity") {
        return make_markovian(
            "markovian_identity", [](double, std::span<const double> x) { return x[0]; },
            [](double, std::span<const double>) { return 0.0; },
            [](double, std::span<const double>, std::span<double> g) {
                for (auto& v : g) v = 0.0;
                g[0] = 1.0;
            },
            [](double, std::span<const double>, std::span<double> h) {
                for (auto& v : h) v = 0.0;
            });
    }
    if (name == "markovian_square") {
        return make_markovian(
            "markovian_square", [](double, std::span<const double> x) { return x[0] * x[0]; },
            [](double, std::span<const double>) { return 0.0; },
            [](double, std::span<const double> x, std::span<double> g) {
                for (auto& v : g) v = 0.0;
                g[0] = 2.0 * x[0];
            },
            [](double, std::span<const double>, std::span<double> h) {
                for (auto& v : h) v = 0.0;
                h[0] = 2.0;
            });
    }
    if (name == "markovian_sin_plus_t") {
        return make_markovian(
            "markovian_sin_plus_t",
            [](double t, std::span<const double> x) { return std::sin(x[0]) + t; },
            [](double, std::span<const double>) { return 1.0; },
            [](double, std::span<const double> x, std::span<double> g) {
                for (auto& v : g) v = 0.0;
                g[0] = std::cos(x[0]);
            },
            [](double, std::span<const double> x, std::span<double> h) {
                for (auto& v : h) v = 0.0;
                h[0] = -std::sin(x[0]);
            });
    }
    if (name == "square_minus_qv") return make_square_minus_qv();
    if (name == "exp_martingale") return make_exp_martingale();
    if (name == "qv_integral_linear") {
        return make_qv_integral(
            "qv_integral_linear", [](double, std::span<const double> x) { return x[0]; },
            [](double, std::span<const double>) { return 0.0; },
            [](double, std::span<const double>, std::span<double> g) {
                for (auto& v : g) v = 0.0;
                g[0] = 1.0;
            });
    }
    fail("unknown functional '" + name + "'");
}

PhiSpec parse_phi(const json& j) {
    const std::string kind = get(j, "kind").get<std::string>();
    if (kind == "constant") return make_phi_constant(get(j, "value").get<double>());
    if (kind == "infinite") return make_phi_infinite();
    if (kind == "positive_identity") return make_phi_positive_identity();
    if (kind == "clamped_identity")
        return make_phi_clamped_identity(get_or(j, "lo", 0.0), get(j, "hi").get<double>());
    fail("unknown terminal map '" + kind + "'");
}

RegressionBasis parse_basis(const json& j) {
    RegressionBasis b;
    if (j.contains("features")) {
        b.features.clear();
        for (const auto& f : j.at("features")) {
            const std::string name = f.get<std::string>();
            if (name == "state")
                b.features.push_back(Feature::State);
            else if (name == "functional")
                b.features.push_back(Feature::Functional);
            else if (name == "running_integral")
                b.features.push_back(Feature::RunningIntegral);
            else if (name == "running_max")
                b.features.push_back(Feature::RunningMax);
            else
                fail("unknown basis feature '" + name + "'");
        }
    }
    b.degree = get_or(j, "degree", 3);
    if (b.degree < 0 || b.degree > 8) fail("basis.degree out of range");
    b.ridge = get_or(j, "ridge", 1e-8);
    if (!(b.ridge >= 0.0)) fail("basis.ridge must be nonnegative");
    b.split_at_singular_boundary = get_or(j, "split_at_singular_boundary", false);
    b.quantile_bins = get_or(j, "quantile_bins", 1);
    if (b.quantile_bins < 1 || b.quantile_bins > 64) fail("basis.quantile_bins out of range");
    return b;
}

} // namespace

namespace {

void require_on_grid(const GridPtr& grid, double t, const char* what) {
    try {
        grid->index_of(t);
    } catch (const std::invalid_argument& e) {
        fail(std::string(what) + ": " + e.what());
    }
}

} // namespace

ExperimentConfig parse_config_text(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(std::string("invalid JSON: ") + e.what());
    }

    ExperimentConfig cfg;
    cfg.raw_json = j.dump(2);
    cfg.config_hash = fnv1a64(j.dump());

    cfg.model = parse_model(get(j, "model"));
    cfg.driver = parse_driver(get(j, "driver"));

    const json& term = get(j, "terminal");
    cfg.terminal.phi = parse_phi(get(term, "phi"));
    cfg.terminal.functional = parse_functional(get(term, "functional"));
    if (get_or(term, "singular", cfg.terminal.phi.singular) != cfg.terminal.phi.singular)
        fail("terminal.singular contradicts the terminal map");

    const json& grid = get(j, "grid");
    GridConfig gc;
    gc.n_steps = get_or(grid, "n_steps", 256);
    gc.horizon = get_or(grid, "horizon", 1.0);
    gc.refinement = get_or<std::string>(grid, "refinement", "uniform");
    gc.ratio = get_or(grid, "ratio", 0.85);
    gc.min_step_fraction = get_or(grid, "min_step_fraction", 1e-6);
    try {
        if (gc.refinement == "uniform")
            cfg.grid = make_uniform_grid(gc.horizon, gc.n_steps);
        else if (gc.refinement == "geometric_near_t")
            cfg.grid = make_geometric_grid(gc.horizon, gc.n_steps, gc.ratio, gc.min_step_fraction);
        else
            fail("unknown grid refinement '" + gc.refinement + "'");
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }

    const json& solver = get(j, "solver");
    cfg.levels = get(solver, "levels").get<std::vector<double>>();
    if (cfg.levels.size() < 2) fail("solver.levels needs at least two levels");
    for (size_t i = 0; i < cfg.levels.size(); ++i) {
        if (!(cfg.levels[i] > 0.0)) fail("solver.levels must be positive");
        if (i > 0 && !(cfg.levels[i] > cfg.levels[i - 1]))
            fail("solver.levels must be strictly increasing");
    }
    if (solver.contains("basis")) {
        cfg.basis = parse_basis(solver.at("basis"));
    } else if (cfg.terminal.phi.singular && !cfg.terminal.phi.finite_region.empty()) {
        // capped singular terminals produce steep localized ramps; a split,
        // binned basis keeps the fits local
        cfg.basis.split_at_singular_boundary = true;
        cfg.basis.quantile_bins = 6;
    }
    cfg.solver.newton_tol = get_or(solver, "newton_tol", 1e-12);
    cfg.solver.newton_max_iter = get_or(solver, "newton_max_iter", 50);
    cfg.epsilon_fraction = get_or(solver, "epsilon_fraction", 1.0 / 64.0);
    if (!(cfg.epsilon_fraction > 0.0 && cfg.epsilon_fraction < 1.0))
        fail("solver.epsilon_fraction must lie in (0,1)");

    if (cfg.terminal.phi.singular) {
        try {
            validate_exponents_for_singular(cfg.driver.q, cfg.driver.ell, cfg.driver.z_lipschitz);
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
    }

    if (j.contains("probes")) {
        const json& p = j.at("probes");
        ProbeConfig& pc = cfg.probes;
        pc.apriori = get_or(p, "apriori", false);
        if (p.contains("blowup")) {
            const json& b = p.at("blowup");
            pc.blowup = true;
            pc.blowup_eps = get(b, "eps").get<std::vector<double>>();
            pc.blowup_margin = get_or(b, "margin", 0.25);
            pc.blowup_slope_lo = get_or(b, "slope_lo", -1.2 / cfg.driver.q);
            pc.blowup_slope_hi = get_or(b, "slope_hi", -0.8 / cfg.driver.q);
            for (double e : pc.blowup_eps) {
                if (!(e > 0.0 && e < gc.horizon)) fail("probes.blowup.eps out of range");
                require_on_grid(cfg.grid, gc.horizon - e, "probes.blowup.eps");
            }
            if (!cfg.terminal.phi.singular) fail("probes.blowup requires a singular terminal");
        }
        if (p.contains("zenergy")) {
            const json& zc = p.at("zenergy");
            pc.zenergy = true;
            pc.zenergy_rho = get_or(zc, "rho", 0.8);
            const double lower =
                2.0 / cfg.driver.q + 2.0 * (1.0 - 1.0 / cfg.driver.ell);
            if (!(pc.zenergy_rho > lower && pc.zenergy_rho < 1.0))
                fail("probes.zenergy.rho outside the admissible range");
        }
        if (p.contains("continuity")) {
            const json& c = p.at("continuity");
            pc.continuity = true;
            pc.continuity_times = get(c, "times").get<std::vector<double>>();
            pc.psi_lo = get_or(c, "psi_lo", 0.5);
            pc.psi_hi = get_or(c, "psi_hi", 2.0);
            pc.psi_gamma = get_or(c, "gamma", 3.0);
            try {
                TestFunction tf(pc.psi_lo, pc.psi_hi, pc.psi_gamma, cfg.driver.q);
            } catch (const std::invalid_argument& e) {
                fail(e.what());
            }
            bool inside = false;
            for (const auto& iv : cfg.terminal.phi.finite_region)
                if (pc.psi_lo > iv.lo && pc.psi_hi < iv.hi) inside = true;
            if (!inside)
                fail("probes.continuity: test-function support must lie strictly inside the"
                     " finite region of the terminal map");
            for (double t : pc.continuity_times) {
                if (!(t >= 0.0 && t < gc.horizon)) fail("probes.continuity.times out of range");
                require_on_grid(cfg.grid, t, "probes.continuity.times");
            }
            if (pc.continuity_times.size() < 3)
                fail("probes.continuity.times needs at least three probe times");
        }
        if (p.contains("liminf")) {
            const json& l = p.at("liminf");
            pc.liminf = true;
            pc.liminf_eps = get(l, "eps").get<std::vector<double>>();
            pc.liminf_thresholds = get(l, "thresholds").get<std::vector<double>>();
            pc.liminf_finite_tol = get_or(l, "finite_tol", 0.1);
            pc.liminf_min_finite_pass = get_or(l, "min_finite_pass", 0.75);
            pc.liminf_min_singular_pass = get_or(l, "min_singular_pass", 0.9);
            if (pc.liminf_eps.size() != pc.liminf_thresholds.size())
                fail("probes.liminf: eps and thresholds must have matching lengths");
            for (double e : pc.liminf_eps)
                require_on_grid(cfg.grid, gc.horizon - e, "probes.liminf.eps");
            if (!cfg.terminal.phi.singular) fail("probes.liminf requires a singular terminal");
        }
    }

    if (j.contains("liquidation")) {
        const json& l = j.at("liquidation");
        cfg.liquidation.enabled = true;
        cfg.liquidation.x0 = get_or(l, "x0", 1.0);
        cfg.liquidation.perturbations = get_or(l, "perturbations", 10);
        cfg.liquidation.perturb_seed = get_or<uint64_t>(l, "perturb_seed", 99);
        cfg.liquidation.max_value_gap = get_or(l, "max_value_gap", 0.05);
        if (!cfg.driver.power_family)
            fail("liquidation requires a control-form driver");
    }

    cfg.seed = get_or<uint64_t>(j, "seed", 1);
    cfg.n_paths = get_or(j, "n_paths", 1000);
    if (cfg.n_paths < 1) fail("n_paths must be >= 1");

    std::vector<std::string> defaults = {"simulate-forward", "solve-ladder", "probes"};
    if (cfg.liquidation.enabled) defaults.push_back("liquidate");
    cfg.stages = get_or<std::vector<std::string>>(j, "stages", defaults);
    const std::set<std::string> known = {"simulate-forward", "solve-ladder", "probes",
                                         "liquidate"};
    for (const auto& s : cfg.stages)
        if (!known.count(s)) fail("unknown stage '" + s + "'");

    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config_text(os.str());
}

} // namespace bsdelab
