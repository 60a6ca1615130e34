#include "bsdelab/pipeline.hpp"

#include "bsdelab/csv.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace bsdelab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string hash_hex(uint64_t h) {
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

std::string level_tag(double level) {
    std::ostringstream os;
    if (level == std::floor(level) && level < 1e15)
        os << static_cast<long long>(level);
    else
        os << level;
    return os.str();
}

bool ensemble_is_noiseless(const Ensemble& ens) {
    for (double v : ens.a)
        if (v != 0.0) return false;
    return true;
}

} // namespace

std::string RunManifest::to_json() const {
    json j;
    j["config_hash"] = hash_hex(config_hash);
    j["version"] = version;
    j["stages"] = json::array();
    for (const auto& s : stages) j["stages"].push_back({{"name", s.name}, {"seconds", s.seconds}});
    j["files"] = files;
    return j.dump(2);
}

Ensemble stage_simulate(const ExperimentConfig& cfg, const std::string& out_dir, int workers,
                        std::optional<uint64_t> seed_override, std::vector<std::string>& files) {
    const uint64_t seed = seed_override.value_or(cfg.seed);
    Ensemble ens = euler_simulate(cfg.model, cfg.grid, cfg.n_paths, seed, workers);

    const int d = ens.dim;
    std::vector<std::string> header = {"path_id", "step", "time"};
    for (int k = 0; k < d; ++k) header.push_back("x_" + std::to_string(k + 1));
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
            header.push_back("a_" + std::to_string(r + 1) + std::to_string(c + 1));
    CsvWriter w(std::move(header));
    for (int i = 0; i < ens.n_paths; ++i)
        for (int j = 0; j < ens.n_nodes(); ++j) {
            w.add(i);
            w.add(j);
            w.add(ens.grid->point(j));
            for (int k = 0; k < d; ++k) w.add(ens.x_at(i, j, k));
            for (int rc = 0; rc < d * d; ++rc) w.add(ens.a_at(i, j, rc));
            w.end_row();
        }
    w.write(out_dir + "/ensemble.csv");
    files.push_back("ensemble.csv");

    std::vector<std::string> dwh = {"path_id", "step"};
    for (int k = 0; k < d; ++k) dwh.push_back("dw_" + std::to_string(k + 1));
    CsvWriter wd(std::move(dwh));
    for (int i = 0; i < ens.n_paths; ++i)
        for (int j = 0; j < ens.n_steps(); ++j) {
            wd.add(i);
            wd.add(j);
            for (int k = 0; k < d; ++k) wd.add(ens.dw_at(i, j, k));
            wd.end_row();
        }
    wd.write(out_dir + "/ensemble_dw.csv");
    files.push_back("ensemble_dw.csv");
    return ens;
}

Ensemble load_ensemble(const ExperimentConfig& cfg, const std::string& dir) {
    const std::string xpath = dir + "/ensemble.csv";
    const std::string dwpath = dir + "/ensemble_dw.csv";
    if (!fs::exists(xpath) || !fs::exists(dwpath))
        throw ConfigError("missing prior-stage ensemble files in " + dir +
                          " (run simulate-forward first)");
    const CsvTable xt = read_csv(xpath);
    const CsvTable dwt = read_csv(dwpath);

    Ensemble ens;
    ens.grid = cfg.grid;
    ens.dim = cfg.model.dim;
    ens.seed = cfg.seed;
    const int d = ens.dim;
    const int n_nodes = cfg.grid->n_nodes();
    const int n_steps = cfg.grid->n_steps();
    if (xt.numbers.empty() || xt.numbers.size() % static_cast<size_t>(n_nodes) != 0)
        throw ConfigError("ensemble.csv does not match the configured grid");
    ens.n_paths = static_cast<int>(xt.numbers.size() / static_cast<size_t>(n_nodes));
    ens.x.assign(static_cast<size_t>(ens.n_paths) * n_nodes * d, 0.0);
    ens.a.assign(static_cast<size_t>(ens.n_paths) * n_nodes * d * d, 0.0);
    ens.dw.assign(static_cast<size_t>(ens.n_paths) * n_steps * d, 0.0);

    for (const auto& row : xt.numbers) {
        if (row.size() != static_cast<size_t>(3 + d + d * d))
            throw ConfigError("ensemble.csv has an unexpected column count");
        const int i = static_cast<int>(row[0]);
        const int j = static_cast<int>(row[1]);
        for (int k = 0; k < d; ++k)
            ens.x[(static_cast<size_t>(i) * n_nodes + j) * d + k] = row[static_cast<size_t>(3 + k)];
        for (int rc = 0; rc < d * d; ++rc)
            ens.a[(static_cast<size_t>(i) * n_nodes + j) * d * d + rc] =
                row[static_cast<size_t>(3 + d + rc)];
    }
    for (const auto& row : dwt.numbers) {
        if (row.size() != static_cast<size_t>(2 + d))
            throw ConfigError("ensemble_dw.csv has an unexpected column count");
        const int i = static_cast<int>(row[0]);
        const int j = static_cast<int>(row[1]);
        for (int k = 0; k < d; ++k)
            ens.dw[(static_cast<size_t>(i) * n_steps + j) * d + k] = row[static_cast<size_t>(2 + k)];
    }
    return ens;
}

Ladder stage_solve(const ExperimentConfig& cfg, const Ensemble& ens, const std::string& out_dir,
                   int workers, std::vector<std::string>& files) {
    SolverOptions opts = cfg.solver;
    opts.workers = workers;
    Ladder lad = truncation_ladder(ens, cfg.driver, cfg.terminal, cfg.levels, cfg.basis, opts,
                                   cfg.epsilon_fraction);

    const int d = ens.dim;
    for (const BsdeSolution& sol : lad.solutions) {
        std::vector<std::string> header = {"path_id", "step", "time", "y"};
        for (int k = 0; k < d; ++k) header.push_back("z_" + std::to_string(k + 1));
        CsvWriter w(std::move(header));
        for (int i = 0; i < sol.n_paths; ++i)
            for (int j = 0; j < sol.n_nodes(); ++j) {
                w.add(i);
                w.add(j);
                w.add(ens.grid->point(j));
                w.add(sol.y_at(i, j));
                for (int k = 0; k < d; ++k) w.add(j < sol.n_steps() ? sol.z_at(i, j, k) : 0.0);
                w.end_row();
            }
        const std::string name = "solution_level_" + level_tag(sol.level) + ".csv";
        w.write(out_dir + "/" + name);
        files.push_back(name);

        // per-node prediction standard errors, used by the probes
        CsvWriter ws({"path_id", "step", "se"});
        for (int i = 0; i < sol.n_paths; ++i)
            for (int j = 0; j < sol.n_nodes(); ++j) {
                ws.add(i);
                ws.add(j);
                ws.add(sol.se_at(i, j));
                ws.end_row();
            }
        const std::string se_name = "solution_se_level_" + level_tag(sol.level) + ".csv";
        ws.write(out_dir + "/" + se_name);
        files.push_back(se_name);
    }

    {
        CsvWriter w({"level", "step", "time", "mean_y", "se_y", "mean_gap_prev", "certified"});
        std::vector<double> col(static_cast<size_t>(ens.n_paths));
        for (size_t s = 0; s < lad.solutions.size(); ++s) {
            const BsdeSolution& sol = lad.solutions[s];
            for (int j = 0; j < sol.n_nodes(); ++j) {
                for (int i = 0; i < ens.n_paths; ++i) col[static_cast<size_t>(i)] = sol.y_at(i, j);
                const MeanSe ms = mean_se(col);
                double gap = 0.0;
                if (s > 0) {
                    const BsdeSolution& prev = lad.solutions[s - 1];
                    for (int i = 0; i < ens.n_paths; ++i)
                        gap += sol.y_at(i, j) - prev.y_at(i, j);
                    gap /= ens.n_paths;
                }
                w.add(sol.level);
                w.add(j);
                w.add(ens.grid->point(j));
                w.add(ms.mean);
                w.add(ms.se);
                w.add(gap);
                w.add(j <= lad.certified_node ? 1 : 0);
                w.end_row();
            }
        }
        w.write(out_dir + "/ladder.csv");
        files.push_back("ladder.csv");
    }

    {
        CsvWriter w({"level", "step", "time", "y_residual_rms", "node_se", "clipped_fraction",
                     "clipped_mass", "newton_iterations"});
        for (const BsdeSolution& sol : lad.solutions)
            for (int j = 0; j < sol.n_steps(); ++j) {
                const StepDiagnostics& sd = sol.steps[static_cast<size_t>(j)];
                w.add(sol.level);
                w.add(j);
                w.add(ens.grid->point(j));
                w.add(sd.y_residual_rms);
                w.add(sd.node_se);
                w.add(sd.clipped_fraction);
                w.add(sd.clipped_mass);
                w.add(sd.newton_iterations);
                w.end_row();
            }
        w.write(out_dir + "/ladder_diag.csv");
        files.push_back("ladder_diag.csv");
    }
    return lad;
}

Ladder load_ladder(const ExperimentConfig& cfg, const Ensemble& ens, const std::string& dir) {
    Ladder lad;
    lad.epsilon = cfg.epsilon_fraction * cfg.grid->horizon();
    lad.certified_node = cfg.grid->floor_index(cfg.grid->horizon() - lad.epsilon);

    const std::string diag_path = dir + "/ladder_diag.csv";
    if (!fs::exists(diag_path))
        throw ConfigError("missing prior-stage ladder files in " + dir + " (run solve-ladder first)");
    const CsvTable diag = read_csv(diag_path);

    for (double level : cfg.levels) {
        const std::string name = dir + "/solution_level_" + level_tag(level) + ".csv";
        if (!fs::exists(name))
            throw ConfigError("missing prior-stage solution file " + name);
        const CsvTable t = read_csv(name);
        BsdeSolution sol;
        sol.grid = cfg.grid;
        sol.level = level;
        sol.dim = cfg.model.dim;
        const int n_nodes = cfg.grid->n_nodes();
        if (t.numbers.empty() || t.numbers.size() % static_cast<size_t>(n_nodes) != 0)
            throw ConfigError("solution file does not match the configured grid: " + name);
        sol.n_paths = static_cast<int>(t.numbers.size() / static_cast<size_t>(n_nodes));
        sol.y.assign(static_cast<size_t>(sol.n_paths) * n_nodes, 0.0);
        sol.z.assign(static_cast<size_t>(sol.n_paths) * cfg.grid->n_steps() * sol.dim, 0.0);
        for (const auto& row : t.numbers) {
            const int i = static_cast<int>(row[0]);
            const int j = static_cast<int>(row[1]);
            sol.y[static_cast<size_t>(i) * n_nodes + j] = row[3];
            if (j < cfg.grid->n_steps())
                for (int k = 0; k < sol.dim; ++k)
                    sol.z[(static_cast<size_t>(i) * cfg.grid->n_steps() + j) * sol.dim + k] =
                        row[static_cast<size_t>(4 + k)];
        }
        sol.se.assign(static_cast<size_t>(sol.n_paths) * n_nodes, 0.0);
        const std::string se_name = dir + "/solution_se_level_" + level_tag(level) + ".csv";
        if (fs::exists(se_name)) {
            const CsvTable st = read_csv(se_name);
            for (const auto& row : st.numbers)
                sol.se[static_cast<size_t>(row[0]) * n_nodes + static_cast<size_t>(row[1])] =
                    row[2];
        }
        sol.steps.assign(static_cast<size_t>(cfg.grid->n_steps()), StepDiagnostics{});
        for (const auto& row : diag.numbers) {
            if (row[0] == level) {
                StepDiagnostics& sd = sol.steps[static_cast<size_t>(row[1])];
                sd.y_residual_rms = row[3];
                sd.node_se = row[4];
                sd.clipped_fraction = row[5];
                sd.clipped_mass = row[6];
                sd.newton_iterations = static_cast<int>(row[7]);
            }
        }
        sol.xi.resize(static_cast<size_t>(sol.n_paths));
        for (int i = 0; i < sol.n_paths; ++i) sol.xi[static_cast<size_t>(i)] = cfg.terminal.xi(ens, i);
        sol.basis_desc = cfg.basis.describe();
        lad.solutions.push_back(std::move(sol));
    }
    return lad;
}

namespace {

void probe_row(std::vector<ProbeRow>& rows, const std::string& probe, const std::string& param,
               double value, double se, const std::string& verdict) {
    rows.push_back(ProbeRow{probe, param, value, se, verdict});
}

} // namespace

std::vector<ProbeRow> stage_probes(const ExperimentConfig& cfg, const Ensemble& ens,
                                   const Ladder& ladder, const std::string& out_dir,
                                   std::vector<std::string>& files) {
    std::vector<ProbeRow> rows;
    const ProbeConfig& pc = cfg.probes;
    const double horizon = cfg.grid->horizon();

    if (cfg.terminal.phi.singular)
        probe_row(rows, "terminal", "singular_mass", cfg.terminal.singular_mass(ens), 0.0, "INFO");

    if (pc.apriori) {
        if (ensemble_is_noiseless(ens) && cfg.driver.power_family) {
            // Zero noise: compare the exact deterministic ladder against the
            // explicit bound; the regression scheme's terminal-layer bias has
            // no business in a closed-form check.
            double worst = 0.0;
            const double a0 = cfg.driver.a(0.0);
            for (double level : cfg.levels) {
                const double xi0 = cfg.terminal.xi(ens, 0);
                const std::vector<double> yv =
                    deterministic_ode_solve(cfg.driver, std::min(xi0, level), *cfg.grid);
                for (int j = 0; j < cfg.grid->n_nodes() - 1; ++j) {
                    const double tau = horizon - cfg.grid->point(j);
                    const double bound = std::pow(cfg.driver.q * a0 * tau, -1.0 / cfg.driver.q);
                    worst = std::max(worst, yv[static_cast<size_t>(j)] / bound);
                }
            }
            const bool pass = worst <= 1.0 + 1e-9;
            probe_row(rows, "apriori", "worst_ratio", worst, 0.0, pass ? "PASS" : "FAIL");
        } else {
            const AprioriReport rep = apriori_bound_check(ladder, cfg.driver);
            if (!rep.applicable) {
                probe_row(rows, "apriori", "fitted_constant", rep.fitted_constant, 0.0, "INFO");
            } else {
                const bool pass = rep.violation_fraction <= 0.01;
                probe_row(rows, "apriori", "worst_ratio", rep.worst_ratio, 0.0, "INFO");
                probe_row(rows, "apriori", "violation_fraction", rep.violation_fraction, 0.0,
                          pass ? "PASS" : "FAIL");
            }
        }
    }

    for (const auto& pair : ladder.pairs) {
        const bool pass = pair.violation_fraction <= 0.01;
        probe_row(rows, "monotone", "violations_" + level_tag(pair.level_low) + "_to_" +
                  level_tag(pair.level_high),
                  pair.violation_fraction, 0.0, pass ? "PASS" : "FAIL");
    }

    if (pc.blowup) {
        const BlowupReport rep =
            blowup_rate(ladder, ens, cfg.terminal, pc.blowup_eps, pc.blowup_margin);
        const bool pass = rep.slope >= pc.blowup_slope_lo && rep.slope <= pc.blowup_slope_hi;
        probe_row(rows, "blowup", "slope", rep.slope, rep.slope_se, pass ? "PASS" : "FAIL");
        probe_row(rows, "blowup", "stratum_mass", rep.stratum_mass, 0.0, "INFO");
    }

    if (pc.zenergy) {
        const ZEnergyReport rep =
            z_weighted_energy(ladder, cfg.driver, pc.zenergy_rho, ladder.certified_node);
        double top = 0.0;
        for (size_t i = 0; i < rep.levels.size(); ++i) {
            top = std::max(top, rep.energy[i].mean);
            probe_row(rows, "zenergy", "level_" + level_tag(rep.levels[i]), rep.energy[i].mean,
                      rep.energy[i].se, "INFO");
        }
        if (rep.toy_bound > 0.0)
            probe_row(rows, "zenergy", "toy_bound", rep.toy_bound, 0.0, "INFO");
        const bool bounded = rep.toy_bound == 0.0 || top <= rep.toy_bound;
        const bool pass = rep.flat_within_2se && bounded;
        probe_row(rows, "zenergy", "converged_and_bounded", pass ? 1.0 : 0.0, 0.0,
                  pass ? "PASS" : "FAIL");
    }

    if (pc.continuity) {
        const TestFunction tf(pc.psi_lo, pc.psi_hi, pc.psi_gamma, cfg.driver.q);
        const ContinuityReport rep = weighted_terminal_continuity(ladder, ens, cfg.terminal, tf,
                                                                  pc.continuity_times);
        for (size_t k = 0; k < rep.times.size(); ++k)
            probe_row(rows, "continuity", "t_" + CsvWriter::format_double(rep.times[k]),
                      rep.weighted_means[k].mean, rep.weighted_means[k].se, "INFO");
        probe_row(rows, "continuity", "target", rep.target.mean, rep.target.se, "INFO");
        probe_row(rows, "continuity", "converged", rep.pass ? 1.0 : 0.0, 0.0,
                  rep.pass ? "PASS" : "FAIL");
    }

    if (pc.liminf) {
        const LiminfReport rep = ladder_pathwise_liminf(ladder, ens, cfg.terminal, pc.liminf_eps,
                                                        pc.liminf_thresholds, pc.liminf_finite_tol);
        probe_row(rows, "liminf", "finite_pass_rate", rep.finite_pass_rate, 0.0,
                  rep.finite_pass_rate >= pc.liminf_min_finite_pass ? "PASS" : "FAIL");
        probe_row(rows, "liminf", "singular_pass_rate", rep.singular_pass_rate, 0.0,
                  rep.singular_pass_rate >= pc.liminf_min_singular_pass ? "PASS" : "FAIL");
    }

    CsvWriter w({"probe", "parameter", "value", "stderr", "verdict"});
    for (const auto& r : rows) {
        w.add(r.probe);
        w.add(r.parameter);
        w.add(r.value);
        w.add(r.stderr_);
        w.add(r.verdict);
        w.end_row();
    }
    w.write(out_dir + "/probes.csv");
    files.push_back("probes.csv");
    return rows;
}

std::vector<ProbeRow> stage_liquidate(const ExperimentConfig& cfg, const Ensemble& ens,
                                      const Ladder& ladder, const std::string& out_dir,
                                      std::vector<std::string>& files) {
    std::vector<ProbeRow> rows;
    ControlProblem problem;
    problem.alpha = [drv = cfg.driver](double t) {
        // a(t) = 1/(q alpha^q) inverted back to the cost weight alpha(t).
        return std::pow(1.0 / (drv.q * drv.a(t)), 1.0 / drv.q);
    };
    problem.gamma = cfg.driver.gamma;
    problem.q = cfg.driver.q;
    problem.x0 = cfg.liquidation.x0;

    const OptimalityReport rep = optimality_gap(problem, ladder.top(), ens,
                                                cfg.liquidation.perturbations,
                                                cfg.liquidation.perturb_seed);

    CsvWriter w({"policy", "cost", "stderr", "value_function", "gap", "violating_fraction"});
    w.add(std::string("candidate"));
    w.add(rep.candidate.cost);
    w.add(rep.candidate.se);
    w.add(rep.value);
    w.add(rep.value_gap);
    w.add(rep.candidate.violating_fraction);
    w.end_row();
    for (size_t m = 0; m < rep.perturbed.size(); ++m) {
        w.add("perturbed_" + std::to_string(m));
        w.add(rep.perturbed[m].cost);
        w.add(rep.perturbed[m].se);
        w.add(rep.value);
        w.add(rep.perturbed[m].infinite
                  ? std::numeric_limits<double>::infinity()
                  : (rep.perturbed[m].cost - rep.candidate.cost) / std::max(rep.value, 1e-300));
        w.add(rep.perturbed[m].violating_fraction);
        w.end_row();
    }
    w.write(out_dir + "/liquidation.csv");
    files.push_back("liquidation.csv");

    const bool gap_ok = rep.value_gap <= cfg.liquidation.max_value_gap;
    probe_row(rows, "liquidation", "value_gap", rep.value_gap, 0.0, gap_ok ? "PASS" : "FAIL");
    probe_row(rows, "liquidation", "beats_perturbations", rep.candidate_beats_all ? 1.0 : 0.0,
              0.0, rep.candidate_beats_all ? "PASS" : "FAIL");
    probe_row(rows, "liquidation", "violating_fraction", rep.candidate.violating_fraction, 0.0,
              rep.candidate.violating_fraction == 0.0 ? "PASS" : "FAIL");
    return rows;
}

RunResult run_pipeline(const ExperimentConfig& cfg, const std::string& out_dir, int workers,
                       std::optional<uint64_t> seed_override) {
    fs::create_directories(out_dir);
    RunResult result;
    result.manifest.config_hash = cfg.config_hash;

    {
        std::ofstream cj(out_dir + "/config.json", std::ios::binary);
        cj << cfg.raw_json << "\n";
        result.manifest.files.push_back("config.json");
    }

    std::optional<Ensemble> ens;
    std::optional<Ladder> ladder;

    auto need_ensemble = [&]() -> const Ensemble& {
        if (!ens) ens = load_ensemble(cfg, out_dir);
        return *ens;
    };
    auto need_ladder = [&]() -> const Ladder& {
        if (!ladder) ladder = load_ladder(cfg, need_ensemble(), out_dir);
        return *ladder;
    };

    for (const std::string& stage : cfg.stages) {
        const double t0 = now_seconds();
        if (stage == "simulate-forward") {
            ens = stage_simulate(cfg, out_dir, workers, seed_override, result.manifest.files);
        } else if (stage == "solve-ladder") {
            ladder = stage_solve(cfg, need_ensemble(), out_dir, workers, result.manifest.files);
        } else if (stage == "probes") {
            auto rows = stage_probes(cfg, need_ensemble(), need_ladder(), out_dir,
                                     result.manifest.files);
            result.probe_rows.insert(result.probe_rows.end(), rows.begin(), rows.end());
        } else if (stage == "liquidate") {
            if (!cfg.liquidation.enabled)
                throw ConfigError("stage 'liquidate' requested without a liquidation block");
            auto rows = stage_liquidate(cfg, need_ensemble(), need_ladder(), out_dir,
                                        result.manifest.files);
            result.probe_rows.insert(result.probe_rows.end(), rows.begin(), rows.end());
        }
        result.manifest.stages.push_back(StageTiming{stage, now_seconds() - t0});
    }

    for (const auto& r : result.probe_rows)
        if (r.verdict == "FAIL") result.all_probes_pass = false;

    result.manifest.files.push_back("manifest.json");
    std::ofstream mj(out_dir + "/manifest.json", std::ios::binary);
    mj << result.manifest.to_json() << "\n";
    return result;
}

// ---------------------------------------------------------------------------
// Functional Ito refinement orders
// ---------------------------------------------------------------------------

std::vector<ItoOrderRow> compute_ito_orders(uint64_t seed, int n_paths, int base_steps,
                                            int refinements, double horizon) {
    std::vector<FunctionalSpec> functionals;
    functionals.push_back(make_markovian(
        "markovian_sin_plus_t", [](double t, std::span<const double> x) { return std::sin(x[0]) + t; },
        [](double, std::span<const double>) { return 1.0; },
        [](double, std::span<const double> x, std::span<double> g) { g[0] = std::cos(x[0]); },
        [](double, std::span<const double> x, std::span<double> h) { h[0] = -std::sin(x[0]); }));
    functionals.push_back(make_qv_integral(
        "qv_integral_linear", [](double, std::span<const double> x) { return x[0]; },
        [](double, std::span<const double>) { return 0.0; },
        [](double, std::span<const double>, std::span<double> g) { g[0] = 1.0; }));
    functionals.push_back(make_square_minus_qv());
    functionals.push_back(make_exp_martingale());
    functionals.push_back(make_markovian(
        "markovian_linear", [](double, std::span<const double> x) { return x[0]; },
        [](double, std::span<const double>) { return 0.0; },
        [](double, std::span<const double>, std::span<double> g) { g[0] = 1.0; },
        [](double, std::span<const double>, std::span<double> h) { h[0] = 0.0; }));

    // Simulate once on the finest grid and coarsen by summing increments, so
    // every refinement level sees the same Brownian path.
    const int finest_steps = base_steps << refinements;
    const SdeModel model = make_brownian_model({0.0}, 1.0);
    GridPtr fine_grid = make_uniform_grid(horizon, finest_steps);
    const Ensemble fine = euler_simulate(model, fine_grid, n_paths, seed);

    std::vector<ItoOrderRow> table(functionals.size());
    for (size_t fi = 0; fi < functionals.size(); ++fi) table[fi].functional = functionals[fi].name;

    for (int level = 0; level <= refinements; ++level) {
        const int steps = base_steps << level;
        const int stride = finest_steps / steps;
        GridPtr grid = make_uniform_grid(horizon, steps);
        std::vector<std::vector<double>> sq_residuals(functionals.size());

        std::vector<double> xv(static_cast<size_t>(steps + 1));
        std::vector<double> av(static_cast<size_t>(steps + 1), 1.0);
        for (int i = 0; i < n_paths; ++i) {
            for (int j = 0; j <= steps; ++j)
                xv[static_cast<size_t>(j)] = fine.x_at(i, j * stride, 0);
            DiscretePath xpath(grid, 1, xv);
            DiscretePath apath(grid, 1, av);
            for (size_t fi = 0; fi < functionals.size(); ++fi) {
                const double r = ito_residual(functionals[fi], xpath, apath);
                sq_residuals[fi].push_back(r * r);
            }
        }
        for (size_t fi = 0; fi < functionals.size(); ++fi) {
            double ms = 0.0;
            for (double s : sq_residuals[fi]) ms += s;
            ms /= static_cast<double>(n_paths);
            table[fi].steps.push_back(steps);
            table[fi].rms.push_back(std::sqrt(ms));
        }
    }

    for (auto& row : table) {
        row.max_rms = 0.0;
        for (double r : row.rms) row.max_rms = std::max(row.max_rms, r);
        row.exact = row.max_rms <= 1e-10;
        if (!row.exact) {
            std::vector<double> logdt, logrms;
            for (size_t k = 0; k < row.steps.size(); ++k) {
                logdt.push_back(std::log(horizon / row.steps[k]));
                logrms.push_back(std::log(row.rms[k]));
            }
            const SlopeFit fit = fit_slope(logdt, logrms);
            row.order = fit.slope;
            row.order_se = fit.slope_se;
        }
    }
    return table;
}

std::vector<ProbeRow> ito_order_rows(const std::vector<ItoOrderRow>& table,
                                     const std::string& out_dir,
                                     std::vector<std::string>& files) {
    CsvWriter w({"functional", "n_steps", "dt", "rms_residual"});
    for (const auto& row : table)
        for (size_t k = 0; k < row.steps.size(); ++k) {
            w.add(row.functional);
            w.add(row.steps[k]);
            w.add(1.0 / row.steps[k]);
            w.add(row.rms[k]);
            w.end_row();
        }
    w.write(out_dir + "/ito_orders.csv");
    files.push_back("ito_orders.csv");

    std::vector<ProbeRow> rows;
    for (const auto& row : table) {
        if (row.exact) {
            rows.push_back(ProbeRow{"ito_order", row.functional, row.max_rms, 0.0,
                                    row.max_rms <= 1e-10 ? "PASS" : "FAIL"});
        } else {
            const bool pass = row.order >= 0.45 && row.order <= 0.55;
            rows.push_back(
                ProbeRow{"ito_order", row.functional, row.order, row.order_se,
                         pass ? "PASS" : "FAIL"});
        }
    }
    return rows;
}

} // namespace bsdelab
