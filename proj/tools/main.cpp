#include "bsdelab/config.hpp"
#include "bsdelab/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    int workers = 1;
    std::optional<uint64_t> seed;
    std::vector<std::string> stages;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_stages) {
    cmd->add_option("--config", args.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--workers", args.workers, "parallel worker cap (results are identical)");
    cmd->add_option_function<uint64_t>(
        "--seed", [&args](uint64_t s) { args.seed = s; }, "override the config seed");
    if (with_stages)
        cmd->add_option("--stages", args.stages, "subset of stages to run, in order");
}

int print_rows(const std::vector<bsdelab::ProbeRow>& rows) {
    bool ok = true;
    for (const auto& r : rows) {
        std::cout << r.probe << "/" << r.parameter << " = " << r.value;
        if (r.stderr_ > 0.0) std::cout << " (se " << r.stderr_ << ")";
        std::cout << " [" << r.verdict << "]\n";
        if (r.verdict == "FAIL") ok = false;
    }
    return ok ? kExitOk : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Singular-terminal BSDE laboratory"};
    app.require_subcommand(1);

    CommonArgs run_args;
    CLI::App* run = app.add_subcommand("run", "run the configured pipeline stages");
    add_common(run, run_args, true);

    CommonArgs sim_args;
    CLI::App* sim = app.add_subcommand("simulate-forward", "simulate the forward ensemble");
    add_common(sim, sim_args, false);

    CommonArgs solve_args;
    CLI::App* solve = app.add_subcommand("solve", "solve the truncation ladder from a stored ensemble");
    add_common(solve, solve_args, false);

    CommonArgs cont_args;
    CLI::App* cont = app.add_subcommand("continuity-probe",
                                        "run the probes stage from stored outputs");
    add_common(cont, cont_args, false);

    CommonArgs liq_args;
    CLI::App* liq = app.add_subcommand("liquidate", "evaluate the liquidation policies");
    add_common(liq, liq_args, false);

    struct {
        std::string out_dir = "out";
        uint64_t seed = 11;
        int n_paths = 200;
        int base_steps = 64;
        int refinements = 4;
    } ito_args;
    CLI::App* ito = app.add_subcommand("verify-ito",
                                       "functional change-of-variable residual refinement table");
    ito->add_option("--out", ito_args.out_dir, "output directory");
    ito->add_option("--seed", ito_args.seed, "ensemble seed");
    ito->add_option("--paths", ito_args.n_paths, "ensemble size");
    ito->add_option("--base-steps", ito_args.base_steps, "coarsest grid");
    ito->add_option("--refinements", ito_args.refinements, "number of dyadic refinements");

    CLI11_PARSE(app, argc, argv);

    try {
        if (ito->parsed()) {
            std::filesystem::create_directories(ito_args.out_dir);
            const auto table = bsdelab::compute_ito_orders(ito_args.seed, ito_args.n_paths,
                                                           ito_args.base_steps,
                                                           ito_args.refinements, 1.0);
            std::vector<std::string> files;
            const auto rows = bsdelab::ito_order_rows(table, ito_args.out_dir, files);
            return print_rows(rows);
        }

        CommonArgs* args = nullptr;
        if (run->parsed()) args = &run_args;
        if (sim->parsed()) args = &sim_args;
        if (solve->parsed()) args = &solve_args;
        if (cont->parsed()) args = &cont_args;
        if (liq->parsed()) args = &liq_args;

        bsdelab::ExperimentConfig cfg = bsdelab::parse_config_file(args->config_path);
        if (run->parsed() && !run_args.stages.empty()) cfg.stages = run_args.stages;
        if (sim->parsed()) cfg.stages = {"simulate-forward"};
        if (solve->parsed()) cfg.stages = {"solve-ladder"};
        if (cont->parsed()) cfg.stages = {"probes"};
        if (liq->parsed()) cfg.stages = {"liquidate"};

        const bsdelab::RunResult result =
            bsdelab::run_pipeline(cfg, args->out_dir, args->workers, args->seed);
        const int rc = print_rows(result.probe_rows);
        std::cout << "wrote " << result.manifest.files.size() << " files to " << args->out_dir
                  << "\n";
        return rc;
    } catch (const bsdelab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    }
}
