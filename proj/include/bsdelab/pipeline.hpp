#pragma once

#include "bsdelab/analysis.hpp"
#include "bsdelab/config.hpp"

#include <optional>
#include <string>
#include <vector>

namespace bsdelab {

inline constexpr const char* kArtifactVersion = "0.1.0";

struct StageTiming {
    std::string name;
    double seconds = 0.0;
};

struct RunManifest {
    uint64_t config_hash = 0;
    std::string version = kArtifactVersion;
    std::vector<StageTiming> stages;
    std::vector<std::string> files;

    std::string to_json() const;
};

struct RunResult {
    RunManifest manifest;
    std::vector<ProbeRow> probe_rows;
    bool all_probes_pass = true;
};

/// Runs the configured stages in order (simulate-forward, solve-ladder,
/// probes, liquidate), writing the stage CSVs and a manifest into out_dir.
RunResult run_pipeline(const ExperimentConfig& cfg, const std::string& out_dir,
                       int workers = 1, std::optional<uint64_t> seed_override = {});

// Individual stages, also used by the single-stage CLI subcommands.
Ensemble stage_simulate(const ExperimentConfig& cfg, const std::string& out_dir, int workers,
                        std::optional<uint64_t> seed_override, std::vector<std::string>& files);
Ladder stage_solve(const ExperimentConfig& cfg, const Ensemble& ens, const std::string& out_dir,
                   int workers, std::vector<std::string>& files);
std::vector<ProbeRow> stage_probes(const ExperimentConfig& cfg, const Ensemble& ens,
                                   const Ladder& ladder, const std::string& out_dir,
                                   std::vector<std::string>& files);
std::vector<ProbeRow> stage_liquidate(const ExperimentConfig& cfg, const Ensemble& ens,
                                      const Ladder& ladder, const std::string& out_dir,
                                      std::vector<std::string>& files);

/// Reloads prior-stage outputs; throws ConfigError when the files are absent.
Ensemble load_ensemble(const ExperimentConfig& cfg, const std::string& dir);
Ladder load_ladder(const ExperimentConfig& cfg, const Ensemble& ens, const std::string& dir);

/// Residual refinement-order table over nested dyadic Brownian grids for the
/// built-in functionals.
struct ItoOrderRow {
    std::string functional;
    std::vector<int> steps;
    std::vector<double> rms;
    double order = 0.0;
    double order_se = 0.0;
    double max_rms = 0.0;
    bool exact = false; // residual at machine-noise level on every grid
};

std::vector<ItoOrderRow> compute_ito_orders(uint64_t seed, int n_paths, int base_steps,
                                            int refinements, double horizon);

/// Writes the order table and appends probe rows; used by verify-ito.
std::vector<ProbeRow> ito_order_rows(const std::vector<ItoOrderRow>& table,
                                     const std::string& out_dir,
                                     std::vector<std::string>& files);

} // namespace bsdelab
