#pragma once

#include "bsdelab/analysis.hpp"
#include "bsdelab/bsde.hpp"
#include "bsdelab/drivers.hpp"
#include "bsdelab/liquidation.hpp"
#include "bsdelab/sde.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bsdelab {

/// Raised on malformed or inconsistent experiment configuration; the CLI maps
/// it to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GridConfig {
    int n_steps = 256;
    std::string refinement = "uniform"; // or "geometric_near_t"
    double ratio = 0.85;
    double min_step_fraction = 1e-6;
    double horizon = 1.0;
};

struct ProbeConfig {
    bool apriori = false;
    bool blowup = false;
    std::vector<double> blowup_eps;
    double blowup_margin = 0.25;
    double blowup_slope_lo = 0.0; // expected slope bracket (lo < hi)
    double blowup_slope_hi = 0.0;
    bool zenergy = false;
    double zenergy_rho = 0.8;
    bool continuity = false;
    std::vector<double> continuity_times;
    double psi_lo = 0.5, psi_hi = 2.0, psi_gamma = 3.0;
    bool liminf = false;
    std::vector<double> liminf_eps;
    std::vector<double> liminf_thresholds;
    double liminf_finite_tol = 0.1;
    // Pass-rate gates. Paths ending near the singular boundary mix finite and
    // singular conditional outcomes at any fixed offset, so the finite-side
    // rate cannot reach 1 at the smallest resolvable eps.
    double liminf_min_finite_pass = 0.75;
    double liminf_min_singular_pass = 0.9;
};

struct LiquidationConfig {
    bool enabled = false;
    double x0 = 1.0;
    int perturbations = 10;
    uint64_t perturb_seed = 99;
    double max_value_gap = 0.05;
};

/// Fully validated experiment description, with the builders resolved.
struct ExperimentConfig {
    std::string raw_json;     // canonical text of the parsed config
    uint64_t config_hash = 0; // FNV-1a of raw_json

    SdeModel model;
    DriverSpec driver;
    TerminalSpec terminal;
    GridPtr grid;
    std::vector<double> levels;
    RegressionBasis basis;
    SolverOptions solver;
    double epsilon_fraction = 1.0 / 64.0;
    ProbeConfig probes;
    LiquidationConfig liquidation;
    uint64_t seed = 1;
    int n_paths = 1000;
    std::vector<std::string> stages; // subset of the pipeline stages, in order
};

/// Parses and validates a JSON experiment file. Unknown names, malformed
/// blocks, exponent-range violations and test-function support violations are
/// reported as ConfigError.
ExperimentConfig parse_config_text(const std::string& json_text);
ExperimentConfig parse_config_file(const std::string& path);

} // namespace bsdelab
