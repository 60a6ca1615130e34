#pragma once

#include "bsdelab/drivers.hpp"
#include "bsdelab/functional.hpp"
#include "bsdelab/regression.hpp"
#include "bsdelab/sde.hpp"

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bsdelab {

/// Open interval (lo, hi).
struct Interval {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
};

/// Terminal map Phi applied to F(T, X_T, A_T). Phi takes values in [0, +inf];
/// the finite region R = {Phi < inf} is a finite union of open intervals.
/// +inf is a first-class value here, never a large float stand-in.
struct PhiSpec {
    std::string name;
    std::function<double(double)> map;
    std::vector<Interval> finite_region;
    bool singular = false; // declared P(xi = +inf) > 0

    /// Distance from r to the finite region; 0 inside, +inf if the region is
    /// empty.
    double distance_to_finite_region(double r) const;
    bool in_finite_region(double r) const { return distance_to_finite_region(r) == 0.0; }
};

PhiSpec make_phi_constant(double value);
PhiSpec make_phi_infinite();
/// Phi(r) = r for r > 0, +inf for r <= 0; R = (0, inf).
PhiSpec make_phi_positive_identity();
/// Phi(r) = min(max(r, lo), hi); finite everywhere (R = (-inf, inf)).
PhiSpec make_phi_clamped_identity(double lo, double hi);

/// Terminal condition xi = Phi(F(T, X_T, A_T)) per path.
struct TerminalSpec {
    PhiSpec phi;
    FunctionalSpec functional;

    double functional_at(const Ensemble& ens, int path, int node) const;
    double xi(const Ensemble& ens, int path) const;
    /// Monte Carlo mass of {xi = +inf}.
    double singular_mass(const Ensemble& ens) const;
};

struct SolverOptions {
    double newton_tol = 1e-12;
    int newton_max_iter = 50;
    int workers = 1;
};

/// Per-step solver diagnostics.
struct StepDiagnostics {
    double y_residual_rms = 0.0; // cross-sectional regression residual RMS
    double node_se = 0.0;        // standard-error scale of the fitted conditional mean
    double clipped_fraction = 0.0;
    double clipped_mass = 0.0; // mean of the pre-clip negative part
    int newton_iterations = 0; // worst case over paths
};

/// Backward solution at one truncation level.
struct BsdeSolution {
    GridPtr grid;
    double level = 0.0;
    int n_paths = 0;
    int dim = 1;
    std::vector<double> y;  // n_paths x n_nodes, >= 0, terminal = xi ^ level
    std::vector<double> z;  // n_paths x n_steps x dim
    std::vector<double> se; // n_paths x n_nodes, per-node prediction SE
    std::vector<double> xi; // uncapped terminal values (may be +inf)
    std::string basis_desc;
    std::vector<StepDiagnostics> steps; // per time step

    int n_nodes() const { return grid->n_nodes(); }
    int n_steps() const { return grid->n_steps(); }
    double y_at(int path, int node) const {
        return y[static_cast<size_t>(path) * n_nodes() + node];
    }
    double z_at(int path, int step, int k = 0) const {
        return z[(static_cast<size_t>(path) * n_steps() + step) * dim + k];
    }
    double se_at(int path, int node) const {
        return se[static_cast<size_t>(path) * n_nodes() + node];
    }
    /// Cross-path mean of the time-0 values (Y(0) is measurable at time 0).
    double y0() const;
};

/// Cached per-(path, step) raw regression features; shared across ladder
/// levels since features do not depend on the truncation.
class FeatureTable {
public:
    FeatureTable(const Ensemble& ens, const TerminalSpec& term, const RegressionBasis& basis);

    /// Row-major design matrix for one time step.
    void build_design(int step, std::vector<double>& out, int& n, int& k) const;
    const RegressionBasis& basis() const { return basis_; }

private:
    const Ensemble* ens_;
    RegressionBasis basis_;
    int n_raw_ = 0;
    std::vector<double> raw_;       // n_paths x n_nodes x n_raw
    std::vector<uint8_t> piece_;    // n_paths x n_nodes (0/1), when split
    std::vector<double> bin_value_; // n_paths x n_nodes, quantile-bin driver
    std::vector<std::vector<int>> exponents_;
};

/// Least-squares Monte Carlo backward induction for the truncated equation:
/// terminal xi ^ level, conditional expectations by ridge regression on the
/// basis, the generator handled implicitly in y (Newton with bisection
/// fallback) and explicitly in z, and a final clip at zero.
BsdeSolution solve_truncated(const Ensemble& ens, const DriverSpec& driver,
                             const TerminalSpec& term, double level,
                             const RegressionBasis& basis, const SolverOptions& opts = {},
                             const FeatureTable* shared_features = nullptr);

struct LadderPairStats {
    double level_low = 0.0;
    double level_high = 0.0;
    double violation_fraction = 0.0; // nodes with Y^m > Y^n + 3 se
    double worst_violation = 0.0;
    double mean_gap = 0.0; // mean of Y^n - Y^m over nodes
};

/// The increasing family of truncated solutions whose limit is the minimal
/// supersolution. Convergence is certified on [0, T - epsilon] only; nodes
/// beyond certified_node are extrapolation.
struct Ladder {
    std::vector<BsdeSolution> solutions;
    std::vector<LadderPairStats> pairs;
    double epsilon = 0.0;
    int certified_node = 0;
    double limit_gap_mean = 0.0; // mean |top - previous| over certified nodes

    const BsdeSolution& top() const { return solutions.back(); }
};

Ladder truncation_ladder(const Ensemble& ens, const DriverSpec& driver, const TerminalSpec& term,
                         std::span<const double> levels, const RegressionBasis& basis,
                         const SolverOptions& opts = {}, double epsilon_fraction = 1.0 / 64.0);

/// Zero-noise oracle: solves Y' = -f(t, Y) backward from a deterministic
/// terminal value (possibly +inf). Power-family drivers use exact sub-flows
/// (closed form when gamma = 0), so stiff singular layers are handled without
/// step-size restrictions; other deterministic drivers fall back to RK4
/// substeps. Returns one value per grid node.
std::vector<double> deterministic_ode_solve(const DriverSpec& driver, double terminal,
                                            const TimeGrid& grid, int substeps = 32);

} // namespace bsdelab
