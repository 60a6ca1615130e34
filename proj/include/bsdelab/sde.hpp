#pragma once

#include "bsdelab/paths.hpp"
#include "bsdelab/rng.hpp"
#include "bsdelab/stats.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace bsdelab {

/// Path-dependent diffusion coefficients. Drift and volatility receive the
/// path stopped at the current time, so they cannot read the future.
struct SdeModel {
    std::string name;
    int dim = 1;
    std::vector<double> initial; // deterministic initial state, size dim
    /// out has size dim
    std::function<void(double t, const PathView& x, std::span<double> out)> drift;
    /// out has size dim*dim, row-major
    std::function<void(double t, const PathView& x, std::span<double> out)> vol;
    double lipschitz_hint = 0.0; // diagnostic only
};

/// Source of Brownian increments; keyed by (path, step) so splicing sources
/// in tests cannot disturb earlier steps.
using NoiseSource = std::function<void(uint64_t path, uint64_t step, std::span<double> out)>;

NoiseSource philox_noise(uint64_t seed);

/// Simulated forward paths with their Brownian increments and
/// quadratic-variation densities A = sigma sigma^T at every node.
struct Ensemble {
    GridPtr grid;
    int n_paths = 0;
    int dim = 1;
    uint64_t seed = 0;
    std::vector<double> x;  // n_paths x n_nodes x dim
    std::vector<double> dw; // n_paths x n_steps x dim
    std::vector<double> a;  // n_paths x n_nodes x dim*dim

    int n_nodes() const { return grid->n_nodes(); }
    int n_steps() const { return grid->n_steps(); }

    double x_at(int path, int node, int k = 0) const {
        return x[(static_cast<size_t>(path) * n_nodes() + node) * dim + k];
    }
    double dw_at(int path, int step, int k = 0) const {
        return dw[(static_cast<size_t>(path) * n_steps() + step) * dim + k];
    }
    double a_at(int path, int node, int rc = 0) const {
        return a[(static_cast<size_t>(path) * n_nodes() + node) * dim * dim + rc];
    }

    /// State path of one trajectory stopped at node `stop`.
    PathView x_view(int path, int stop) const {
        return PathView{grid.get(), x.data() + static_cast<size_t>(path) * n_nodes() * dim, dim,
                        stop};
    }
    /// Quadratic-variation density path (dim*dim components per node).
    PathView a_view(int path, int stop) const {
        return PathView{grid.get(), a.data() + static_cast<size_t>(path) * n_nodes() * dim * dim,
                        dim * dim, stop};
    }

    DiscretePath x_path(int path) const;
    DiscretePath a_path(int path) const;
};

/// Euler scheme for the path-dependent SDE
///   X(t_{j+1}) = X(t_j) + b(t_j, X_{t_j}) dt_j + sigma(t_j, X_{t_j}) dW_j.
/// Bit-reproducible for fixed (seed, grid, n_paths) regardless of workers.
Ensemble euler_simulate(const SdeModel& model, GridPtr grid, int n_paths, uint64_t seed,
                        int workers = 1);

/// Variant with a custom noise source (testing hook).
Ensemble euler_simulate_with_noise(const SdeModel& model, GridPtr grid, int n_paths,
                                   uint64_t seed, const NoiseSource& noise, int workers = 1);

/// Monte Carlo estimate of E[ sup_t |X(t)|^rho ].
MeanSe estimate_sup_moment(const Ensemble& ens, double rho);

// Model builders.
SdeModel make_constant_model(std::vector<double> x0);
SdeModel make_brownian_model(std::vector<double> x0, double sigma);
SdeModel make_drifted_brownian_model(std::vector<double> x0, double mu, double sigma);
/// d = 1 model with drift -sup_{u<=t} X(u) and constant volatility; exercises
/// genuine path dependence.
SdeModel make_running_max_pull_model(double x0, double sigma);

} // namespace bsdelab
