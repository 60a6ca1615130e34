#include "bsdelab/liquidation.hpp"

#include "bsdelab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bsdelab {

double value_function(double y0, double x, double p) {
    if (!(y0 >= 0.0))
        throw std::invalid_argument("value_function: Y must be nonnegative");
    return std::pow(std::abs(x), p) * y0;
}

ControlPolicy candidate_feedback(const ControlProblem& problem, const BsdeSolution& bsde) {
    ControlPolicy pol;
    pol.label = "candidate";
    pol.exact_final_liquidation = true;
    const double q = problem.q;
    auto alpha = problem.alpha;
    const BsdeSolution* sol = &bsde;
    pol.rate = [alpha, q, sol](int path, int step, double t, double x) {
        const double y = sol->y_at(path, step);
        const double a = alpha(t);
        return -x * std::pow(y / a, q);
    };
    return pol;
}

namespace {

struct PathCost {
    double cost = 0.0;
    bool violated = false;
};

PathCost closed_loop_cost(const ControlProblem& problem, const ControlPolicy& policy,
                          const Ensemble& ens, const BsdeSolution& bsde, int path) {
    const TimeGrid& grid = *ens.grid;
    const int n_steps = grid.n_steps();
    const double p = problem.p();
    const bool singular = !std::isfinite(bsde.xi[static_cast<size_t>(path)]);

    PathCost out;
    double x = problem.x0;
    for (int j = problem.start_node; j < n_steps; ++j) {
        const double t = grid.point(j);
        const double dt = grid.dt(j);
        double eta;
        const bool forced_exit = singular && policy.exact_final_liquidation && j == n_steps - 1;
        if (forced_exit) {
            // Exact liquidation over the final interval; Y is not simulated
            // at T itself, and the terminal constraint must hold exactly.
            eta = -x / dt;
        } else {
            eta = policy.rate(path, j, t, x);
            if (!std::isfinite(eta))
                throw std::runtime_error("simulate_cost: policy produced a non-finite rate");
        }
        out.cost += (problem.alpha(t) * std::pow(std::abs(eta), p) +
                     problem.gamma(t) * std::pow(std::abs(x), p)) *
                    dt;
        x += eta * dt;
        if (forced_exit) x = 0.0;
    }

    const double xi = bsde.xi[static_cast<size_t>(path)];
    if (singular) {
        if (x != 0.0) {
            out.violated = true;
            out.cost = std::numeric_limits<double>::infinity();
        }
        // else 0 * inf = 0: no terminal term.
    } else {
        out.cost += xi * std::pow(std::abs(x), p);
    }
    return out;
}

} // namespace

CostEstimate simulate_cost(const ControlProblem& problem, const ControlPolicy& policy,
                           const Ensemble& ens, const BsdeSolution& bsde) {
    CostEstimate est;
    std::vector<double> costs(static_cast<size_t>(ens.n_paths));
    int violations = 0;
    for (int i = 0; i < ens.n_paths; ++i) {
        const PathCost pc = closed_loop_cost(problem, policy, ens, bsde, i);
        if (pc.violated) ++violations;
        costs[static_cast<size_t>(i)] = pc.cost;
    }
    est.violating_fraction = static_cast<double>(violations) / ens.n_paths;
    if (violations > 0) {
        est.infinite = true;
        est.cost = std::numeric_limits<double>::infinity();
        return est;
    }
    const MeanSe ms = mean_se(costs);
    est.cost = ms.mean;
    est.se = ms.se;
    return est;
}

OptimalityReport optimality_gap(const ControlProblem& problem, const BsdeSolution& bsde,
                                const Ensemble& ens, int perturbations, uint64_t seed) {
    OptimalityReport rep;
    const ControlPolicy candidate = candidate_feedback(problem, bsde);
    rep.candidate = simulate_cost(problem, candidate, ens, bsde);

    double y0 = 0.0;
    for (int i = 0; i < ens.n_paths; ++i) y0 += bsde.y_at(i, problem.start_node);
    y0 /= ens.n_paths;
    rep.value = value_function(y0, problem.x0, problem.p());
    rep.value_gap = std::abs(rep.candidate.cost - rep.value) / std::max(rep.value, 1e-300);

    // Per-path candidate costs for paired comparisons.
    std::vector<double> cand_costs(static_cast<size_t>(ens.n_paths));
    for (int i = 0; i < ens.n_paths; ++i)
        cand_costs[static_cast<size_t>(i)] = closed_loop_cost(problem, candidate, ens, bsde, i).cost;

    Philox gen(seed);
    const double horizon = ens.grid->horizon();
    for (int m = 0; m < perturbations; ++m) {
        const auto u0 = gen.uniform_pair(static_cast<uint64_t>(m), 0, 0);
        const auto u1 = gen.uniform_pair(static_cast<uint64_t>(m), 0, 1);
        // Amplitudes start at the canonical 0.2: the quadratic cost excess of
        // a perturbation must clear the candidate's own discretization bias.
        const double amp = 0.2 + 0.2 * u0[0];
        const int harmonics = 1 + static_cast<int>(u0[1] * 3.0);
        const double phase = 2.0 * std::numbers::pi * u1[0];

        ControlPolicy pert;
        pert.label = "perturbed_" + std::to_string(m);
        pert.exact_final_liquidation = true;
        pert.rate = [&candidate, amp, harmonics, phase, horizon](int path, int step, double t,
                                                                 double x) {
            const double mod =
                1.0 + amp * std::sin(2.0 * std::numbers::pi * harmonics * t / horizon + phase);
            return candidate.rate(path, step, t, x) * mod;
        };

        std::vector<double> diffs(static_cast<size_t>(ens.n_paths));
        CostEstimate pe;
        int violations = 0;
        double acc = 0.0;
        bool infinite = false;
        for (int i = 0; i < ens.n_paths; ++i) {
            const PathCost pc = closed_loop_cost(problem, pert, ens, bsde, i);
            if (pc.violated) {
                ++violations;
                infinite = true;
            }
            diffs[static_cast<size_t>(i)] = pc.cost - cand_costs[static_cast<size_t>(i)];
            acc += pc.cost;
        }
        pe.violating_fraction = static_cast<double>(violations) / ens.n_paths;
        pe.infinite = infinite;
        pe.cost = infinite ? std::numeric_limits<double>::infinity() : acc / ens.n_paths;
        if (!infinite) pe.se = mean_se(diffs).se;
        rep.perturbed.push_back(pe);

        if (infinite) {
            rep.beat_margin_se.push_back(std::numeric_limits<double>::infinity());
            continue;
        }
        const MeanSe dm = mean_se(diffs);
        // Deterministic scenarios have zero paired SE; require a strict gap.
        const double margin = dm.se > 0.0 ? dm.mean / dm.se
                                          : (dm.mean > 0.0
                                                 ? std::numeric_limits<double>::infinity()
                                                 : -std::numeric_limits<double>::infinity());
        rep.beat_margin_se.push_back(margin);
        if (!(margin > 2.0 || (dm.se == 0.0 && dm.mean > 0.0))) rep.candidate_beats_all = false;
    }
    return rep;
}

} // namespace bsdelab
