#pragma once

#include "bsdelab/bsde.hpp"

#include <functional>
#include <string>
#include <vector>

namespace bsdelab {

/// Position-liquidation control problem: minimize
///   E[ int_t^T alpha |eta|^p + gamma |X|^p ds + xi |X(T)|^p ]
/// over absolutely continuous positions X' = eta with X(T) = 0 forced on the
/// singular set. p is the Holder conjugate of 1+q; the value function is
/// |x|^p Y(t) with Y the minimal supersolution for the matching driver.
struct ControlProblem {
    std::function<double(double)> alpha;
    std::function<double(double)> gamma;
    double q = 3.0;
    double x0 = 1.0;
    int start_node = 0;

    double p() const { return (q + 1.0) / q; }
};

/// Trading-rate policy along one simulated scenario. The rate may read the
/// solved Y of that path; it must stay finite on [t, T). Policies built from
/// the solved Y switch to exact linear liquidation on the final grid interval
/// of singular paths; policies without that handling face the infinite
/// terminal penalty if they leave stock on the singular set.
struct ControlPolicy {
    std::string label;
    /// rate(path, step, time, position)
    std::function<double(int path, int step, double t, double x)> rate;
    bool exact_final_liquidation = false;
};

/// Value function |x|^p Y0.
double value_function(double y0, double x, double p);

/// Feedback rate eta(s) = -X(s) (Y(s)/alpha(s))^q, the pointwise minimizer of
/// alpha |eta|^p + d/dx(|x|^p Y) eta. On singular paths the final grid
/// interval switches to exact linear liquidation so X(T) = 0 holds by
/// construction. Optimality is established numerically by optimality_gap,
/// not assumed.
ControlPolicy candidate_feedback(const ControlProblem& problem, const BsdeSolution& bsde);

/// Simulated cost of a policy over the ensemble's scenarios. Paths on the
/// singular set that end with X(T) != 0 carry infinite cost and are counted
/// in violating_fraction (convention 0 * inf = 0 protects compliant paths).
struct CostEstimate {
    double cost = 0.0;
    double se = 0.0;
    double violating_fraction = 0.0;
    bool infinite = false;
};

CostEstimate simulate_cost(const ControlProblem& problem, const ControlPolicy& policy,
                           const Ensemble& ens, const BsdeSolution& bsde);

/// Candidate vs the value function and vs randomized perturbed policies.
struct OptimalityReport {
    CostEstimate candidate;
    double value = 0.0;           // |x0|^p Y(t)
    double value_gap = 0.0;       // |cost - value| / max(value, tiny)
    std::vector<CostEstimate> perturbed;
    std::vector<double> beat_margin_se; // (pert - cand) / se_diff, paired
    bool candidate_beats_all = true;    // beyond 2 paired SE (or strictly when noiseless)
};

OptimalityReport optimality_gap(const ControlProblem& problem, const BsdeSolution& bsde,
                                const Ensemble& ens, int perturbations, uint64_t seed);

} // namespace bsdelab
