#pragma once

#include "bsdelab/bsde.hpp"

#include <span>
#include <string>
#include <vector>

namespace bsdelab {

/// Smooth bump test function phi = psi^gamma with psi the standard compactly
/// supported mollifier rescaled to [support_lo, support_hi]. This family
/// satisfies |phi'| + |phi''| <= C psi^(gamma-2), which is what the weighted
/// terminal-continuity argument needs; gamma must exceed 2(q+1)/q.
class TestFunction {
public:
    TestFunction(double support_lo, double support_hi, double gamma, double q);

    double psi(double r) const;
    double value(double r) const; // psi^gamma
    double support_lo() const { return lo_; }
    double support_hi() const { return hi_; }
    double gamma() const { return gamma_; }

private:
    double lo_, hi_, gamma_;
};

struct ProbeRow {
    std::string probe;
    std::string parameter;
    double value = 0.0;
    double stderr_ = 0.0;
    std::string verdict; // PASS / FAIL / INFO
};

/// A priori bound probe. For toy-form drivers (constant envelope coefficient,
/// L = 0) the bound (q a (T-t))^(-1/q) is explicit and checked per node; for
/// other drivers only a fitted constant is reported and the probe is
/// advisory.
struct AprioriReport {
    bool applicable = false;
    double worst_ratio = 0.0;          // max Y / bound over nodes (all levels)
    double violation_fraction = 1.0;   // nodes with Y > bound + 3 se
    double fitted_constant = 0.0;      // sup of Y (T-t)^(1/q) when not applicable
    std::string note;
};

AprioriReport apriori_bound_check(const Ladder& ladder, const DriverSpec& driver);

/// Weighted Z-energy E[(int (T-s)^rho |Z|^2 ds)^(ell/2)], integrated over the
/// certified window [0, t_{up_to_node}] (pass -1 for the full horizon; the
/// uncertified tail (T-eps, T] carries the unresolved truncation layer and
/// grows with the cap on any fixed grid).
struct ZEnergyReport {
    std::vector<double> levels;
    std::vector<MeanSe> energy;
    double rho = 0.0;
    double toy_bound = 0.0; // 16 (1/q)^(2/q) when the classic constant applies
    /// Top adjacent pair agrees within 2 combined SE: the energy has stopped
    /// moving in n (boundedness is checked against toy_bound separately).
    bool flat_within_2se = false;
};

ZEnergyReport z_weighted_energy(const Ladder& ladder, const DriverSpec& driver, double rho,
                                int up_to_node = -1);

/// Log-log blow-up rate of Y(T - eps) on the deeply singular stratum.
struct BlowupReport {
    double slope = 0.0;
    double slope_se = 0.0;
    double stratum_mass = 0.0;
    std::vector<double> eps;
    std::vector<double> mean_y;
};

BlowupReport blowup_rate(const Ladder& ladder, const Ensemble& ens, const TerminalSpec& term,
                         std::span<const double> eps_list, double margin);

/// Weighted terminal continuity: E[Y(t_k) phi(F(t_k))] against E[xi phi(F(T))].
struct ContinuityReport {
    std::vector<double> times;
    std::vector<MeanSe> weighted_means;
    MeanSe target;
    bool pass = false;
    std::string note;
};

ContinuityReport weighted_terminal_continuity(const Ladder& ladder, const Ensemble& ens,
                                              const TerminalSpec& term, const TestFunction& tf,
                                              std::span<const double> times);

/// Pathwise terminal behaviour of the top rung: on finite-xi paths Y(T-eps)
/// approaches xi ^ level; on singular paths Y(T-eps) must clear the threshold
/// schedule.
struct LiminfReport {
    double finite_fraction = 0.0;      // share of finite-xi paths
    double finite_pass_rate = 0.0;     // |Y(T-eps_min) - xi^level| <= tol
    double singular_pass_rate = 0.0;   // Y(T-eps_k) >= threshold_k for all k
    std::vector<double> eps;
    std::vector<double> thresholds;
};

LiminfReport ladder_pathwise_liminf(const Ladder& ladder, const Ensemble& ens,
                                    const TerminalSpec& term, std::span<const double> eps_list,
                                    std::span<const double> thresholds, double finite_tol);

} // namespace bsdelab
