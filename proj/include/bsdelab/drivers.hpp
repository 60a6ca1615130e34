#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>

namespace bsdelab {

/// BSDE generator f(t, y, z) with the structural data used by the solver and
/// the analysis probes: a one-sided monotonicity constant chi, a z-Lipschitz
/// constant, the power exponent q of the decay envelope
///   f(t,y,z) <= -a(t) y|y|^q + f(t,0,z)   for y >= 0,
/// and the integrability exponent ell. f0(t) = f(t,0,0) is nonnegative.
/// Truncation caps f0 at f0_cap: f_n = (f - f0) + (f0 ^ n).
struct DriverSpec {
    std::string name;
    double q = 1.0;
    double chi = 0.0;
    double z_lipschitz = 0.0;
    double ell = 1.0;
    std::function<double(double t, double y, std::span<const double> z)> f;
    std::function<double(double t)> f0;
    std::function<double(double t)> a;
    double f0_cap = std::numeric_limits<double>::infinity();

    bool z_independent = true;
    bool deterministic_coeffs = true;
    /// True when f = -a(t) y|y|^q + gamma(t) exactly; enables the closed-form
    /// route of the deterministic solver.
    bool power_family = false;
    std::function<double(double t)> gamma; // set when power_family

    /// Truncated generator value.
    double evaluate(double t, double y, std::span<const double> z) const;

    bool truncated() const { return std::isfinite(f0_cap); }
};

/// Cap the zero-level part of the generator at n. Monotone in n and the
/// composition of two truncations is the truncation at the smaller level.
DriverSpec truncate(const DriverSpec& d, double n);

/// f(y) = -y|y|^q. Satisfies the generator conditions with chi = 0, L = 0 and
/// a = 1; corresponds to the control generator with alpha = (1/q)^(1/q) and
/// gamma = 0.
DriverSpec make_toy_driver(double q, double ell = 1.0);

/// Control generator f(t,y,z) = -y|y|^q / (q alpha(t)^q) + gamma(t); the
/// envelope coefficient is a(t) = 1/(q alpha(t)^q). alpha must be bounded
/// away from zero on [0,T].
DriverSpec make_control_driver(std::function<double(double)> alpha,
                               std::function<double(double)> gamma, double q, double ell,
                               std::string name = "control");

/// Rejects exponent pairs the singular construction cannot support:
/// ell = 1 is allowed only for z-independent drivers (L = 0); otherwise
/// ell > 1, and for q > 2 also ell < 2q/(2+q).
void validate_exponents_for_singular(double q, double ell, double z_lipschitz);

/// Sampling plan for the numerical spot-check of the generator conditions.
struct ConditionSampleSpec {
    double horizon = 1.0;
    double y_range = 10.0;
    double z_range = 10.0;
    int n_samples = 10000;
    int quadrature_nodes = 10001;
    uint64_t seed = 7;
};

/// Worst observed violations of the structural conditions; advisory (a clean
/// report does not certify the conditions, a violation flags a configuration
/// error).
struct ConditionReport {
    double monotonicity_excess = 0.0;  // (f(y)-f(y'))(y-y') - chi (y-y')^2
    double z_lipschitz_excess = 0.0;   // |f(z)-f(z')| - L|z-z'|
    double envelope_excess = 0.0;      // f(y) + a y^{1+q} - f(0,z), y >= 0
    double integrability_value = 0.0;  // int_0^T [(1/(q a))^{ell/q} + f0^ell] dt
    bool integrability_finite = false;
    int samples = 0;

    bool clean(double tol = 1e-9) const {
        return monotonicity_excess <= tol && z_lipschitz_excess <= tol &&
               envelope_excess <= tol && integrability_finite;
    }
};

ConditionReport check_condition_a(const DriverSpec& d, const ConditionSampleSpec& spec);

} // namespace bsdelab
