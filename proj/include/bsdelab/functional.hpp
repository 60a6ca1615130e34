#pragma once

#include "bsdelab/paths.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bsdelab {

/// A non-anticipative functional F(t, x_t, v_t) of a path x and the path v of
/// its quadratic-variation density, evaluated at grid times. Evaluation must
/// read x only up to the current index and v only strictly before it (the
/// previous grid index realizes the left limit). Built-in constructors fill
/// the analytic derivative slots; user functionals may leave them empty, in
/// which case the stencil operators below are the only derivative route.
struct FunctionalSpec {
    using Eval = std::function<double(int t_idx, const PathView& x, const PathView& v)>;
    using Scalar = std::function<double(int t_idx, const PathView& x, const PathView& v)>;
    using Vector = std::function<void(int t_idx, const PathView& x, const PathView& v,
                                      std::span<double> out)>;
    using Matrix = std::function<void(int t_idx, const PathView& x, const PathView& v,
                                      std::span<double> out_dxd)>;

    std::string name;
    Eval eval;
    // Analytic derivatives (all present or all absent).
    Scalar time_derivative;   // horizontal derivative
    Vector gradient;          // vertical derivative, d components
    Matrix hessian;           // second vertical derivative, d x d row-major
    bool integral_type = false;

    bool has_analytic() const { return static_cast<bool>(time_derivative); }
};

/// Finite-difference configuration for functional derivatives. The horizontal
/// derivative always steps forward by whole grid intervals; the discrete time
/// axis has no smaller unit. The second-derivative bump is wider than the
/// first-derivative bump: a 1e-5 bump puts the second difference below the
/// double-precision cancellation floor.
struct DerivativeStencil {
    double h_vertical = 1e-5;
    double h_second = 5e-4;
    int horizontal_steps = 1;
    /// Two-node forward Richardson extrapolation for the horizontal
    /// derivative; needs two grid steps of forward room.
    bool richardson_horizontal = false;
};

struct HorizontalDerivative {
    double numeric = 0.0;
    std::optional<double> analytic;
};

/// (F(t+h, x_t, v_t) - F(t, x_t, v_t)) / h with both paths flat-extended.
/// Throws if there is no forward room on the grid.
HorizontalDerivative horizontal_derivative(const FunctionalSpec& f, int t_idx,
                                           const PathView& x, const PathView& v,
                                           const DerivativeStencil& stencil = {});

/// Central difference of e -> F(t, x + e*e_i 1_[t,T], v) at e = 0.
std::vector<double> vertical_derivative(const FunctionalSpec& f, int t_idx,
                                        const PathView& x, const PathView& v,
                                        const DerivativeStencil& stencil = {});

/// Symmetrized second-difference stencil; d x d row-major.
std::vector<double> second_vertical_derivative(const FunctionalSpec& f, int t_idx,
                                               const PathView& x, const PathView& v,
                                               const DerivativeStencil& stencil = {});

/// Change-of-variable defect along a sampled semimartingale path:
///   F(T) - F(0) - sum DF dt - sum grad . dX - 1/2 sum tr(hess A) dt
/// with left-point sums. Analytic derivatives are used when present.
double ito_residual(const FunctionalSpec& f, const DiscretePath& x, const DiscretePath& a,
                    const DerivativeStencil& stencil = {});

/// Finite-variation density of F(., X, A):
///   Theta1(s) = DF + grad . b + 1/2 tr(hess A).
/// Returned on every grid node; without analytic derivatives the final node
/// reuses the previous value (there is no forward room for the stencil, and
/// left-point quadrature never reads it).
DiscretePath theta1(const FunctionalSpec& f, const DiscretePath& x, const DiscretePath& a,
                    const DiscretePath& b_values, const DerivativeStencil& stencil = {});

// Built-in functionals. The h-based constructors take h(t, x) with x the
// current state. qv/square/exp functionals are scalar-path (d = 1) and read v
// through a left-point running integral, so they depend on v only strictly
// before the current time.

using StateFn = std::function<double(double t, std::span<const double> x)>;
using StateGrad = std::function<void(double t, std::span<const double> x, std::span<double> out)>;
using StateHess = std::function<void(double t, std::span<const double> x, std::span<double> out)>;

/// F(t, x_t, v_t) = h(t, x(t)).
FunctionalSpec make_markovian(std::string name, StateFn h, StateFn dh_dt, StateGrad grad_h,
                              StateHess hess_h);

/// F(t, x_t, v_t) = int_0^t h(s, x(s)) v(s) ds (left-point quadrature, d = 1).
FunctionalSpec make_qv_integral(std::string name, StateFn h, StateFn dh_dt, StateGrad grad_h);

/// F(t, x_t, v_t) = x(t)^2 - int_0^t v(u) du (d = 1).
FunctionalSpec make_square_minus_qv();

/// F(t, x_t, v_t) = exp(x(t) - 1/2 int_0^t v(u) du) (d = 1).
FunctionalSpec make_exp_martingale();

} // namespace bsdelab
