#pragma once

// Test-only oracles, independent of the library's solution paths: a fixed-step
// RK4 integrator, Gauss-Legendre quadrature, and small helpers for building
// test paths. These exist to produce expected values the implementation under
// test cannot influence.

#include "bsdelab/paths.hpp"
#include "bsdelab/rng.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

/// Classical RK4 for y' = f(t, y) from t0 to t1 with n fixed steps.
inline double rk4(const std::function<double(double, double)>& f, double t0, double y0, double t1,
                  int n) {
    double t = t0, y = y0;
    const double h = (t1 - t0) / n;
    for (int i = 0; i < n; ++i) {
        const double k1 = f(t, y);
        const double k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
        const double k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
        const double k4 = f(t + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
    }
    return y;
}

/// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration on the
/// Legendre polynomial.
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) {
                p0 = 1.0;
                p1 = x;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                const double d = n * (x * p1 - p0) / (x * x - 1.0);
                weights[static_cast<size_t>(i)] = 2.0 / ((1.0 - x * x) * d * d);
                break;
            }
        }
        nodes[static_cast<size_t>(i)] = x;
    }
}

/// Integral of f over [a, b] with 64-node Gauss-Legendre.
inline double integrate(const std::function<double(double)>& f, double a, double b) {
    std::vector<double> x, w;
    gauss_legendre(64, x, w);
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i)
        s += w[i] * f(0.5 * (b - a) * x[i] + 0.5 * (a + b));
    return 0.5 * (b - a) * s;
}

/// Composite Simpson with n+1 nodes (n even), as a second quadrature route.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    if (n % 2) ++n;
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

/// Standard normal density.
inline double normal_pdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * M_PI));
}

/// Truncated-ladder closed form for the plain power driver f(y) = -y|y|^q:
/// Y^n(t) = ((xi ^ n)^(-q) + q a (T - t))^(-1/q), with +inf terminal giving
/// the pure power profile.
inline double power_ladder_value(double terminal, double q, double a, double tau) {
    if (!std::isfinite(terminal)) return std::pow(q * a * tau, -1.0 / q);
    return std::pow(std::pow(terminal, -q) + q * a * tau, -1.0 / q);
}

/// Deterministic test path on a shared grid from a value functor.
inline bsdelab::DiscretePath path_from(const bsdelab::GridPtr& grid,
                                       const std::function<double(double)>& f) {
    std::vector<double> vals(static_cast<size_t>(grid->n_nodes()));
    for (int j = 0; j < grid->n_nodes(); ++j) vals[static_cast<size_t>(j)] = f(grid->point(j));
    return bsdelab::DiscretePath(grid, 1, std::move(vals));
}

} // namespace oracle
