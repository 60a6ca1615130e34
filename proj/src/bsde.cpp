#include "bsdelab/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace bsdelab {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double PhiSpec::distance_to_finite_region(double r) const {
    if (finite_region.empty()) return kInf;
    double best = kInf;
    for (const auto& iv : finite_region) {
        if (r > iv.lo && r < iv.hi) return 0.0;
        if (r <= iv.lo) best = std::min(best, iv.lo - r);
        if (r >= iv.hi) best = std::min(best, r - iv.hi);
    }
    return best;
}

PhiSpec make_phi_constant(double value) {
    if (!(value >= 0.0) || !std::isfinite(value))
        throw std::invalid_argument("phi_constant: value must be finite and nonnegative");
    PhiSpec p;
    p.name = "constant";
    p.map = [value](double) { return value; };
    p.finite_region = {Interval{}};
    p.singular = false;
    return p;
}

PhiSpec make_phi_infinite() {
    PhiSpec p;
    p.name = "infinite";
    p.map = [](double) { return kInf; };
    p.finite_region = {};
    p.singular = true;
    return p;
}

PhiSpec make_phi_positive_identity() {
    PhiSpec p;
    p.name = "positive_identity";
    p.map = [](double r) { return r > 0.0 ? r : kInf; };
    p.finite_region = {Interval{0.0, kInf}};
    p.singular = true;
    return p;
}

PhiSpec make_phi_clamped_identity(double lo, double hi) {
    if (!(lo >= 0.0) || !(hi > lo))
        throw std::invalid_argument("phi_clamped_identity: need 0 <= lo < hi");
    PhiSpec p;
    p.name = "clamped_identity";
    p.map = [lo, hi](double r) { return std::min(std::max(r, lo), hi); };
    p.finite_region = {Interval{}};
    p.singular = false;
    return p;
}

double TerminalSpec::functional_at(const Ensemble& ens, int path, int node) const {
    return functional.eval(node, ens.x_view(path, node), ens.a_view(path, node));
}

double TerminalSpec::xi(const Ensemble& ens, int path) const {
    return phi.map(functional_at(ens, path, ens.n_steps()));
}

double TerminalSpec::singular_mass(const Ensemble& ens) const {
    int count = 0;
    for (int i = 0; i < ens.n_paths; ++i)
        if (!std::isfinite(xi(ens, i))) ++count;
    return static_cast<double>(count) / ens.n_paths;
}

double BsdeSolution::y0() const {
    double s = 0.0;
    for (int i = 0; i < n_paths; ++i) s += y_at(i, 0);
    return s / n_paths;
}

// ---------------------------------------------------------------------------
// Feature table
// ---------------------------------------------------------------------------

namespace {

void enumerate_exponents(int n_vars, int degree, std::vector<int>& current,
                         std::vector<std::vector<int>>& out) {
    if (static_cast<int>(current.size()) == n_vars) {
        out.push_back(current);
        return;
    }
    int used = 0;
    for (int e : current) used += e;
    for (int e = 0; e + used <= degree; ++e) {
        current.push_back(e);
        enumerate_exponents(n_vars, degree, current, out);
        current.pop_back();
    }
}

} // namespace

FeatureTable::FeatureTable(const Ensemble& ens, const TerminalSpec& term,
                           const RegressionBasis& basis)
    : ens_(&ens), basis_(basis) {
    const int d = ens.dim;
    int n_raw = 0;
    for (Feature f : basis.features) {
        switch (f) {
            case Feature::State: n_raw += d; break;
            case Feature::Functional: n_raw += 1; break;
            case Feature::RunningIntegral: n_raw += d; break;
            case Feature::RunningMax: n_raw += d; break;
        }
    }
    if (n_raw == 0)
        throw std::invalid_argument("RegressionBasis: empty feature list");
    n_raw_ = n_raw;

    const int n_nodes = ens.n_nodes();
    raw_.assign(static_cast<size_t>(ens.n_paths) * n_nodes * n_raw, 0.0);
    // The split indicator reads the functional value even when it is not a
    // regression feature.
    const bool split = basis.split_at_singular_boundary;
    if (split) piece_.assign(static_cast<size_t>(ens.n_paths) * n_nodes, 0);
    if (basis.quantile_bins > 1)
        bin_value_.assign(static_cast<size_t>(ens.n_paths) * n_nodes, 0.0);

    std::vector<double> runint(static_cast<size_t>(d));
    std::vector<double> runmax(static_cast<size_t>(d));
    for (int i = 0; i < ens.n_paths; ++i) {
        std::fill(runint.begin(), runint.end(), 0.0);
        for (int k = 0; k < d; ++k) runmax[static_cast<size_t>(k)] = ens.x_at(i, 0, k);
        for (int j = 0; j < n_nodes; ++j) {
            for (int k = 0; k < d; ++k)
                runmax[static_cast<size_t>(k)] =
                    std::max(runmax[static_cast<size_t>(k)], ens.x_at(i, j, k));
            double* slot = raw_.data() + (static_cast<size_t>(i) * n_nodes + j) * n_raw;
            int c = 0;
            double fval = 0.0;
            bool have_fval = false;
            for (Feature f : basis.features) {
                switch (f) {
                    case Feature::State:
                        for (int k = 0; k < d; ++k) slot[c++] = ens.x_at(i, j, k);
                        break;
                    case Feature::Functional:
                        fval = term.functional_at(*ens_, i, j);
                        have_fval = true;
                        slot[c++] = fval;
                        break;
                    case Feature::RunningIntegral:
                        for (int k = 0; k < d; ++k) slot[c++] = runint[static_cast<size_t>(k)];
                        break;
                    case Feature::RunningMax:
                        for (int k = 0; k < d; ++k) slot[c++] = runmax[static_cast<size_t>(k)];
                        break;
                }
            }
            if (split) {
                if (!have_fval) {
                    fval = term.functional_at(*ens_, i, j);
                    have_fval = true;
                }
                piece_[static_cast<size_t>(i) * n_nodes + j] =
                    term.phi.in_finite_region(fval) ? 1 : 0;
            }
            if (!bin_value_.empty())
                bin_value_[static_cast<size_t>(i) * n_nodes + j] = have_fval ? fval : slot[0];
            if (j < n_nodes - 1)
                for (int k = 0; k < d; ++k)
                    runint[static_cast<size_t>(k)] += ens.x_at(i, j, k) * ens.grid->dt(j);
        }
    }

    std::vector<int> current;
    enumerate_exponents(n_raw_, basis.degree, current, exponents_);
}

void FeatureTable::build_design(int step, std::vector<double>& out, int& n, int& k) const {
    const int n_paths = ens_->n_paths;
    const int n_nodes = ens_->n_nodes();
    const bool split = basis_.split_at_singular_boundary;
    const int bins = std::max(1, basis_.quantile_bins);
    const int n_mono = static_cast<int>(exponents_.size());
    const int n_pieces = (split ? 2 : 1) * bins;
    k = n_pieces * n_mono;
    n = n_paths;
    out.assign(static_cast<size_t>(n) * k, 0.0);

    // Quantile edges of the binning feature at this step. Bins depend only on
    // the ensemble, never on the targets, so every ladder level sees the same
    // partition.
    std::vector<double> edges;
    if (bins > 1) {
        std::vector<double> vals(static_cast<size_t>(n_paths));
        for (int i = 0; i < n_paths; ++i)
            vals[static_cast<size_t>(i)] = bin_value_[static_cast<size_t>(i) * n_nodes + step];
        std::sort(vals.begin(), vals.end());
        for (int b = 1; b < bins; ++b)
            edges.push_back(vals[static_cast<size_t>(b) * n_paths / bins]);
    }

    for (int i = 0; i < n_paths; ++i) {
        const double* slot = raw_.data() + (static_cast<size_t>(i) * n_nodes + step) * n_raw_;
        double* row = out.data() + static_cast<size_t>(i) * k;
        int piece = split ? (piece_[static_cast<size_t>(i) * n_nodes + step] ? 1 : 0) : 0;
        if (bins > 1) {
            const double bv = bin_value_[static_cast<size_t>(i) * n_nodes + step];
            int b = 0;
            while (b < static_cast<int>(edges.size()) && bv >= edges[static_cast<size_t>(b)]) ++b;
            piece = piece * bins + b;
        }
        const int offset = piece * n_mono;
        for (int m = 0; m < n_mono; ++m) {
            double val = 1.0;
            const auto& e = exponents_[static_cast<size_t>(m)];
            for (int v = 0; v < n_raw_; ++v)
                for (int rep = 0; rep < e[static_cast<size_t>(v)]; ++rep) val *= slot[v];
            row[offset + m] = val;
        }
    }
}

// ---------------------------------------------------------------------------
// Generator step
// ---------------------------------------------------------------------------

namespace {

/// Exact backward flow of y' = a y|y|^q over a window of length h.
double power_flow_window(double y_end, double a, double q, double h) {
    if (y_end <= 0.0) return y_end; // the decay term only acts on y > 0
    return std::pow(std::pow(y_end, -q) + q * a * h, -1.0 / q);
}

/// Generator step for power-family drivers: integrates
///   y' = -a(t) y|y|^q + (gamma(t) ^ cap)
/// backward over one grid interval from the regressed continuation value,
/// by Strang splitting with exact sub-flows. Unconditionally stable, and the
/// step value can never exceed the flow started from +inf — the node values
/// inherit the a priori profile bound by construction instead of
/// overshooting it the way a one-step implicit Euler does on stiff terminal
/// layers.
double power_family_step(const DriverSpec& drv, double t, double dt, double c) {
    const double tm = t + 0.5 * dt;
    const double a = drv.a(tm);
    const double g = std::min(drv.gamma(tm), drv.f0_cap);
    double y = power_flow_window(c, a, drv.q, 0.5 * dt);
    y += g * dt;
    return power_flow_window(y, a, drv.q, 0.5 * dt);
}

/// Solves y = c + dt f(t, y, z) for y. The generator's one-sided monotonicity
/// makes g(y) = y - dt f - c strictly increasing when dt chi < 1, so the root
/// is unique; Newton with a finite-difference slope, falling back to
/// bisection whenever a step leaves the bracket.
double solve_implicit(const DriverSpec& drv, double t, double dt, double c,
                      std::span<const double> z, double tol, int max_iter, int& iters_used,
                      int step, int path) {
    auto g = [&](double y) { return y - dt * drv.evaluate(t, y, z) - c; };

    double lo = std::min(c, 0.0), hi = std::max(c, 0.0) + 1.0;
    double glo = g(lo), ghi = g(hi);
    double width = std::max(1.0, std::abs(c));
    int expand = 0;
    while (glo > 0.0 && expand++ < 200) {
        lo -= width;
        width *= 2.0;
        glo = g(lo);
    }
    width = std::max(1.0, std::abs(c));
    while (ghi < 0.0 && expand++ < 400) {
        hi += width;
        width *= 2.0;
        ghi = g(hi);
    }
    if (glo > 0.0 || ghi < 0.0) {
        std::ostringstream os;
        os << "implicit step: no sign change for the generator equation at step " << step
           << ", path " << path << " (residuals " << glo << ", " << ghi << ")";
        throw std::runtime_error(os.str());
    }

    double y = std::clamp(c, lo, hi);
    double gy = g(y);
    int it = 0;
    for (; it < max_iter; ++it) {
        if (std::abs(gy) <= tol * std::max(1.0, std::abs(y))) break;
        if (gy > 0.0)
            hi = y;
        else
            lo = y;
        const double h = std::max(1e-9, 1e-7 * std::abs(y));
        const double slope = (g(y + h) - gy) / h;
        double ynext = (slope > 0.0) ? y - gy / slope : lo - 1.0;
        if (!(ynext > lo && ynext < hi)) ynext = 0.5 * (lo + hi);
        const double ystep = std::abs(ynext - y);
        y = ynext;
        gy = g(y);
        if (ystep <= tol * std::max(1.0, std::abs(y)) &&
            std::abs(gy) <= 1e3 * tol * std::max(1.0, std::abs(y)))
            break;
    }
    if (it >= max_iter) {
        std::ostringstream os;
        os << "implicit step: Newton/bisection did not converge in " << max_iter
           << " iterations at step " << step << ", path " << path << " (residual " << gy << ")";
        throw std::runtime_error(os.str());
    }
    iters_used = std::max(iters_used, it + 1);
    return y;
}

} // namespace

// ---------------------------------------------------------------------------
// Backward induction
// ---------------------------------------------------------------------------

BsdeSolution solve_truncated(const Ensemble& ens, const DriverSpec& driver,
                             const TerminalSpec& term, double level,
                             const RegressionBasis& basis, const SolverOptions& opts,
                             const FeatureTable* shared_features) {
    if (!(level > 0.0) || !std::isfinite(level))
        throw std::invalid_argument("solve_truncated: level must be positive and finite");
    const DriverSpec drv = truncate(driver, level);

    const int n_paths = ens.n_paths;
    const int n_nodes = ens.n_nodes();
    const int n_steps = ens.n_steps();
    const int d = ens.dim;

    for (int j = 0; j < n_steps; ++j) {
        if (drv.chi * ens.grid->dt(j) >= 1.0)
            throw std::invalid_argument(
                "solve_truncated: dt * chi >= 1, implicit step not well posed");
    }

    BsdeSolution sol;
    sol.grid = ens.grid;
    sol.level = level;
    sol.n_paths = n_paths;
    sol.dim = d;
    sol.y.assign(static_cast<size_t>(n_paths) * n_nodes, 0.0);
    sol.z.assign(static_cast<size_t>(n_paths) * n_steps * d, 0.0);
    sol.se.assign(static_cast<size_t>(n_paths) * n_nodes, 0.0);
    sol.xi.resize(static_cast<size_t>(n_paths));
    sol.basis_desc = basis.describe();
    sol.steps.assign(static_cast<size_t>(n_steps), StepDiagnostics{});

    std::optional<FeatureTable> own_table;
    const FeatureTable* table = shared_features;
    if (table == nullptr) {
        own_table.emplace(ens, term, basis);
        table = &*own_table;
    }

    // Terminal condition xi ^ level per path.
    std::vector<double> ycur(static_cast<size_t>(n_paths));
    for (int i = 0; i < n_paths; ++i) {
        const double x = term.xi(ens, i);
        if (std::isnan(x) || x < 0.0)
            throw std::runtime_error("solve_truncated: terminal values must be in [0, +inf]");
        sol.xi[static_cast<size_t>(i)] = x;
        ycur[static_cast<size_t>(i)] = std::min(x, level);
        sol.y[static_cast<size_t>(i) * n_nodes + n_steps] = ycur[static_cast<size_t>(i)];
    }

    std::vector<double> design;
    std::vector<double> target(static_cast<size_t>(n_paths));
    std::vector<double> fitted(static_cast<size_t>(n_paths));
    std::vector<double> cond_mean(static_cast<size_t>(n_paths));
    std::vector<double> node_se(static_cast<size_t>(n_paths));

    for (int j = n_steps - 1; j >= 0; --j) {
        const double t = ens.grid->point(j);
        const double dt = ens.grid->dt(j);
        StepDiagnostics& diag = sol.steps[static_cast<size_t>(j)];

        const auto [mn, mx] = std::minmax_element(ycur.begin(), ycur.end());
        const bool degenerate = (*mn == *mx);
        if (degenerate) {
            // All continuation values coincide, so the conditional expectation
            // is that constant and E[Y dW] vanishes exactly; regression on a
            // degenerate ensemble would only add Monte Carlo noise.
            std::fill(cond_mean.begin(), cond_mean.end(), *mn);
            std::fill(node_se.begin(), node_se.end(), 0.0);
            for (int i = 0; i < n_paths; ++i)
                for (int k = 0; k < d; ++k) sol.z[(static_cast<size_t>(i) * n_steps + j) * d + k] = 0.0;
            diag.y_residual_rms = 0.0;
            diag.node_se = 0.0;
        } else {
            int n = 0, k = 0;
            table->build_design(j, design, n, k);
            std::unique_ptr<RidgeRegression> reg;
            try {
                reg = std::make_unique<RidgeRegression>(design, n, k, basis.ridge);
            } catch (const std::runtime_error& e) {
                std::ostringstream os;
                os << "solve_truncated: regression failed at step " << j << ": " << e.what();
                throw std::runtime_error(os.str());
            }

            for (int kk = 0; kk < d; ++kk) {
                for (int i = 0; i < n_paths; ++i)
                    target[static_cast<size_t>(i)] =
                        ycur[static_cast<size_t>(i)] * ens.dw_at(i, j, kk) / dt;
                reg->fit_predict(target, fitted);
                for (int i = 0; i < n_paths; ++i)
                    sol.z[(static_cast<size_t>(i) * n_steps + j) * d + kk] =
                        fitted[static_cast<size_t>(i)];
            }

            const double rms = reg->fit_predict(ycur, cond_mean);
            reg->prediction_se(rms, node_se);
            diag.y_residual_rms = rms;
            diag.node_se = rms * std::sqrt(static_cast<double>(k) / n);
        }

        double clipped = 0.0, clipped_mass = 0.0;
        int worst_newton = 0;
        std::vector<double> znode(static_cast<size_t>(d));
        for (int i = 0; i < n_paths; ++i) {
            for (int k = 0; k < d; ++k)
                znode[static_cast<size_t>(k)] = sol.z[(static_cast<size_t>(i) * n_steps + j) * d + k];
            const double yroot =
                drv.power_family
                    ? power_family_step(drv, t, dt, cond_mean[static_cast<size_t>(i)])
                    : solve_implicit(drv, t, dt, cond_mean[static_cast<size_t>(i)], znode,
                                     opts.newton_tol, opts.newton_max_iter, worst_newton, j, i);
            if (yroot < 0.0) {
                clipped += 1.0;
                clipped_mass += -yroot;
            }
            const double yclipped = std::max(yroot, 0.0);
            ycur[static_cast<size_t>(i)] = yclipped;
            sol.y[static_cast<size_t>(i) * n_nodes + j] = yclipped;
            sol.se[static_cast<size_t>(i) * n_nodes + j] = node_se[static_cast<size_t>(i)];
        }
        diag.clipped_fraction = clipped / n_paths;
        diag.clipped_mass = clipped_mass / n_paths;
        diag.newton_iterations = worst_newton;
    }

    return sol;
}

Ladder truncation_ladder(const Ensemble& ens, const DriverSpec& driver, const TerminalSpec& term,
                         std::span<const double> levels, const RegressionBasis& basis,
                         const SolverOptions& opts, double epsilon_fraction) {
    if (levels.size() < 2)
        throw std::invalid_argument("truncation_ladder: need at least two levels");
    for (size_t i = 1; i < levels.size(); ++i)
        if (!(levels[i] > levels[i - 1]))
            throw std::invalid_argument("truncation_ladder: levels must be strictly increasing");
    if (term.phi.singular)
        validate_exponents_for_singular(driver.q, driver.ell, driver.z_lipschitz);

    Ladder lad;
    lad.epsilon = epsilon_fraction * ens.grid->horizon();
    lad.certified_node = ens.grid->floor_index(ens.grid->horizon() - lad.epsilon);

    FeatureTable table(ens, term, basis);
    for (double level : levels)
        lad.solutions.push_back(solve_truncated(ens, driver, term, level, basis, opts, &table));

    const int n_nodes = ens.n_nodes();
    for (size_t p = 1; p < lad.solutions.size(); ++p) {
        const BsdeSolution& low = lad.solutions[p - 1];
        const BsdeSolution& high = lad.solutions[p];
        LadderPairStats st;
        st.level_low = low.level;
        st.level_high = high.level;
        size_t violations = 0;
        double gap_sum = 0.0;
        for (int i = 0; i < ens.n_paths; ++i) {
            for (int j = 0; j < n_nodes; ++j) {
                const double se =
                    std::sqrt(low.se_at(i, j) * low.se_at(i, j) +
                              high.se_at(i, j) * high.se_at(i, j));
                const double diff = low.y_at(i, j) - high.y_at(i, j);
                gap_sum += -diff;
                if (diff > 3.0 * se + 1e-12) {
                    ++violations;
                    st.worst_violation = std::max(st.worst_violation, diff - 3.0 * se);
                }
            }
        }
        const double total = static_cast<double>(ens.n_paths) * n_nodes;
        st.violation_fraction = static_cast<double>(violations) / total;
        st.mean_gap = gap_sum / total;
        lad.pairs.push_back(st);
    }

    // Richardson-style increment diagnostic: how much the top rung still moved.
    const BsdeSolution& top = lad.top();
    const BsdeSolution& prev = lad.solutions[lad.solutions.size() - 2];
    double inc = 0.0;
    size_t count = 0;
    for (int i = 0; i < ens.n_paths; ++i)
        for (int j = 0; j <= lad.certified_node; ++j) {
            inc += std::abs(top.y_at(i, j) - prev.y_at(i, j));
            ++count;
        }
    lad.limit_gap_mean = inc / static_cast<double>(count);
    return lad;
}

// ---------------------------------------------------------------------------
// Deterministic oracle
// ---------------------------------------------------------------------------

namespace {

/// Exact backward flow of y' = a y^{1+q} over a window of length h (gamma
/// absent); terminal +inf maps to the pure power profile.
double power_flow_back(double y_end, double a, double q, double h) {
    if (!std::isfinite(y_end)) return std::pow(q * a * h, -1.0 / q);
    if (y_end <= 0.0) return y_end;
    return std::pow(std::pow(y_end, -q) + q * a * h, -1.0 / q);
}

} // namespace

std::vector<double> deterministic_ode_solve(const DriverSpec& driver, double terminal,
                                            const TimeGrid& grid, int substeps) {
    if (!driver.z_independent || !driver.deterministic_coeffs)
        throw std::invalid_argument(
            "deterministic_ode_solve: needs a z-independent driver with deterministic coefficients");
    if (std::isnan(terminal) || terminal < 0.0)
        throw std::invalid_argument("deterministic_ode_solve: terminal must be in [0, +inf]");

    const int n_nodes = grid.n_nodes();
    std::vector<double> out(static_cast<size_t>(n_nodes), 0.0);
    out[static_cast<size_t>(n_nodes - 1)] = terminal;

    if (driver.power_family) {
        // Strang splitting with the exact power flow and the gamma source;
        // unconditionally stable, so the singular terminal layer needs no
        // step-size tuning.
        double y = terminal;
        for (int j = n_nodes - 2; j >= 0; --j) {
            const double t1 = grid.point(j + 1);
            const double h = grid.dt(j) / substeps;
            for (int s = 0; s < substeps; ++s) {
                const double tm = t1 - (s + 0.5) * h;
                y = power_flow_back(y, driver.a(tm), driver.q, 0.5 * h);
                y += driver.gamma(tm) * h;
                y = power_flow_back(y, driver.a(tm), driver.q, 0.5 * h);
            }
            out[static_cast<size_t>(j)] = y;
        }
        return out;
    }

    if (!std::isfinite(terminal))
        throw std::invalid_argument(
            "deterministic_ode_solve: infinite terminal requires a power-family driver");

    std::vector<double> no_z;
    auto rhs = [&](double t, double y) { return -driver.evaluate(t, y, no_z); };
    double y = terminal;
    for (int j = n_nodes - 2; j >= 0; --j) {
        const double h = -grid.dt(j) / substeps;
        double t = grid.point(j + 1);
        for (int s = 0; s < substeps; ++s) {
            const double k1 = rhs(t, y);
            const double k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
            const double k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
            const double k4 = rhs(t + h, y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += h;
            if (!std::isfinite(y))
                throw std::runtime_error(
                    "deterministic_ode_solve: integration failed (stiff step,"
                    " increase substeps)");
        }
        out[static_cast<size_t>(j)] = y;
    }
    return out;
}

} // namespace bsdelab
