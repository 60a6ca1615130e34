#include "bsdelab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bsdelab {

TestFunction::TestFunction(double support_lo, double support_hi, double gamma, double q)
    : lo_(support_lo), hi_(support_hi), gamma_(gamma) {
    if (!(support_hi > support_lo))
        throw std::invalid_argument("TestFunction: empty support interval");
    const double threshold = 2.0 * (q + 1.0) / q;
    if (!(gamma > threshold)) {
        std::ostringstream os;
        os << "TestFunction: gamma must exceed 2(q+1)/q = " << threshold << ", got " << gamma;
        throw std::invalid_argument(os.str());
    }
}

double TestFunction::psi(double r) const {
    const double u = (2.0 * r - (lo_ + hi_)) / (hi_ - lo_);
    if (u <= -1.0 || u >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - u * u));
}

double TestFunction::value(double r) const {
    const double p = psi(r);
    return p == 0.0 ? 0.0 : std::pow(p, gamma_);
}

AprioriReport apriori_bound_check(const Ladder& ladder, const DriverSpec& driver) {
    AprioriReport rep;
    const BsdeSolution& top = ladder.top();
    const TimeGrid& grid = *top.grid;
    const double horizon = grid.horizon();
    const double q = driver.q;

    const bool toy_form = driver.power_family && driver.z_lipschitz == 0.0;
    double a_const = 0.0;
    if (toy_form) {
        a_const = driver.a(0.0);
        for (int j = 0; j <= 8; ++j) {
            if (std::abs(driver.a(horizon * j / 8.0) - a_const) > 1e-12 * std::abs(a_const)) {
                a_const = 0.0;
                break;
            }
        }
    }
    if (!toy_form || a_const <= 0.0 || !(q > 0.0)) {
        rep.applicable = false;
        double fitted = 0.0;
        if (q > 0.0) {
            for (const BsdeSolution& sol : ladder.solutions)
                for (int i = 0; i < sol.n_paths; ++i)
                    for (int j = 0; j < sol.n_nodes() - 1; ++j) {
                        const double tau = horizon - grid.point(j);
                        fitted = std::max(fitted, sol.y_at(i, j) * std::pow(tau, 1.0 / q));
                    }
        }
        rep.fitted_constant = fitted;
        rep.note = "bound constant not explicit for this driver; fitted constant only";
        return rep;
    }

    rep.applicable = true;
    size_t violations = 0, total = 0;
    for (const BsdeSolution& sol : ladder.solutions) {
        for (int j = 0; j < sol.n_nodes(); ++j) {
            const double tau = horizon - grid.point(j);
            const double bound =
                tau > 0.0 ? std::pow(q * a_const * tau, -1.0 / q)
                          : std::numeric_limits<double>::infinity();
            for (int i = 0; i < sol.n_paths; ++i) {
                const double y = sol.y_at(i, j);
                ++total;
                if (std::isfinite(bound)) {
                    rep.worst_ratio = std::max(rep.worst_ratio, y / bound);
                    if (y > bound + 3.0 * sol.se_at(i, j)) ++violations;
                }
            }
        }
    }
    rep.violation_fraction = static_cast<double>(violations) / static_cast<double>(total);
    return rep;
}

ZEnergyReport z_weighted_energy(const Ladder& ladder, const DriverSpec& driver, double rho,
                                int up_to_node) {
    const double q = driver.q;
    const double ell = driver.ell;
    const double ell_conj_inv = 1.0 - 1.0 / ell; // 1/ell* (0 when ell = 1)
    const double lower = 2.0 / q + 2.0 * ell_conj_inv;
    if (!(rho > lower) || !(rho < 1.0)) {
        std::ostringstream os;
        os << "z_weighted_energy: rho must lie in (" << lower << ", 1), got " << rho;
        throw std::invalid_argument(os.str());
    }

    ZEnergyReport rep;
    rep.rho = rho;
    if (driver.power_family && driver.z_lipschitz == 0.0 && ell == 1.0)
        rep.toy_bound = 16.0 * std::pow(1.0 / q, 2.0 / q);

    const TimeGrid& grid = *ladder.top().grid;
    const double horizon = grid.horizon();
    const int last_step =
        up_to_node < 0 ? ladder.top().n_steps() : std::min(up_to_node, ladder.top().n_steps());
    std::vector<double> samples;
    for (const BsdeSolution& sol : ladder.solutions) {
        samples.assign(static_cast<size_t>(sol.n_paths), 0.0);
        for (int i = 0; i < sol.n_paths; ++i) {
            double acc = 0.0;
            for (int j = 0; j < last_step; ++j) {
                double z2 = 0.0;
                for (int k = 0; k < sol.dim; ++k) {
                    const double z = sol.z_at(i, j, k);
                    z2 += z * z;
                }
                acc += std::pow(horizon - grid.point(j), rho) * z2 * grid.dt(j);
            }
            samples[static_cast<size_t>(i)] = std::pow(acc, ell / 2.0);
        }
        rep.levels.push_back(sol.level);
        rep.energy.push_back(mean_se(samples));
    }

    const size_t m = rep.energy.size();
    if (m >= 2) {
        const double diff = std::abs(rep.energy[m - 1].mean - rep.energy[m - 2].mean);
        const double se = std::sqrt(rep.energy[m - 1].se * rep.energy[m - 1].se +
                                    rep.energy[m - 2].se * rep.energy[m - 2].se);
        rep.flat_within_2se = diff <= 2.0 * se || diff <= 1e-12;
    } else {
        rep.flat_within_2se = true;
    }
    return rep;
}

BlowupReport blowup_rate(const Ladder& ladder, const Ensemble& ens, const TerminalSpec& term,
                         std::span<const double> eps_list, double margin) {
    if (!term.phi.singular)
        throw std::invalid_argument("blowup_rate: needs a singular terminal specification");
    if (eps_list.size() < 2)
        throw std::invalid_argument("blowup_rate: need at least two offsets");

    const BsdeSolution& top = ladder.top();
    const TimeGrid& grid = *top.grid;
    const double horizon = grid.horizon();

    std::vector<int> stratum;
    for (int i = 0; i < ens.n_paths; ++i) {
        const double f_end = term.functional_at(ens, i, ens.n_steps());
        const double dist = term.phi.distance_to_finite_region(f_end);
        if (dist >= margin) stratum.push_back(i);
    }
    BlowupReport rep;
    rep.stratum_mass = static_cast<double>(stratum.size()) / ens.n_paths;
    if (stratum.size() < 4) {
        std::ostringstream os;
        os << "blowup_rate: singular stratum too thin (mass " << rep.stratum_mass
           << "); lower the margin or add paths";
        throw std::runtime_error(os.str());
    }

    std::vector<double> logx, logy;
    for (double eps : eps_list) {
        const int j = grid.index_of(horizon - eps);
        double mean = 0.0;
        for (int i : stratum) mean += top.y_at(i, j);
        mean /= static_cast<double>(stratum.size());
        rep.eps.push_back(eps);
        rep.mean_y.push_back(mean);
        if (!(mean > 0.0))
            throw std::runtime_error("blowup_rate: nonpositive stratum mean, cannot take logs");
        logx.push_back(std::log(eps));
        logy.push_back(std::log(mean));
    }
    const SlopeFit fit = fit_slope(logx, logy);
    rep.slope = fit.slope;
    rep.slope_se = fit.slope_se;
    return rep;
}

ContinuityReport weighted_terminal_continuity(const Ladder& ladder, const Ensemble& ens,
                                              const TerminalSpec& term, const TestFunction& tf,
                                              std::span<const double> times) {
    // The support must sit compactly inside the finite region: the weighted
    // limit localizes away from the singular set.
    bool inside = false;
    for (const auto& iv : term.phi.finite_region)
        if (tf.support_lo() > iv.lo && tf.support_hi() < iv.hi) inside = true;
    if (!inside)
        throw std::invalid_argument(
            "weighted_terminal_continuity: test-function support must lie strictly inside the"
            " finite region of the terminal map");
    if (times.size() < 3)
        throw std::invalid_argument("weighted_terminal_continuity: need at least three times");
    const TimeGrid& grid = *ladder.top().grid;
    const double horizon = grid.horizon();
    for (size_t k = 0; k < times.size(); ++k) {
        if (!(times[k] < horizon))
            throw std::invalid_argument("weighted_terminal_continuity: probe times must precede T");
        if (k > 0 && !(times[k] > times[k - 1]))
            throw std::invalid_argument("weighted_terminal_continuity: times must increase");
    }

    const BsdeSolution& top = ladder.top();
    ContinuityReport rep;
    std::vector<double> samples(static_cast<size_t>(ens.n_paths));

    for (double t : times) {
        const int j = grid.index_of(t);
        for (int i = 0; i < ens.n_paths; ++i) {
            const double w = tf.value(term.functional_at(ens, i, j));
            samples[static_cast<size_t>(i)] = top.y_at(i, j) * w;
        }
        rep.times.push_back(t);
        rep.weighted_means.push_back(mean_se(samples));
    }

    for (int i = 0; i < ens.n_paths; ++i) {
        const double w = tf.value(term.functional_at(ens, i, ens.n_steps()));
        const double x = top.xi[static_cast<size_t>(i)];
        // 0 * inf = 0: the support check guarantees w = 0 on singular paths.
        samples[static_cast<size_t>(i)] = (w == 0.0) ? 0.0 : x * w;
        if (!std::isfinite(samples[static_cast<size_t>(i)]))
            throw std::runtime_error(
                "weighted_terminal_continuity: test function does not vanish on a singular path");
    }
    rep.target = mean_se(samples);

    const size_t m = rep.weighted_means.size();
    bool bracket = true;
    for (size_t k = m - 2; k < m; ++k) {
        const double dist = std::abs(rep.weighted_means[k].mean - rep.target.mean);
        const double se = std::sqrt(rep.weighted_means[k].se * rep.weighted_means[k].se +
                                    rep.target.se * rep.target.se);
        if (dist > 2.0 * se) bracket = false;
    }
    bool decreasing = true;
    for (size_t k = m - 2; k < m; ++k) {
        const double prev = std::abs(rep.weighted_means[k - 1].mean - rep.target.mean);
        const double cur = std::abs(rep.weighted_means[k].mean - rep.target.mean);
        if (cur > prev) decreasing = false;
    }
    rep.pass = bracket && decreasing;
    std::ostringstream os;
    os << (bracket ? "last two probes within 2 combined SE" : "last two probes outside 2 SE")
       << "; distances " << (decreasing ? "monotone decreasing" : "not monotone")
       << " over the last three probes";
    rep.note = os.str();
    return rep;
}

LiminfReport ladder_pathwise_liminf(const Ladder& ladder, const Ensemble& ens,
                                    const TerminalSpec& term, std::span<const double> eps_list,
                                    std::span<const double> thresholds, double finite_tol) {
    if (!term.phi.singular)
        throw std::invalid_argument("ladder_pathwise_liminf: needs a singular terminal spec");
    if (eps_list.size() != thresholds.size() || eps_list.empty())
        throw std::invalid_argument(
            "ladder_pathwise_liminf: need matching eps and threshold schedules");

    const BsdeSolution& top = ladder.top();
    const TimeGrid& grid = *top.grid;
    const double horizon = grid.horizon();

    LiminfReport rep;
    rep.eps.assign(eps_list.begin(), eps_list.end());
    rep.thresholds.assign(thresholds.begin(), thresholds.end());

    double eps_min = eps_list[0];
    for (double e : eps_list) eps_min = std::min(eps_min, e);
    const int j_min = grid.index_of(horizon - eps_min);

    int n_finite = 0, finite_pass = 0, n_singular = 0, singular_pass = 0;
    for (int i = 0; i < ens.n_paths; ++i) {
        const double x = top.xi[static_cast<size_t>(i)];
        if (std::isfinite(x)) {
            ++n_finite;
            const double capped = std::min(x, top.level);
            if (std::abs(top.y_at(i, j_min) - capped) <= finite_tol * std::max(1.0, capped))
                ++finite_pass;
        } else {
            ++n_singular;
            bool ok = true;
            for (size_t k = 0; k < eps_list.size(); ++k) {
                const int j = grid.index_of(horizon - eps_list[k]);
                if (top.y_at(i, j) < thresholds[k]) ok = false;
            }
            if (ok) ++singular_pass;
        }
    }
    rep.finite_fraction = static_cast<double>(n_finite) / ens.n_paths;
    rep.finite_pass_rate = n_finite > 0 ? static_cast<double>(finite_pass) / n_finite : 1.0;
    rep.singular_pass_rate = n_singular > 0 ? static_cast<double>(singular_pass) / n_singular : 1.0;
    return rep;
}

} // namespace bsdelab
