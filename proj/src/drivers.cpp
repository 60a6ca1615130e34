#include "bsdelab/drivers.hpp"

#include "bsdelab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace bsdelab {

double DriverSpec::evaluate(double t, double y, std::span<const double> z) const {
    double val;
    if (!truncated()) {
        val = f(t, y, z);
    } else {
        const double base = f0(t);
        val = f(t, y, z) - base + std::min(base, f0_cap);
    }
    if (!std::isfinite(val)) {
        std::ostringstream os;
        os << name << ": non-finite generator value at t = " << t << ", y = " << y;
        throw std::runtime_error(os.str());
    }
    return val;
}

DriverSpec truncate(const DriverSpec& d, double n) {
    if (!(n > 0.0))
        throw std::invalid_argument("truncate: level must be positive");
    DriverSpec out = d;
    out.f0_cap = std::min(d.f0_cap, n);
    return out;
}

void validate_exponents_for_singular(double q, double ell, double z_lipschitz) {
    if (!(q > 0.0))
        throw std::invalid_argument("driver: q must be positive");
    if (ell == 1.0) {
        if (z_lipschitz != 0.0)
            throw std::invalid_argument(
                "driver: ell = 1 requires a z-independent generator (L = 0)");
        return;
    }
    if (!(ell > 1.0))
        throw std::invalid_argument("driver: ell must be > 1 (or exactly 1 when L = 0)");
    if (q > 2.0) {
        const double upper = 2.0 * q / (2.0 + q);
        if (!(ell < upper)) {
            std::ostringstream os;
            os << "driver: for q = " << q << " singular runs need ell in (1, " << upper
               << "), got " << ell;
            throw std::invalid_argument(os.str());
        }
    }
}

DriverSpec make_toy_driver(double q, double ell) {
    validate_exponents_for_singular(q, ell, 0.0);
    DriverSpec d;
    d.name = "toy";
    d.q = q;
    d.chi = 0.0;
    d.z_lipschitz = 0.0;
    d.ell = ell;
    d.f = [q](double, double y, std::span<const double>) { return -y * std::pow(std::abs(y), q); };
    d.f0 = [](double) { return 0.0; };
    d.a = [](double) { return 1.0; };
    d.power_family = true;
    d.gamma = [](double) { return 0.0; };
    return d;
}

DriverSpec make_control_driver(std::function<double(double)> alpha,
                               std::function<double(double)> gamma, double q, double ell,
                               std::string name) {
    validate_exponents_for_singular(q, ell, 0.0);
    DriverSpec d;
    d.name = std::move(name);
    d.q = q;
    d.chi = 0.0;
    d.z_lipschitz = 0.0;
    d.ell = ell;
    auto a_fn = [alpha, q](double t) {
        const double av = alpha(t);
        if (!(av > 0.0))
            throw std::runtime_error("control driver: alpha must stay positive");
        return 1.0 / (q * std::pow(av, q));
    };
    d.a = a_fn;
    d.gamma = gamma;
    d.f = [a_fn, gamma, q](double t, double y, std::span<const double>) {
        return -a_fn(t) * y * std::pow(std::abs(y), q) + gamma(t);
    };
    d.f0 = [gamma](double t) { return gamma(t); };
    d.power_family = true;
    return d;
}

ConditionReport check_condition_a(const DriverSpec& d, const ConditionSampleSpec& spec) {
    ConditionReport rep;
    rep.samples = spec.n_samples;
    Philox gen(spec.seed);
    std::vector<double> z(1, 0.0), z2(1, 0.0);

    auto draw = [&](uint64_t i, uint32_t blk) { return gen.uniform_pair(i, 0, blk); };

    for (int i = 0; i < spec.n_samples; ++i) {
        const auto u0 = draw(static_cast<uint64_t>(i), 0);
        const auto u1 = draw(static_cast<uint64_t>(i), 1);
        const auto u2 = draw(static_cast<uint64_t>(i), 2);
        const double t = u0[0] * spec.horizon;
        const double y = (2.0 * u0[1] - 1.0) * spec.y_range;
        const double yp = (2.0 * u1[0] - 1.0) * spec.y_range;
        z[0] = (2.0 * u1[1] - 1.0) * spec.z_range;
        z2[0] = (2.0 * u2[0] - 1.0) * spec.z_range;

        const double fy = d.evaluate(t, y, z);
        const double fyp = d.evaluate(t, yp, z);
        const double lhs = (fy - fyp) * (y - yp) - d.chi * (y - yp) * (y - yp);
        rep.monotonicity_excess = std::max(rep.monotonicity_excess, lhs);

        const double fz2 = d.evaluate(t, y, z2);
        const double lip = std::abs(fy - fz2) - d.z_lipschitz * std::abs(z[0] - z2[0]);
        rep.z_lipschitz_excess = std::max(rep.z_lipschitz_excess, lip);

        const double ypos = std::abs(y);
        const double env = d.evaluate(t, ypos, z) + d.a(t) * std::pow(ypos, 1.0 + d.q) -
                           d.evaluate(t, 0.0, z);
        rep.envelope_excess = std::max(rep.envelope_excess, env);
    }

    // Composite-Simpson quadrature of the integrability requirement.
    const int n = spec.quadrature_nodes | 1; // odd node count
    const double h = spec.horizon / (n - 1);
    double acc = 0.0;
    bool finite = true;
    for (int i = 0; i < n; ++i) {
        const double t = i * h;
        const double term = std::pow(1.0 / (d.q * d.a(t)), d.ell / d.q) +
                            std::pow(d.f0(t), d.ell);
        if (!std::isfinite(term)) {
            finite = false;
            break;
        }
        const double w = (i == 0 || i == n - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        acc += w * term;
    }
    rep.integrability_finite = finite;
    rep.integrability_value = finite ? acc * h / 3.0 : std::numeric_limits<double>::infinity();
    return rep;
}

} // namespace bsdelab
