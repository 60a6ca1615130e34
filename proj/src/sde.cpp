#include "bsdelab/sde.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bsdelab {

NoiseSource philox_noise(uint64_t seed) {
    Philox gen(seed);
    return [gen](uint64_t path, uint64_t step, std::span<double> out) {
        gen.fill_normals(path, step, out);
    };
}

DiscretePath Ensemble::x_path(int path) const {
    const size_t off = static_cast<size_t>(path) * n_nodes() * dim;
    std::vector<double> vals(x.begin() + off, x.begin() + off + static_cast<size_t>(n_nodes()) * dim);
    return DiscretePath(grid, dim, std::move(vals));
}

DiscretePath Ensemble::a_path(int path) const {
    const size_t off = static_cast<size_t>(path) * n_nodes() * dim * dim;
    std::vector<double> vals(a.begin() + off,
                             a.begin() + off + static_cast<size_t>(n_nodes()) * dim * dim);
    return DiscretePath(grid, dim * dim, std::move(vals));
}

Ensemble euler_simulate_with_noise(const SdeModel& model, GridPtr grid, int n_paths,
                                   uint64_t seed, const NoiseSource& noise, int workers) {
    if (n_paths < 1)
        throw std::invalid_argument("euler_simulate: n_paths must be >= 1");
    if (static_cast<int>(model.initial.size()) != model.dim)
        throw std::invalid_argument("euler_simulate: initial state size does not match dim");

    const int d = model.dim;
    const int n_nodes = grid->n_nodes();
    const int n_steps = grid->n_steps();

    Ensemble ens;
    ens.grid = grid;
    ens.n_paths = n_paths;
    ens.dim = d;
    ens.seed = seed;
    ens.x.assign(static_cast<size_t>(n_paths) * n_nodes * d, 0.0);
    ens.dw.assign(static_cast<size_t>(n_paths) * n_steps * d, 0.0);
    ens.a.assign(static_cast<size_t>(n_paths) * n_nodes * d * d, 0.0);

    std::vector<std::string> errors(static_cast<size_t>(n_paths));

    parallel_for(static_cast<size_t>(n_paths), workers, [&](size_t i) {
        double* xrow = ens.x.data() + i * static_cast<size_t>(n_nodes) * d;
        double* dwrow = ens.dw.data() + i * static_cast<size_t>(n_steps) * d;
        double* arow = ens.a.data() + i * static_cast<size_t>(n_nodes) * d * d;
        std::vector<double> b(static_cast<size_t>(d));
        std::vector<double> s(static_cast<size_t>(d) * d);

        for (int k = 0; k < d; ++k) xrow[k] = model.initial[static_cast<size_t>(k)];

        for (int j = 0; j < n_steps; ++j) {
            const double t = grid->point(j);
            const double dt = grid->dt(j);
            PathView stopped{grid.get(), xrow, d, j};
            model.drift(t, stopped, b);
            model.vol(t, stopped, s);
            for (int k = 0; k < d; ++k) {
                if (!std::isfinite(b[static_cast<size_t>(k)])) {
                    std::ostringstream os;
                    os << "non-finite drift on path " << i << " at t = " << t;
                    errors[i] = os.str();
                    return;
                }
            }
            for (double sv : s) {
                if (!std::isfinite(sv)) {
                    std::ostringstream os;
                    os << "non-finite volatility on path " << i << " at t = " << t;
                    errors[i] = os.str();
                    return;
                }
            }

            double* dwj = dwrow + static_cast<size_t>(j) * d;
            std::vector<double> z(static_cast<size_t>(d));
            noise(i, static_cast<uint64_t>(j), z);
            const double sq = std::sqrt(dt);
            for (int k = 0; k < d; ++k) dwj[k] = sq * z[static_cast<size_t>(k)];

            // A(t_j) = sigma sigma^T evaluated along the stopped path.
            double* aj = arow + static_cast<size_t>(j) * d * d;
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c) {
                    double acc = 0.0;
                    for (int m = 0; m < d; ++m)
                        acc += s[static_cast<size_t>(r) * d + m] * s[static_cast<size_t>(c) * d + m];
                    aj[r * d + c] = acc;
                }

            const double* xj = xrow + static_cast<size_t>(j) * d;
            double* xn = xrow + (static_cast<size_t>(j) + 1) * d;
            for (int k = 0; k < d; ++k) {
                double diff = 0.0;
                for (int m = 0; m < d; ++m) diff += s[static_cast<size_t>(k) * d + m] * dwj[m];
                xn[k] = xj[k] + b[static_cast<size_t>(k)] * dt + diff;
            }
        }

        // Terminal quadratic-variation density from the fully stopped path.
        PathView full{grid.get(), xrow, d, n_steps};
        model.vol(grid->horizon(), full, s);
        double* aN = arow + static_cast<size_t>(n_steps) * d * d;
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) {
                double acc = 0.0;
                for (int m = 0; m < d; ++m)
                    acc += s[static_cast<size_t>(r) * d + m] * s[static_cast<size_t>(c) * d + m];
                aN[r * d + c] = acc;
            }
    });

    for (const auto& e : errors)
        if (!e.empty()) throw std::runtime_error("euler_simulate: " + e);
    return ens;
}

Ensemble euler_simulate(const SdeModel& model, GridPtr grid, int n_paths, uint64_t seed,
                        int workers) {
    return euler_simulate_with_noise(model, grid, n_paths, seed, philox_noise(seed), workers);
}

MeanSe estimate_sup_moment(const Ensemble& ens, double rho) {
    if (rho < 1.0)
        throw std::invalid_argument("estimate_sup_moment: exponent must be >= 1");
    std::vector<double> samples(static_cast<size_t>(ens.n_paths));
    for (int i = 0; i < ens.n_paths; ++i) {
        double sup = 0.0;
        for (int j = 0; j < ens.n_nodes(); ++j) {
            double norm2 = 0.0;
            for (int k = 0; k < ens.dim; ++k) {
                const double v = ens.x_at(i, j, k);
                norm2 += v * v;
            }
            sup = std::max(sup, norm2);
        }
        samples[static_cast<size_t>(i)] = std::pow(std::sqrt(sup), rho);
    }
    return mean_se(samples);
}

SdeModel make_constant_model(std::vector<double> x0) {
    SdeModel m;
    m.name = "constant";
    m.dim = static_cast<int>(x0.size());
    m.initial = std::move(x0);
    m.drift = [](double, const PathView&, std::span<double> out) {
        for (auto& o : out) o = 0.0;
    };
    m.vol = [](double, const PathView&, std::span<double> out) {
        for (auto& o : out) o = 0.0;
    };
    return m;
}

SdeModel make_brownian_model(std::vector<double> x0, double sigma) {
    return make_drifted_brownian_model(std::move(x0), 0.0, sigma);
}

SdeModel make_drifted_brownian_model(std::vector<double> x0, double mu, double sigma) {
    SdeModel m;
    m.name = "drifted_brownian";
    m.dim = static_cast<int>(x0.size());
    m.initial = std::move(x0);
    const int d = m.dim;
    m.drift = [mu](double, const PathView&, std::span<double> out) {
        for (auto& o : out) o = mu;
    };
    m.vol = [sigma, d](double, const PathView&, std::span<double> out) {
        for (auto& o : out) o = 0.0;
        for (int k = 0; k < d; ++k) out[static_cast<size_t>(k) * d + k] = sigma;
    };
    m.lipschitz_hint = 0.0;
    return m;
}

SdeModel make_running_max_pull_model(double x0, double sigma) {
    SdeModel m;
    m.name = "running_max_pull";
    m.dim = 1;
    m.initial = {x0};
    m.drift = [](double, const PathView& x, std::span<double> out) {
        double sup = x.value(0, 0);
        for (int j = 1; j <= x.stop; ++j) sup = std::max(sup, x.value(j, 0));
        out[0] = -sup;
    };
    m.vol = [sigma](double, const PathView&, std::span<double> out) { out[0] = sigma; };
    m.lipschitz_hint = 1.0;
    return m;
}

} // namespace bsdelab
