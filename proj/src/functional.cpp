#include "bsdelab/functional.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bsdelab {

namespace {

// Working copy of the stopped part of a view. Only nodes up to the stop index
// are stored; the view clamp supplies the frozen tail.
struct ScratchPath {
    std::vector<double> data;
    const TimeGrid* grid = nullptr;
    int dim = 1;
    int stop = 0;

    static ScratchPath from(const PathView& v, int extra_nodes = 0) {
        ScratchPath s;
        s.grid = v.grid;
        s.dim = v.dim;
        s.stop = v.stop + extra_nodes;
        s.data.resize(static_cast<size_t>(s.stop + 1) * v.dim);
        for (int j = 0; j <= s.stop; ++j)
            for (int k = 0; k < v.dim; ++k)
                s.data[static_cast<size_t>(j) * v.dim + k] = v.value(j, k);
        return s;
    }

    PathView view() const { return PathView{grid, data.data(), dim, stop}; }

    void bump_at_stop(int k, double e) {
        data[static_cast<size_t>(stop) * dim + k] += e;
    }
    void set_at_stop(int k, double val) {
        data[static_cast<size_t>(stop) * dim + k] = val;
    }
};

void require_forward_room(const FunctionalSpec& f, int t_idx, int steps, const PathView& x) {
    if (t_idx + steps > x.grid->n_steps()) {
        std::ostringstream os;
        os << f.name << ": horizontal derivative needs " << steps
           << " forward grid step(s) at index " << t_idx << " but the grid ends at index "
           << x.grid->n_steps();
        throw std::invalid_argument(os.str());
    }
}

double checked_eval(const FunctionalSpec& f, int t_idx, const PathView& x, const PathView& v,
                    const char* what) {
    const double val = f.eval(t_idx, x, v);
    if (!std::isfinite(val)) {
        std::ostringstream os;
        os << f.name << ": non-finite evaluation during " << what << " at t index " << t_idx;
        throw std::runtime_error(os.str());
    }
    return val;
}

double eval_flat_extended(const FunctionalSpec& f, int t_idx, const PathView& x,
                          const PathView& v, int steps) {
    ScratchPath xe = ScratchPath::from(x);
    ScratchPath ve = ScratchPath::from(v);
    // Clamp in PathView keeps the extension flat; only the stop index moves.
    xe.stop = t_idx + steps;
    ve.stop = t_idx + steps;
    const int keep_x = std::min(x.stop, t_idx);
    const int keep_v = std::min(v.stop, t_idx);
    xe.data.resize(static_cast<size_t>(xe.stop + 1) * xe.dim);
    ve.data.resize(static_cast<size_t>(ve.stop + 1) * ve.dim);
    for (int j = keep_x + 1; j <= xe.stop; ++j)
        for (int k = 0; k < xe.dim; ++k)
            xe.data[static_cast<size_t>(j) * xe.dim + k] = x.value(keep_x, k);
    for (int j = keep_v + 1; j <= ve.stop; ++j)
        for (int k = 0; k < ve.dim; ++k)
            ve.data[static_cast<size_t>(j) * ve.dim + k] = v.value(keep_v, k);
    return checked_eval(f, t_idx + steps, xe.view(), ve.view(), "horizontal extension");
}

} // namespace

HorizontalDerivative horizontal_derivative(const FunctionalSpec& f, int t_idx, const PathView& x,
                                           const PathView& v, const DerivativeStencil& stencil) {
    const int m = stencil.horizontal_steps;
    require_forward_room(f, t_idx, stencil.richardson_horizontal ? 2 * m : m, x);

    const double t0 = x.grid->point(t_idx);
    const double f0 = checked_eval(f, t_idx, x, v, "horizontal derivative");
    const double h1 = x.grid->point(t_idx + m) - t0;
    const double f1 = eval_flat_extended(f, t_idx, x, v, m);
    double numeric = (f1 - f0) / h1;
    if (stencil.richardson_horizontal) {
        const double h2 = x.grid->point(t_idx + 2 * m) - t0;
        const double f2 = eval_flat_extended(f, t_idx, x, v, 2 * m);
        const double g1 = (f1 - f0) / h1;
        const double g2 = (f2 - f0) / h2;
        // One-sided extrapolation; exact when the extension is quadratic in h.
        numeric = (h2 * g1 - h1 * g2) / (h2 - h1);
    }

    HorizontalDerivative out;
    out.numeric = numeric;
    if (f.has_analytic()) out.analytic = f.time_derivative(t_idx, x, v);
    return out;
}

std::vector<double> vertical_derivative(const FunctionalSpec& f, int t_idx, const PathView& x,
                                        const PathView& v, const DerivativeStencil& stencil) {
    const double h = stencil.h_vertical;
    std::vector<double> out(static_cast<size_t>(x.dim));
    ScratchPath buf = ScratchPath::from(x);
    const int eff_stop = std::min(x.stop, t_idx);
    buf.stop = eff_stop;
    for (int k = 0; k < x.dim; ++k) {
        const double base = x.value(eff_stop, k);
        buf.set_at_stop(k, base + h);
        const double up = f.eval(t_idx, buf.view(), v);
        buf.set_at_stop(k, base - h);
        const double dn = f.eval(t_idx, buf.view(), v);
        buf.set_at_stop(k, base);
        const double d = (up - dn) / (2.0 * h);
        if (!std::isfinite(d)) {
            std::ostringstream os;
            os << f.name << ": non-finite evaluation under vertical bump e_" << k << " = " << h
               << " at t index " << t_idx;
            throw std::runtime_error(os.str());
        }
        out[static_cast<size_t>(k)] = d;
    }
    return out;
}

std::vector<double> second_vertical_derivative(const FunctionalSpec& f, int t_idx,
                                               const PathView& x, const PathView& v,
                                               const DerivativeStencil& stencil) {
    const double h = stencil.h_second;
    const int d = x.dim;
    std::vector<double> out(static_cast<size_t>(d) * d, 0.0);
    ScratchPath buf = ScratchPath::from(x);
    const int eff_stop = std::min(x.stop, t_idx);
    buf.stop = eff_stop;

    auto eval_bumped = [&](int i, double ei, int j, double ej) {
        const double bi = x.value(eff_stop, i);
        const double bj = x.value(eff_stop, j);
        buf.set_at_stop(i, bi + ei);
        if (j != i)
            buf.set_at_stop(j, bj + ej);
        else
            buf.set_at_stop(i, bi + ei + ej);
        const double val = f.eval(t_idx, buf.view(), v);
        buf.set_at_stop(i, bi);
        buf.set_at_stop(j, bj);
        return val;
    };

    const double f0 = checked_eval(f, t_idx, x, v, "second vertical derivative");
    for (int i = 0; i < d; ++i) {
        const double up = eval_bumped(i, h, i, 0.0);
        const double dn = eval_bumped(i, -h, i, 0.0);
        out[static_cast<size_t>(i) * d + i] = (up - 2.0 * f0 + dn) / (h * h);
    }
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            const double pp = eval_bumped(i, h, j, h);
            const double pm = eval_bumped(i, h, j, -h);
            const double mp = eval_bumped(i, -h, j, h);
            const double mm = eval_bumped(i, -h, j, -h);
            const double val = (pp - pm - mp + mm) / (4.0 * h * h);
            out[static_cast<size_t>(i) * d + j] = val;
            out[static_cast<size_t>(j) * d + i] = val;
        }
    }
    for (double val : out) {
        if (!std::isfinite(val)) {
            std::ostringstream os;
            os << f.name << ": non-finite second vertical derivative at t index " << t_idx;
            throw std::runtime_error(os.str());
        }
    }
    return out;
}

namespace {

struct NodeDerivatives {
    double df = 0.0;
    std::vector<double> grad;
    std::vector<double> hess;
};

NodeDerivatives node_derivatives(const FunctionalSpec& f, int j, const PathView& x,
                                 const PathView& v, const DerivativeStencil& stencil,
                                 bool need_df) {
    NodeDerivatives nd;
    const int d = x.dim;
    if (f.has_analytic()) {
        nd.df = f.time_derivative(j, x, v);
        nd.grad.resize(static_cast<size_t>(d));
        nd.hess.resize(static_cast<size_t>(d) * d);
        f.gradient(j, x, v, nd.grad);
        f.hessian(j, x, v, nd.hess);
    } else {
        nd.df = need_df ? horizontal_derivative(f, j, x, v, stencil).numeric : 0.0;
        nd.grad = vertical_derivative(f, j, x, v, stencil);
        nd.hess = second_vertical_derivative(f, j, x, v, stencil);
    }
    return nd;
}

} // namespace

double ito_residual(const FunctionalSpec& f, const DiscretePath& x, const DiscretePath& a,
                    const DerivativeStencil& stencil) {
    if (!x.grid().same_as(a.grid()))
        throw std::invalid_argument("ito_residual: state and quadratic-variation paths live on different grids");
    const TimeGrid& grid = x.grid();
    const int n = grid.n_steps();
    const int d = x.dim();

    double sum_df = 0.0, sum_grad = 0.0, sum_hess = 0.0;
    for (int j = 0; j < n; ++j) {
        PathView xv{&grid, x.values().data(), d, j};
        PathView av{&grid, a.values().data(), a.dim(), j};
        const NodeDerivatives nd = node_derivatives(f, j, xv, av, stencil, true);
        const double dt = grid.dt(j);
        sum_df += nd.df * dt;
        for (int k = 0; k < d; ++k)
            sum_grad += nd.grad[static_cast<size_t>(k)] * (x.value(j + 1, k) - x.value(j, k));
        double tr = 0.0;
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c)
                tr += nd.hess[static_cast<size_t>(r) * d + c] * a.value(j, r * d + c);
        sum_hess += 0.5 * tr * dt;
    }

    PathView x_end{&grid, x.values().data(), d, n};
    PathView a_end{&grid, a.values().data(), a.dim(), n};
    PathView x_start{&grid, x.values().data(), d, 0};
    PathView a_start{&grid, a.values().data(), a.dim(), 0};
    const double f_end = checked_eval(f, n, x_end, a_end, "ito residual");
    const double f_start = checked_eval(f, 0, x_start, a_start, "ito residual");
    return f_end - f_start - sum_df - sum_grad - sum_hess;
}

DiscretePath theta1(const FunctionalSpec& f, const DiscretePath& x, const DiscretePath& a,
                    const DiscretePath& b_values, const DerivativeStencil& stencil) {
    if (!x.grid().same_as(a.grid()) || !x.grid().same_as(b_values.grid()))
        throw std::invalid_argument("theta1: inputs live on different grids");
    const TimeGrid& grid = x.grid();
    const int n_nodes = grid.n_nodes();
    const int d = x.dim();
    std::vector<double> out(static_cast<size_t>(n_nodes), 0.0);

    for (int j = 0; j < n_nodes; ++j) {
        PathView xv{&grid, x.values().data(), d, j};
        PathView av{&grid, a.values().data(), a.dim(), j};
        const bool last = (j == n_nodes - 1);
        if (last && !f.has_analytic()) {
            out[static_cast<size_t>(j)] = out[static_cast<size_t>(j - 1)];
            break;
        }
        const NodeDerivatives nd = node_derivatives(f, j, xv, av, stencil, true);
        double val = nd.df;
        for (int k = 0; k < d; ++k)
            val += nd.grad[static_cast<size_t>(k)] * b_values.value(j, k);
        double tr = 0.0;
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c)
                tr += nd.hess[static_cast<size_t>(r) * d + c] * a.value(j, r * d + c);
        out[static_cast<size_t>(j)] = val + 0.5 * tr;
        if (!std::isfinite(out[static_cast<size_t>(j)])) {
            std::ostringstream os;
            os << f.name << ": non-finite Theta1 at node " << j;
            throw std::runtime_error(os.str());
        }
    }
    return DiscretePath(x.grid_ptr(), 1, std::move(out));
}

namespace {

// Left-point quadrature of v over [0, t_idx); reads v strictly before the
// current index, which is the discrete form of predictable dependence.
double qv_running_integral(int t_idx, const PathView& v, int component = 0) {
    double s = 0.0;
    for (int j = 0; j < t_idx; ++j) s += v.value(j, component) * v.grid->dt(j);
    return s;
}

} // namespace

FunctionalSpec make_markovian(std::string name, StateFn h, StateFn dh_dt, StateGrad grad_h,
                              StateHess hess_h) {
    FunctionalSpec f;
    f.name = std::move(name);
    f.eval = [h](int t, const PathView& x, const PathView&) {
        return h(x.grid->point(t), x.at(t));
    };
    // The flat time extension keeps x(t) fixed, so the horizontal derivative
    // is the partial time derivative of h.
    f.time_derivative = [dh_dt](int t, const PathView& x, const PathView&) {
        return dh_dt(x.grid->point(t), x.at(t));
    };
    f.gradient = [grad_h](int t, const PathView& x, const PathView&, std::span<double> out) {
        grad_h(x.grid->point(t), x.at(t), out);
    };
    f.hessian = [hess_h](int t, const PathView& x, const PathView&, std::span<double> out) {
        hess_h(x.grid->point(t), x.at(t), out);
    };
    return f;
}

FunctionalSpec make_qv_integral(std::string name, StateFn h, StateFn dh_dt, StateGrad grad_h) {
    (void)dh_dt;
    (void)grad_h;
    FunctionalSpec f;
    f.name = std::move(name);
    f.integral_type = true;
    f.eval = [h](int t, const PathView& x, const PathView& v) {
        double s = 0.0;
        for (int j = 0; j < t; ++j)
            s += h(x.grid->point(j), x.at(j)) * v.value(j, 0) * x.grid->dt(j);
        return s;
    };
    f.time_derivative = [h](int t, const PathView& x, const PathView& v) {
        return h(x.grid->point(t), x.at(t)) * v.value(t, 0);
    };
    f.gradient = [](int, const PathView&, const PathView&, std::span<double> out) {
        for (auto& o : out) o = 0.0;
    };
    f.hessian = [](int, const PathView&, const PathView&, std::span<double> out) {
        for (auto& o : out) o = 0.0;
    };
    return f;
}

FunctionalSpec make_square_minus_qv() {
    FunctionalSpec f;
    f.name = "square_minus_qv";
    f.eval = [](int t, const PathView& x, const PathView& v) {
        const double xt = x.value(t, 0);
        return xt * xt - qv_running_integral(t, v);
    };
    f.time_derivative = [](int t, const PathView&, const PathView& v) {
        return -v.value(t, 0);
    };
    f.gradient = [](int t, const PathView& x, const PathView&, std::span<double> out) {
        out[0] = 2.0 * x.value(t, 0);
    };
    f.hessian = [](int, const PathView&, const PathView&, std::span<double> out) {
        out[0] = 2.0;
    };
    return f;
}

FunctionalSpec make_exp_martingale() {
    FunctionalSpec f;
    f.name = "exp_martingale";
    auto value = [](int t, const PathView& x, const PathView& v) {
        return std::exp(x.value(t, 0) - 0.5 * qv_running_integral(t, v));
    };
    f.eval = value;
    f.time_derivative = [value](int t, const PathView& x, const PathView& v) {
        return -0.5 * v.value(t, 0) * value(t, x, v);
    };
    f.gradient = [value](int t, const PathView& x, const PathView& v, std::span<double> out) {
        out[0] = value(t, x, v);
    };
    f.hessian = [value](int t, const PathView& x, const PathView& v, std::span<double> out) {
        out[0] = value(t, x, v);
    };
    return f;
}

} // namespace bsdelab
