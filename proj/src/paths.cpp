#include "bsdelab/paths.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bsdelab {

DiscretePath::DiscretePath(GridPtr grid, int dim, std::vector<double> values)
    : grid_(std::move(grid)), dim_(dim), values_(std::move(values)) {
    if (dim_ < 1)
        throw std::invalid_argument("DiscretePath: dim must be >= 1");
    if (values_.size() != static_cast<size_t>(grid_->n_nodes()) * dim_)
        throw std::invalid_argument("DiscretePath: values length must be n_nodes * dim");
}

DiscretePath DiscretePath::constant(GridPtr grid, std::span<const double> x0) {
    const int d = static_cast<int>(x0.size());
    std::vector<double> vals(static_cast<size_t>(grid->n_nodes()) * d);
    for (int j = 0; j < grid->n_nodes(); ++j)
        for (int k = 0; k < d; ++k)
            vals[static_cast<size_t>(j) * d + k] = x0[static_cast<size_t>(k)];
    return DiscretePath(std::move(grid), d, std::move(vals));
}

StoppedPath::StoppedPath(DiscretePath path, int stop_index)
    : path_(std::move(path)), stop_(stop_index) {
    if (stop_ < 0 || stop_ >= path_.grid().n_nodes())
        throw std::invalid_argument("StoppedPath: stop index out of range");
    // Materialize the frozen tail so stored values are canonical
    // representatives of the equivalence class.
    const int d = path_.dim();
    auto stop_vals = path_.at(stop_);
    std::vector<double> tail(stop_vals.begin(), stop_vals.end());
    for (int j = stop_ + 1; j < path_.grid().n_nodes(); ++j) {
        auto slot = path_.at_mutable(j);
        for (int k = 0; k < d; ++k) slot[static_cast<size_t>(k)] = tail[static_cast<size_t>(k)];
    }
}

StoppedPath stop_at(const DiscretePath& path, double t) {
    return StoppedPath(path, path.grid().index_of(t));
}

StoppedPath stop_at(const StoppedPath& sp, double t) {
    const int idx = sp.grid().index_of(t);
    if (idx >= sp.stop_index()) return sp;
    return StoppedPath(sp.path(), idx);
}

namespace {

double node_distance(const PathView& a, const PathView& b, int node) {
    double s = 0.0;
    for (int k = 0; k < a.dim; ++k) {
        const double d = a.value(node, k) - b.value(node, k);
        s += d * d;
    }
    return std::sqrt(s);
}

} // namespace

double d_infinity(const PathView& a, const PathView& b) {
    if (a.dim != b.dim)
        throw std::invalid_argument("d_infinity: dimension mismatch");
    if (!a.grid->same_as(*b.grid))
        throw std::invalid_argument("d_infinity: paths live on different grids");
    double sup = 0.0;
    for (int j = 0; j < a.n_nodes(); ++j)
        sup = std::max(sup, node_distance(a, b, j));
    return sup + std::abs(a.stop_time() - b.stop_time());
}

double d_infinity(const StoppedPath& a, const StoppedPath& b) {
    return d_infinity(a.view(), b.view());
}

StoppedPath vertical_bump(const StoppedPath& sp, std::span<const double> e) {
    if (static_cast<int>(e.size()) != sp.dim())
        throw std::invalid_argument("vertical_bump: bump dimension mismatch");
    DiscretePath p = sp.path();
    for (int j = sp.stop_index(); j < p.grid().n_nodes(); ++j) {
        auto slot = p.at_mutable(j);
        for (int k = 0; k < p.dim(); ++k) slot[static_cast<size_t>(k)] += e[static_cast<size_t>(k)];
    }
    return StoppedPath(std::move(p), sp.stop_index());
}

StoppedPath horizontal_extend(const StoppedPath& sp, double h) {
    if (h < 0.0)
        throw std::invalid_argument("horizontal_extend: extension must be forward");
    const double target = sp.stop_time() + h;
    const double horizon = sp.grid().horizon();
    if (target > horizon * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "horizontal_extend: t + h = " << target << " exceeds horizon " << horizon;
        throw std::invalid_argument(os.str());
    }
    const int idx = sp.grid().index_of(target);
    if (idx == sp.stop_index()) return sp;
    // Tail beyond the old stop is already frozen at the stopped value, so
    // advancing the index keeps the path flat on (t, t+h].
    return StoppedPath(sp.path(), idx);
}

} // namespace bsdelab
