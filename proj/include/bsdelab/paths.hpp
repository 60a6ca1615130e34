#pragma once

#include "bsdelab/time_grid.hpp"

#include <span>
#include <vector>

namespace bsdelab {

/// Non-owning view of a path frozen after a stop index. Reads past the stop
/// index return the value at the stop index, which is exactly the discrete
/// representative of a stopped path. Cheap to copy; valid only while the
/// underlying storage lives.
struct PathView {
    const TimeGrid* grid = nullptr;
    const double* data = nullptr; // node-major, n_nodes x dim
    int dim = 1;
    int stop = 0;

    double value(int node, int k = 0) const {
        const int j = node > stop ? stop : node;
        return data[static_cast<size_t>(j) * dim + k];
    }
    std::span<const double> at(int node) const {
        const int j = node > stop ? stop : node;
        return {data + static_cast<size_t>(j) * dim, static_cast<size_t>(dim)};
    }
    double stop_time() const { return grid->point(stop); }
    int n_nodes() const { return grid->n_nodes(); }
};

/// A path sampled on a grid, one d-vector per grid point.
class DiscretePath {
public:
    DiscretePath(GridPtr grid, int dim, std::vector<double> values);

    /// Constant path equal to x0 at every node.
    static DiscretePath constant(GridPtr grid, std::span<const double> x0);

    const TimeGrid& grid() const { return *grid_; }
    GridPtr grid_ptr() const { return grid_; }
    int dim() const { return dim_; }
    double value(int node, int k = 0) const {
        return values_[static_cast<size_t>(node) * dim_ + k];
    }
    std::span<const double> at(int node) const {
        return {values_.data() + static_cast<size_t>(node) * dim_, static_cast<size_t>(dim_)};
    }
    std::span<double> at_mutable(int node) {
        return {values_.data() + static_cast<size_t>(node) * dim_, static_cast<size_t>(dim_)};
    }
    const std::vector<double>& values() const { return values_; }

private:
    GridPtr grid_;
    int dim_;
    std::vector<double> values_;
};

/// A path together with the index at which it is stopped. Values beyond the
/// stop index equal the value at the stop index; the constructor enforces
/// this, so equality of stored values is equality of equivalence classes.
class StoppedPath {
public:
    StoppedPath(DiscretePath path, int stop_index);

    const DiscretePath& path() const { return path_; }
    int stop_index() const { return stop_; }
    double stop_time() const { return path_.grid().point(stop_); }
    int dim() const { return path_.dim(); }
    const TimeGrid& grid() const { return path_.grid(); }
    double value(int node, int k = 0) const { return path_.value(node, k); }

    PathView view() const& {
        return PathView{&path_.grid(), path_.values().data(), path_.dim(), stop_};
    }
    PathView view() const&& = delete; // a view must not outlive its storage

private:
    DiscretePath path_;
    int stop_;
};

/// Non-owning stopped view of a path; the clamp in PathView supplies the
/// frozen tail without materializing it. The path must outlive the view.
inline PathView view_stopped_at(const DiscretePath& path, int stop_index) {
    return PathView{&path.grid(), path.values().data(), path.dim(), stop_index};
}

/// Path stopped at time t. t must be a grid point.
StoppedPath stop_at(const DiscretePath& path, double t);

/// Restopping at a later time is a no-op (stopping is idempotent).
StoppedPath stop_at(const StoppedPath& sp, double t);

/// Metric on the space of stopped paths:
///   d((t,x),(t',x')) = sup_nodes |x_t - x'_t'| + |t - t'|.
/// Both paths must share the same grid and dimension.
double d_infinity(const StoppedPath& a, const StoppedPath& b);
double d_infinity(const PathView& a, const PathView& b);

/// Shift the path by e from the stop index onward (the perturbation behind
/// the vertical derivative).
StoppedPath vertical_bump(const StoppedPath& sp, std::span<const double> e);

/// Freeze the path at its current value and advance the stop time by h.
/// t + h must be a grid point and must not exceed the horizon.
StoppedPath horizontal_extend(const StoppedPath& sp, double h);

} // namespace bsdelab
