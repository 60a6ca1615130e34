#pragma once

#include <memory>
#include <string>
#include <vector>

namespace bsdelab {

/// Discretization of [0, T]. Points are strictly increasing, start at 0 and
/// end at T. Grids are immutable after construction and shared between paths.
class TimeGrid {
public:
    enum class Refinement { Uniform, GeometricNearT };

    /// Uniform grid with n_steps intervals.
    static TimeGrid uniform(double horizon, int n_steps);

    /// Grid whose step sizes decrease geometrically toward T with the given
    /// ratio in (0,1). Steps are floored at min_step and the whole sequence is
    /// calibrated so that it sums exactly to the horizon. Intended for
    /// problems whose solution steepens near T.
    static TimeGrid geometric_near_t(double horizon, int n_steps,
                                     double ratio = 0.85,
                                     double min_step_fraction = 1e-6);

    const std::vector<double>& points() const { return points_; }
    double point(int i) const { return points_[static_cast<size_t>(i)]; }
    double horizon() const { return points_.back(); }
    int n_steps() const { return static_cast<int>(points_.size()) - 1; }
    int n_nodes() const { return static_cast<int>(points_.size()); }
    double dt(int i) const { return points_[static_cast<size_t>(i) + 1] - points_[static_cast<size_t>(i)]; }
    Refinement refinement() const { return refinement_; }

    /// Index of a grid point equal to t (within a small matching tolerance).
    /// Throws std::invalid_argument naming the two bracketing grid points if
    /// t does not lie on the grid.
    int index_of(double t) const;

    /// Largest index i with point(i) <= t + tolerance.
    int floor_index(double t) const;

    bool same_as(const TimeGrid& other) const;

private:
    TimeGrid(std::vector<double> pts, Refinement r);

    std::vector<double> points_;
    Refinement refinement_;
};

using GridPtr = std::shared_ptr<const TimeGrid>;

inline GridPtr make_uniform_grid(double horizon, int n_steps) {
    return std::make_shared<const TimeGrid>(TimeGrid::uniform(horizon, n_steps));
}

inline GridPtr make_geometric_grid(double horizon, int n_steps, double ratio = 0.85,
                                   double min_step_fraction = 1e-6) {
    return std::make_shared<const TimeGrid>(
        TimeGrid::geometric_near_t(horizon, n_steps, ratio, min_step_fraction));
}

} // namespace bsdelab
