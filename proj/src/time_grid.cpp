#include "bsdelab/time_grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bsdelab {

namespace {

double match_tolerance(double horizon) {
    return 1e-9 * std::max(1.0, horizon);
}

} // namespace

TimeGrid::TimeGrid(std::vector<double> pts, Refinement r)
    : points_(std::move(pts)), refinement_(r) {
    if (points_.size() < 3)
        throw std::invalid_argument("TimeGrid: need at least 2 steps");
    if (points_.front() != 0.0)
        throw std::invalid_argument("TimeGrid: first point must be 0");
    for (size_t i = 1; i < points_.size(); ++i) {
        if (!(points_[i] > points_[i - 1]))
            throw std::invalid_argument("TimeGrid: points must be strictly increasing");
    }
    if (!(points_.back() > 0.0) || !std::isfinite(points_.back()))
        throw std::invalid_argument("TimeGrid: horizon must be positive and finite");
}

TimeGrid TimeGrid::uniform(double horizon, int n_steps) {
    if (n_steps < 2)
        throw std::invalid_argument("TimeGrid::uniform: n_steps must be >= 2");
    std::vector<double> pts(static_cast<size_t>(n_steps) + 1);
    for (int i = 0; i <= n_steps; ++i)
        pts[static_cast<size_t>(i)] = horizon * static_cast<double>(i) / n_steps;
    pts.back() = horizon;
    return TimeGrid(std::move(pts), Refinement::Uniform);
}

TimeGrid TimeGrid::geometric_near_t(double horizon, int n_steps, double ratio,
                                    double min_step_fraction) {
    if (n_steps < 2)
        throw std::invalid_argument("TimeGrid::geometric_near_t: n_steps must be >= 2");
    if (!(ratio > 0.0 && ratio < 1.0))
        throw std::invalid_argument("TimeGrid::geometric_near_t: ratio must be in (0,1)");
    const double min_step = min_step_fraction * horizon;
    if (!(min_step > 0.0) || min_step * n_steps >= horizon)
        throw std::invalid_argument("TimeGrid::geometric_near_t: min step too large for n_steps");

    // Nodes sit at the remaining-time levels tau_j = T ratio^j (for ratio 1/2
    // these are exact dyadic machine numbers), followed by a uniform tail once
    // the geometric step would drop below the floor or the step budget runs
    // out. The tail step must not exceed the last geometric step, so the step
    // sequence stays non-increasing.
    std::vector<double> pts;
    pts.push_back(0.0);
    double tau = horizon; // remaining time at the current node
    int m = 0;
    while (m < n_steps - 1) {
        const double next_tau = tau * ratio;
        const double step = tau - next_tau;
        const int tail = n_steps - m - 1;
        const bool tail_fits = next_tau / tail >= min_step && next_tau / tail <= step;
        if (step < min_step || !tail_fits) break;
        pts.push_back(horizon - next_tau);
        tau = next_tau;
        ++m;
    }
    const int tail = n_steps - m;
    for (int k = 1; k < tail; ++k)
        pts.push_back((horizon - tau) + tau * static_cast<double>(k) / tail);
    pts.push_back(horizon);
    if (static_cast<int>(pts.size()) != n_steps + 1)
        throw std::invalid_argument("TimeGrid::geometric_near_t: construction failed");
    return TimeGrid(std::move(pts), Refinement::GeometricNearT);
}

int TimeGrid::index_of(double t) const {
    const double tol = match_tolerance(horizon());
    auto it = std::lower_bound(points_.begin(), points_.end(), t - tol);
    if (it != points_.end() && std::abs(*it - t) <= tol)
        return static_cast<int>(it - points_.begin());
    std::ostringstream os;
    os << "time " << t << " is not a grid point";
    if (it == points_.begin())
        os << "; first grid point is " << points_.front();
    else if (it == points_.end())
        os << "; last grid point is " << points_.back();
    else
        os << "; bracketing grid points are " << *(it - 1) << " and " << *it;
    throw std::invalid_argument(os.str());
}

int TimeGrid::floor_index(double t) const {
    const double tol = match_tolerance(horizon());
    auto it = std::upper_bound(points_.begin(), points_.end(), t + tol);
    if (it == points_.begin())
        throw std::invalid_argument("TimeGrid::floor_index: time before grid start");
    return static_cast<int>(it - points_.begin()) - 1;
}

bool TimeGrid::same_as(const TimeGrid& other) const {
    return points_ == other.points_;
}

} // namespace bsdelab
