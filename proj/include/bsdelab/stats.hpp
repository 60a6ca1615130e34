#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace bsdelab {

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    size_t n = 0;
};

MeanSe mean_se(std::span<const double> xs);

/// Ordinary least-squares slope of y against x, with the slope's standard
/// error. Used for log-log rate fits.
struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
};

SlopeFit fit_slope(std::span<const double> x, std::span<const double> y);

/// FNV-1a 64-bit hash, used for config fingerprints.
uint64_t fnv1a64(std::string_view bytes);

/// Runs fn(i) for i in [0, n). Work is split into contiguous blocks over at
/// most `workers` threads; outputs must go to disjoint slots so the result is
/// independent of the worker count.
void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn);

} // namespace bsdelab
