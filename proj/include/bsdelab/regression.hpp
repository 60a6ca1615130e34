#pragma once

#include <span>
#include <string>
#include <vector>

namespace bsdelab {

/// Path features entering the regression design at each time step.
enum class Feature {
    State,           // current state coordinates
    Functional,      // F(t, X_t, A_t)
    RunningIntegral, // int_0^t X(u) du per coordinate
    RunningMax,      // max_{u<=t} X(u) per coordinate
};

/// Least-squares Monte Carlo basis: a total-degree polynomial expansion of
/// the selected raw features, optionally split into separate polynomials on
/// each side of the singular-set boundary (the conditional expectation has a
/// kink there, which one global polynomial fits poorly) and into quantile
/// bins of the leading feature. Binning keeps the fit local, so the steep
/// capped-terminal ramp in one region cannot excite polynomial lobes in
/// another.
struct RegressionBasis {
    std::vector<Feature> features = {Feature::State, Feature::Functional};
    int degree = 3;
    double ridge = 1e-8;
    bool split_at_singular_boundary = false;
    int quantile_bins = 1;

    std::string describe() const;
};

/// Ridge least squares on a standardized design. Columns with zero spread
/// are dropped from the fit (the intercept carries them); the ridge term
/// makes the normal equations positive definite, which is the full-rank
/// guarantee behind the basis contract.
class RidgeRegression {
public:
    /// design: n x k row-major. Throws std::runtime_error if the normal
    /// equations cannot be factorized (suggesting a larger ridge).
    RidgeRegression(std::span<const double> design, int n, int k, double ridge);

    /// Fits the targets and writes fitted values; returns the residual RMS.
    double fit_predict(std::span<const double> targets, std::span<double> fitted) const;

    /// Node-level uncertainty scale of each fitted value:
    /// resid_rms * sqrt(1 + leverage), the prediction-interval width. The
    /// leverage term is exact for the ridge-regularized hat matrix, so nodes
    /// in sparse feature regions carry honestly wider bands.
    void prediction_se(double resid_rms, std::span<double> out) const;

private:
    int n_ = 0;
    int k_ = 0;
    std::vector<double> mean_;
    std::vector<double> scale_;
    std::vector<double> normalized_; // n x k
    std::vector<double> chol_;       // k x k lower factor of X'X/n + ridge I
};

} // namespace bsdelab
