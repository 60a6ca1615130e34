#include "bsdelab/regression.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bsdelab {

std::string RegressionBasis::describe() const {
    std::ostringstream os;
    os << "poly" << degree << "(";
    bool first = true;
    for (Feature f : features) {
        if (!first) os << ",";
        first = false;
        switch (f) {
            case Feature::State: os << "state"; break;
            case Feature::Functional: os << "functional"; break;
            case Feature::RunningIntegral: os << "running_integral"; break;
            case Feature::RunningMax: os << "running_max"; break;
        }
    }
    os << ") ridge=" << ridge;
    if (split_at_singular_boundary) os << " split";
    if (quantile_bins > 1) os << " bins=" << quantile_bins;
    return os.str();
}

RidgeRegression::RidgeRegression(std::span<const double> design, int n, int k, double ridge)
    : n_(n), k_(k), mean_(static_cast<size_t>(k), 0.0), scale_(static_cast<size_t>(k), 1.0) {
    if (design.size() != static_cast<size_t>(n) * k)
        throw std::invalid_argument("RidgeRegression: design size mismatch");
    if (n < 1 || k < 1)
        throw std::invalid_argument("RidgeRegression: empty design");

    normalized_.assign(design.begin(), design.end());
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(
        normalized_.data(), n, k);

    for (int c = 0; c < k; ++c) {
        mean_[static_cast<size_t>(c)] = X.col(c).mean();
        X.col(c).array() -= mean_[static_cast<size_t>(c)];
        const double sd = std::sqrt(X.col(c).squaredNorm() / n);
        if (sd > 0.0) {
            scale_[static_cast<size_t>(c)] = sd;
            X.col(c) /= sd;
        } else {
            // Degenerate column: excluded from the fit, the intercept carries it.
            scale_[static_cast<size_t>(c)] = 0.0;
            X.col(c).setZero();
        }
    }

    Eigen::MatrixXd G = (X.transpose() * X) / static_cast<double>(n);
    G.diagonal().array() += std::max(ridge, 1e-14);
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    if (llt.info() != Eigen::Success) {
        std::ostringstream os;
        os << "RidgeRegression: normal equations not positive definite (k = " << k
           << "); increase the ridge weight";
        throw std::runtime_error(os.str());
    }
    chol_.resize(static_cast<size_t>(k) * k);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        chol_.data(), k, k) = Eigen::MatrixXd(llt.matrixL());
}

double RidgeRegression::fit_predict(std::span<const double> targets,
                                    std::span<double> fitted) const {
    if (targets.size() != static_cast<size_t>(n_) || fitted.size() != static_cast<size_t>(n_))
        throw std::invalid_argument("RidgeRegression: target size mismatch");

    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(
        normalized_.data(), n_, k_);
    Eigen::Map<const Eigen::VectorXd> y(targets.data(), n_);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> L(
        chol_.data(), k_, k_);

    const double ymean = y.mean();
    Eigen::VectorXd rhs = X.transpose() * (y.array() - ymean).matrix() / static_cast<double>(n_);
    Eigen::VectorXd beta = L.triangularView<Eigen::Lower>().solve(rhs);
    L.transpose().triangularView<Eigen::Upper>().solveInPlace(beta);

    Eigen::Map<Eigen::VectorXd> out(fitted.data(), n_);
    out = X * beta;
    out.array() += ymean;

    return std::sqrt((y - out).squaredNorm() / n_);
}

void RidgeRegression::prediction_se(double resid_rms, std::span<double> out) const {
    if (out.size() != static_cast<size_t>(n_))
        throw std::invalid_argument("RidgeRegression: output size mismatch");
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(
        normalized_.data(), n_, k_);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> L(
        chol_.data(), k_, k_);
    // Prediction scale: sqrt(1 + leverage) with leverage_i =
    // (1 + x_i' G^{-1} x_i)/n, G = X'X/n + ridge I (the 1/n is the centered
    // intercept's share). The leading 1 is the conditional spread of an
    // individual observation: node values are single draws, not sample means,
    // so their consistency band carries the residual scale itself.
    Eigen::VectorXd w(k_);
    for (int i = 0; i < n_; ++i) {
        w = X.row(i).transpose();
        L.triangularView<Eigen::Lower>().solveInPlace(w);
        const double lev = (1.0 + w.squaredNorm()) / n_;
        out[static_cast<size_t>(i)] = resid_rms * std::sqrt(1.0 + lev);
    }
}

} // namespace bsdelab
