#pragma once

// Gaussian-process surrogate over 5-D camera poses and the expected
// improvement acquisition.

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "viewsphere/camera.hpp"
#include "viewsphere/errors.hpp"

namespace viewsphere {

using PoseVector = std::array<double, 5>;  ///< (r, theta, phi, x, y)

inline PoseVector to_vector(const CameraPose& p) { return {p.r, p.theta, p.phi, p.x, p.y}; }
inline CameraPose to_pose(const PoseVector& v) { return {v[0], v[1], v[2], v[3], v[4]}; }

struct KernelParams {
    PoseVector length_scales{1.0, 0.35, 0.35, 0.2, 0.2};
    double signal_variance = 1.0;
    double noise = 1e-8;  ///< on standardized targets
};

/// Squared distance with each component divided by its length scale; phi
/// (index 2) uses the shortest angular difference.
inline double scaled_sq_distance(const PoseVector& a, const PoseVector& b, const PoseVector& ls) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < 5; ++k) {
        const double d = k == 2 ? angle_difference(a[k], b[k]) : a[k] - b[k];
        d2 += (d / ls[k]) * (d / ls[k]);
    }
    return d2;
}

inline double se_kernel(const PoseVector& a, const PoseVector& b, const KernelParams& p) {
    return p.signal_variance * std::exp(-0.5 * scaled_sq_distance(a, b, p.length_scales));
}

struct Prediction {
    double mean = 0.0;
    double stddev = 0.0;
};

class GaussianSurrogate {
public:
    explicit GaussianSurrogate(KernelParams params = {}) : params_(params) {
        if (!(params_.noise > 0.0) || !(params_.signal_variance > 0.0)) {
            throw std::invalid_argument("surrogate noise and signal variance must be positive");
        }
        for (double l : params_.length_scales) {
            if (!(l > 0.0)) {
                throw std::invalid_argument("surrogate length scales must be positive");
            }
        }
    }

    /// Fits to (inputs, targets). Targets are standardized internally.
    void fit(std::vector<PoseVector> inputs, std::vector<double> targets) {
        if (inputs.size() != targets.size() || inputs.empty()) {
            throw std::invalid_argument("surrogate needs matching, non-empty inputs and targets");
        }
        inputs_ = std::move(inputs);
        targets_ = std::move(targets);
        const auto n = static_cast<Eigen::Index>(inputs_.size());
        double mean = 0.0;
        for (double y : targets_) mean += y;
        mean /= static_cast<double>(n);
        double var = 0.0;
        double lo = targets_[0], hi = targets_[0];
        for (double y : targets_) {
            var += (y - mean) * (y - mean);
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
        y_mean_ = mean;
        constant_ = hi - lo < 1e-12;
        y_scale_ = constant_ ? 1.0 : std::sqrt(var / static_cast<double>(n));

        Eigen::MatrixXd K(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j <= i; ++j) {
                K(i, j) = K(j, i) = se_kernel(inputs_[static_cast<std::size_t>(i)],
                                              inputs_[static_cast<std::size_t>(j)], params_);
            }
        }
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            y(i) = (targets_[static_cast<std::size_t>(i)] - y_mean_) / y_scale_;
        }
        jitter_ = 0.0;
        for (double extra = 0.0;; extra = extra == 0.0 ? 1e-10 : extra * 10.0) {
            if (extra > 1e-2) {
                throw NumericFailure("surrogate kernel matrix is not positive definite after jitter escalation (" +
                                     std::to_string(n) + " points)");
            }
            Eigen::MatrixXd A = K;
            A.diagonal().array() += params_.noise + extra;
            llt_.compute(A);
            if (llt_.info() == Eigen::Success) {
                jitter_ = extra;
                break;
            }
        }
        alpha_ = llt_.solve(y);
        fitted_ = true;
    }

    Prediction predict(const PoseVector& x) const {
        require_fitted();
        const auto n = static_cast<Eigen::Index>(inputs_.size());
        Eigen::VectorXd k(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            k(i) = se_kernel(x, inputs_[static_cast<std::size_t>(i)], params_);
        }
        const double mu = k.dot(alpha_);
        const Eigen::VectorXd v = llt_.matrixL().solve(k);
        const double var = std::max(0.0, params_.signal_variance - v.squaredNorm());
        return {y_mean_ + y_scale_ * mu, y_scale_ * std::sqrt(var)};
    }

    /// Log marginal likelihood of the standardized targets.
    double log_marginal_likelihood() const {
        require_fitted();
        Eigen::VectorXd y(static_cast<Eigen::Index>(targets_.size()));
        for (std::size_t i = 0; i < targets_.size(); ++i) {
            y(static_cast<Eigen::Index>(i)) = (targets_[i] - y_mean_) / y_scale_;
        }
        const Eigen::MatrixXd L = llt_.matrixL();
        const double log_det = 2.0 * L.diagonal().array().log().sum();
        return -0.5 * y.dot(alpha_) - 0.5 * log_det -
               0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
    }

    /// True when all targets are equal; the surrogate carries no information.
    bool constant() const { return constant_; }
    double jitter() const { return jitter_; }
    const KernelParams& params() const { return params_; }
    std::size_t size() const { return inputs_.size(); }

private:
    void require_fitted() const {
        if (!fitted_) {
            throw std::logic_error("surrogate used before fit");
        }
    }

    KernelParams params_;
    std::vector<PoseVector> inputs_;
    std::vector<double> targets_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd alpha_;
    double y_mean_ = 0.0;
    double y_scale_ = 1.0;
    double jitter_ = 0.0;
    bool constant_ = false;
    bool fitted_ = false;
};

/// EI for maximization with exploration offset xi.
inline double expected_improvement(const Prediction& p, double best, double xi) {
    const double gain = p.mean - best - xi;
    if (p.stddev < 1e-12) {
        return std::max(0.0, gain);
    }
    const double z = gain / p.stddev;
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
    return std::max(0.0, gain * cdf + p.stddev * pdf);
}

/// Picks the length-scale multiplier from a fixed grid by maximum marginal
/// likelihood and returns the refitted surrogate.
inline GaussianSurrogate fit_ml2(const KernelParams& base, const std::vector<PoseVector>& inputs,
                                 const std::vector<double>& targets) {
    static constexpr std::array<double, 7> kGrid{0.25, 0.4, 0.6, 1.0, 1.5, 2.5, 4.0};
    GaussianSurrogate best(base);
    double best_lml = -std::numeric_limits<double>::infinity();
    bool have = false;
    for (double m : kGrid) {
        KernelParams p = base;
        for (double& l : p.length_scales) l *= m;
        GaussianSurrogate s(p);
        try {
            s.fit(inputs, targets);
        } catch (const NumericFailure&) {
            continue;
        }
        const double lml = s.log_marginal_likelihood();
        if (!have || lml > best_lml) {
            best = s;
            best_lml = lml;
            have = true;
        }
    }
    if (!have) {
        throw NumericFailure("no length-scale candidate produced a positive definite kernel matrix");
    }
    return best;
}

}  // namespace viewsphere
