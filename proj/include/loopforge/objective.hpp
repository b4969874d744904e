#pragma once

#include <cmath>
#include <span>

#include "loopforge/closedloop.hpp"
#include "loopforge/errors.hpp"

namespace loopforge {

/// Reward exponent: 1 for mean absolute deviation, 2 for mean squared.
struct RewardConfig {
    int q = 1;

    explicit RewardConfig(int exponent = 1) : q(exponent) {
        if (q != 1 && q != 2) throw std::invalid_argument("reward exponent q must be 1 or 2");
    }
};

/// Mean absolute deviation between two equally sampled responses.
inline double mean_abs_error(const ResponseVector& x, const ResponseVector& target) {
    if (x.samples.size() != target.samples.size()) {
        throw LengthMismatch("responses must share one sampling grid");
    }
    return (x.samples - target.samples).cwiseAbs().mean();
}

/// Tracking reward: -(1/n) * sum_i |x_i - target_i|^q. Zero iff the response
/// matches the target exactly, strictly negative otherwise.
inline double reward(const ResponseVector& x, const ResponseVector& target,
                     const RewardConfig& cfg = RewardConfig{}) {
    if (x.samples.size() != target.samples.size()) {
        throw LengthMismatch("responses must share one sampling grid");
    }
    const Eigen::ArrayXd dev = (x.samples - target.samples).array().abs();
    return cfg.q == 1 ? -dev.mean() : -dev.square().mean();
}

/// Integral absolute error, left-endpoint rectangle rule over sampled errors.
inline double iae(std::span<const double> errors, double sample_dt) {
    if (errors.empty()) throw std::invalid_argument("iae: need at least one sample");
    if (!(sample_dt > 0.0)) throw std::invalid_argument("iae: sample_dt must be positive");
    double sum = 0.0;
    for (double e : errors) sum += std::abs(e);
    return sum * sample_dt;
}

/// Integral squared error, same quadrature as iae().
inline double ise(std::span<const double> errors, double sample_dt) {
    if (errors.empty()) throw std::invalid_argument("ise: need at least one sample");
    if (!(sample_dt > 0.0)) throw std::invalid_argument("ise: sample_dt must be positive");
    double sum = 0.0;
    for (double e : errors) sum += e * e;
    return sum * sample_dt;
}

}  // namespace loopforge
