#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "loopforge/errors.hpp"

namespace loopforge {

/// Continuous-time SISO transfer function: rational part in descending powers
/// of s plus a pure transport delay in seconds.
///
/// Always stored normalized: the leading denominator coefficient is 1 and
/// leading zeros are stripped from the numerator.
class TransferFunction {
public:
    TransferFunction(std::vector<double> num, std::vector<double> den, double delay = 0.0)
        : num_(std::move(num)), den_(std::move(den)), delay_(delay) {
        validate_and_normalize();
    }

    const std::vector<double>& num() const { return num_; }
    const std::vector<double>& den() const { return den_; }
    double delay() const { return delay_; }

    /// Denominator degree (system order).
    int order() const { return static_cast<int>(den_.size()) - 1; }

private:
    void validate_and_normalize() {
        if (den_.empty() || den_.front() == 0.0) {
            throw InvalidCoefficients("denominator must be nonempty with a nonzero leading coefficient");
        }
        for (double c : den_) {
            if (!std::isfinite(c)) throw InvalidCoefficients("denominator coefficients must be finite");
        }
        for (double c : num_) {
            if (!std::isfinite(c)) throw InvalidCoefficients("numerator coefficients must be finite");
        }
        if (!std::isfinite(delay_) || delay_ < 0.0) {
            throw NegativeDelay("dead time must be finite and >= 0");
        }
        // Strip leading zeros so the degree comparison sees the true degree.
        while (num_.size() > 1 && num_.front() == 0.0) num_.erase(num_.begin());
        if (num_.empty()) num_.push_back(0.0);
        if (num_.size() > den_.size()) {
            throw ImproperSystem("numerator degree exceeds denominator degree");
        }
        const double lead = den_.front();
        for (double& c : den_) c /= lead;
        for (double& c : num_) c /= lead;
    }

    std::vector<double> num_;
    std::vector<double> den_;
    double delay_ = 0.0;
};

inline TransferFunction make_tf(std::vector<double> num, std::vector<double> den, double delay = 0.0) {
    return TransferFunction(std::move(num), std::move(den), delay);
}

/// Continuous state-space realization x' = Ax + Bu, y = Cx + Du.
/// The dead time of the source transfer function rides along unchanged.
struct StateSpace {
    Eigen::MatrixXd A;
    Eigen::VectorXd B;
    Eigen::RowVectorXd C;
    double D = 0.0;
    double delay = 0.0;
};

/// Controllable-canonical realization of the rational part of `tf`.
inline StateSpace tf_to_ss(const TransferFunction& tf) {
    const int m = tf.order();
    const std::vector<double>& den = tf.den();  // monic, descending

    // Numerator padded to full length, descending powers.
    std::vector<double> nb(static_cast<std::size_t>(m) + 1, 0.0);
    const std::size_t offset = nb.size() - tf.num().size();
    for (std::size_t i = 0; i < tf.num().size(); ++i) nb[offset + i] = tf.num()[i];

    StateSpace ss;
    ss.delay = tf.delay();
    ss.D = nb[0];

    if (m == 0) {
        ss.A.resize(0, 0);
        ss.B.resize(0);
        ss.C.resize(0);
        return ss;
    }

    // Strictly proper remainder after removing the direct feedthrough.
    std::vector<double> rem(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) rem[i] = nb[i + 1] - ss.D * den[i + 1];

    ss.A = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i + 1 < m; ++i) ss.A(i, i + 1) = 1.0;
    for (int j = 0; j < m; ++j) ss.A(m - 1, j) = -den[static_cast<std::size_t>(m - j)];

    ss.B = Eigen::VectorXd::Zero(m);
    ss.B(m - 1) = 1.0;

    ss.C = Eigen::RowVectorXd::Zero(m);
    for (int j = 0; j < m; ++j) ss.C(j) = rem[static_cast<std::size_t>(m - 1 - j)];
    return ss;
}

/// Exact-ZOH discrete realization with the dead time folded into an
/// integer-step input delay.
struct DiscretePlant {
    Eigen::MatrixXd A;
    Eigen::VectorXd B;
    Eigen::RowVectorXd C;
    double D = 0.0;
    double dt = 0.0;
    int delay_steps = 0;

    int order() const { return static_cast<int>(A.rows()); }
};

/// Samples `ss` under a zero-order hold of width `dt`.
///
/// A_d and B_d come from one exponential of the augmented matrix
/// [[A, B], [0, 0]]*dt, which needs no invertibility assumption on A.
inline DiscretePlant zoh_discretize(const StateSpace& ss, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw std::invalid_argument("zoh_discretize: dt must be positive and finite");
    }
    const int m = static_cast<int>(ss.A.rows());

    DiscretePlant plant;
    plant.C = ss.C;
    plant.D = ss.D;
    plant.dt = dt;
    plant.delay_steps = static_cast<int>(std::llround(ss.delay / dt));

    if (m == 0) {
        plant.A.resize(0, 0);
        plant.B.resize(0);
        return plant;
    }

    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(m + 1, m + 1);
    aug.topLeftCorner(m, m) = ss.A;
    aug.topRightCorner(m, 1) = ss.B;
    const Eigen::MatrixXd phi = (aug * dt).exp();
    if (!phi.allFinite()) {
        throw NonFiniteResult("zoh_discretize: matrix exponential overflowed");
    }
    plant.A = phi.topLeftCorner(m, m);
    plant.B = phi.topRightCorner(m, 1);
    return plant;
}

/// tf -> controllable canonical state space -> ZOH sampling, in one call.
inline DiscretePlant discretize(const TransferFunction& tf, double dt) {
    return zoh_discretize(tf_to_ss(tf), dt);
}

/// Open-loop unit-step response at the plant's own step width.
/// Returns y(0), y(dt), ..., y((steps-1)*dt) from zero initial state.
inline Eigen::VectorXd step_response(const DiscretePlant& plant, int steps) {
    if (steps < 0) throw std::invalid_argument("step_response: steps must be >= 0");
    Eigen::VectorXd y(steps);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(plant.order());
    for (int k = 0; k < steps; ++k) {
        const double u = k >= plant.delay_steps ? 1.0 : 0.0;
        y(k) = (plant.order() > 0 ? plant.C.dot(x) : 0.0) + plant.D * u;
        if (plant.order() > 0) x = plant.A * x + plant.B * u;
    }
    return y;
}

}  // namespace loopforge
