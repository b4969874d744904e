#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "loopforge/errors.hpp"
#include "loopforge/lti.hpp"

namespace loopforge {

// Measured output is saturated at this magnitude; rollouts under
// destabilizing gains stay finite and earn strongly negative rewards.
inline constexpr double kOutputCap = 10.0;

// Plant-state magnitude guard for open-loop unstable realizations.
inline constexpr double kStateCap = 1e9;

// Derivative filter time constant, as a multiple of the simulation step.
inline constexpr double kDerivativeFilterRatio = 10.0;

/// Controller parameters [k_p, k_i] (PI) or [k_p, k_i, k_d] (PID).
class GainVector {
public:
    explicit GainVector(Eigen::VectorXd gains) : g_(std::move(gains)) {
        if (g_.size() != 2 && g_.size() != 3) {
            throw ShapeMismatch("gain vector must have 2 (PI) or 3 (PID) entries");
        }
        if (!g_.allFinite()) throw NonFiniteResult("gain vector entries must be finite");
    }

    static GainVector pi(double kp, double ki) {
        return GainVector(Eigen::Vector2d(kp, ki));
    }
    static GainVector pid(double kp, double ki, double kd) {
        return GainVector(Eigen::Vector3d(kp, ki, kd));
    }

    double kp() const { return g_(0); }
    double ki() const { return g_(1); }
    double kd() const { return g_.size() == 3 ? g_(2) : 0.0; }

    /// Number of tunable parameters (2 or 3).
    int order() const { return static_cast<int>(g_.size()); }

    const Eigen::VectorXd& vec() const { return g_; }

private:
    Eigen::VectorXd g_;
};

/// Uniform reporting grid T = [0, t_1, ..., t_{n-1}] with t_i = i * sample_dt.
class SamplingGrid {
public:
    SamplingGrid(double sample_dt, int n) : sample_dt_(sample_dt), n_(n) {
        if (!(sample_dt > 0.0) || !std::isfinite(sample_dt)) {
            throw std::invalid_argument("sampling grid: sample_dt must be positive and finite");
        }
        if (n < 2) throw std::invalid_argument("sampling grid: need at least two samples");
    }

    double sample_dt() const { return sample_dt_; }
    int n() const { return n_; }
    double time(int i) const { return i * sample_dt_; }
    double horizon() const { return time(n_ - 1); }

    std::vector<double> times() const {
        std::vector<double> t(static_cast<std::size_t>(n_));
        for (int i = 0; i < n_; ++i) t[static_cast<std::size_t>(i)] = time(i);
        return t;
    }

private:
    double sample_dt_;
    int n_;
};

/// Sampled closed-loop step response; `diverged` reports whether any sample
/// or internal state hit a saturation guard during the rollout.
struct ResponseVector {
    Eigen::VectorXd samples;
    bool diverged = false;
};

/// Controller memory carried between steps.
struct PidState {
    double integrator = 0.0;
    double derivative = 0.0;
    double prev_error = 0.0;
};

/// One step of the discrete PID law.
///
/// u = k_p*e + I' + D' with a backward-Euler integral I' = I + k_i*dt*e and a
/// first-order-filtered backward-difference derivative (filter time constant
/// 10*dt), so a step change in the error produces a bounded derivative kick.
inline std::pair<double, PidState> pid_control_step(const PidState& state, double error,
                                                    const GainVector& gains, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("pid_control_step: dt must be positive");
    PidState next;
    next.integrator = state.integrator + gains.ki() * dt * error;
    const double tf = kDerivativeFilterRatio * dt;
    next.derivative = (tf * state.derivative + gains.kd() * (error - state.prev_error)) / (tf + dt);
    next.prev_error = error;
    const double u = gains.kp() * error + next.integrator + next.derivative;
    return {u, next};
}

/// Unit negative-feedback step rollout: e = setpoint - y, u = PID(e), y from
/// the plant. Starts from rest (zero plant state, empty delay line, zero
/// controller memory) and returns y at the grid times.
///
/// The measured output is clamped to [-kOutputCap, kOutputCap] before it
/// reaches both the recorded sample and the controller, so rollouts under
/// destabilizing gains remain finite.
inline ResponseVector simulate_closed_loop(const DiscretePlant& plant, const GainVector& gains,
                                           const SamplingGrid& grid, double setpoint = 1.0) {
    const double ratio = grid.sample_dt() / plant.dt;
    const long stride = std::lround(ratio);
    if (stride < 1 || std::abs(ratio - static_cast<double>(stride)) > 1e-6) {
        throw GridMismatch("sample_dt must be an integer multiple of the plant step");
    }

    const long total_steps = stride * static_cast<long>(grid.n() - 1);
    const int m = plant.order();

    Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
    std::vector<double> delay_line(static_cast<std::size_t>(std::max(plant.delay_steps, 0)), 0.0);
    std::size_t delay_pos = 0;
    PidState pid;
    double u_prev = 0.0;

    ResponseVector out;
    out.samples.resize(grid.n());
    bool diverged = false;

    for (long k = 0; k <= total_steps; ++k) {
        // Input active on [t_k, t_{k+1}): the oldest pending value for delayed
        // plants. With zero delay the current u is not known yet, so the
        // feedthrough term falls back to the previous interval's input.
        const double u_incoming = delay_line.empty() ? u_prev : delay_line[delay_pos];

        double y = (m > 0 ? plant.C.dot(x) : 0.0) + plant.D * u_incoming;
        if (!std::isfinite(y)) {
            y = std::isnan(y) ? 0.0 : (y > 0.0 ? kOutputCap : -kOutputCap);
            diverged = true;
        }
        if (y > kOutputCap) {
            y = kOutputCap;
            diverged = true;
        } else if (y < -kOutputCap) {
            y = -kOutputCap;
            diverged = true;
        }

        if (k % stride == 0) out.samples(k / stride) = y;
        if (k == total_steps) break;

        const auto [u, next_pid] = pid_control_step(pid, setpoint - y, gains, plant.dt);
        pid = next_pid;

        double u_applied = u;
        if (!delay_line.empty()) {
            u_applied = delay_line[delay_pos];
            delay_line[delay_pos] = u;
            delay_pos = (delay_pos + 1) % delay_line.size();
        }

        if (m > 0) {
            x = (plant.A * x + plant.B * u_applied).eval();
            for (int i = 0; i < m; ++i) {
                if (!std::isfinite(x(i))) {
                    x(i) = 0.0;
                    diverged = true;
                } else if (x(i) > kStateCap) {
                    x(i) = kStateCap;
                    diverged = true;
                } else if (x(i) < -kStateCap) {
                    x(i) = -kStateCap;
                    diverged = true;
                }
            }
        }
        u_prev = u_applied;
    }

    out.diverged = diverged;
    return out;
}

}  // namespace loopforge
