#pragma once

#include <algorithm>
#include <cmath>

#include "loopforge/closedloop.hpp"
#include "loopforge/errors.hpp"

namespace loopforge {

/// First-order-plus-dead-time model K * e^{-theta s} / (tau1 s + 1),
/// typically measured from a single open-loop step test.
struct FopdtModel {
    double gain = 1.0;
    double tau1 = 1.0;
    double theta = 0.0;
};

inline FopdtModel make_fopdt(double gain, double tau1, double theta) {
    if (gain == 0.0 || !std::isfinite(gain)) throw ZeroGain("FOPDT gain must be nonzero and finite");
    if (!(tau1 > 0.0) || !std::isfinite(tau1)) {
        throw std::invalid_argument("FOPDT time constant must be positive and finite");
    }
    if (theta < 0.0 || !std::isfinite(theta)) throw NegativeDelay("FOPDT dead time must be finite and >= 0");
    return FopdtModel{gain, tau1, theta};
}

/// Standard tight-tuning choice tau_c = theta; falls back to tau1/10 for
/// delay-free models where that choice degenerates.
inline double default_tau_c(const FopdtModel& model) {
    return model.theta > 0.0 ? model.theta : 0.1 * model.tau1;
}

/// SIMC PI rule:
///   k_p = (1/K) * tau1 / (tau_c + theta)
///   T_I = min(tau1, 4 * (tau_c + theta)),  k_i = k_p / T_I
inline GainVector simc_pi(const FopdtModel& model, double tau_c) {
    if (model.gain == 0.0) throw ZeroGain("SIMC: model gain must be nonzero");
    if (!(tau_c > 0.0) || !std::isfinite(tau_c)) {
        throw NonPositiveTauC("SIMC: tau_c must be positive and finite");
    }
    const double kp = (1.0 / model.gain) * model.tau1 / (tau_c + model.theta);
    const double ti = std::min(model.tau1, 4.0 * (tau_c + model.theta));
    return GainVector::pi(kp, kp / ti);
}

inline GainVector simc_pi(const FopdtModel& model) {
    return simc_pi(model, default_tau_c(model));
}

}  // namespace loopforge
