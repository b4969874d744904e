#pragma once

#include <stdexcept>

namespace loopforge {

// Construction/validation failures (bad arguments, bad files).
struct InvalidCoefficients : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ImproperSystem : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NegativeDelay : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct GridMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct LengthMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ShapeMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ZeroGain : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NonPositiveTauC : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InvalidTarget : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Scenario files, CLI arguments, inconsistent run configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical blow-up (overflowing matrix exponential, non-finite gains).
struct NonFiniteResult : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace loopforge
