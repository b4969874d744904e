#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace loopforge {

// Finalizer step of the splitmix64 generator; used to decorrelate stream seeds.
inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Maps (run seed, stream id) to an independent sub-seed so separate consumers
// (exploration noise, initial-gain draws, plant drift) never share a stream.
inline constexpr std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream + 1));
}

/// Deterministic scalar random stream.
///
/// Uniform doubles take the top 53 bits of an std::mt19937_64 draw, so the
/// sequence is identical on every platform for a given seed. Normal variates
/// use the basic Box-Muller transform (two uniforms -> two normals, the spare
/// is cached), which keeps the uniform-consumption pattern fixed.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : gen_(seed) {}

    /// Uniform draw in [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    /// Uniform draw in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    /// Standard normal draw.
    double next() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]; keeps log() finite
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace loopforge
