#pragma once

#include <cstdint>

namespace sforge {

/// Counter-based SplitMix64 stream. A (seed, stream) pair fully determines
/// the sequence, so independent purposes (weights of layer 3, calibration
/// inputs, ...) draw from disjoint streams and can be regenerated in any
/// order. Normal deviates use the polar method with the portable log below,
/// so sequences are bit-identical on every IEEE-754 platform.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream) noexcept;

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Standard normal deviate.
    double normal() noexcept;

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Natural log and exp built from +, -, *, / and sqrt only (no libm calls),
/// for platform-independent generator output. Accurate to a few ulps.
double portable_log(double x) noexcept;
double portable_exp(double x) noexcept;

}  // namespace sforge
