#pragma once

#include <array>
#include <cstdint>

#include "eqr/image.hpp"

namespace eqr {

/// xoshiro256** seeded through splitmix64. Gaussian draws use Box-Muller,
/// two uniforms per pair with the second value cached, so a given seed
/// always yields the same stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next_u64() noexcept;
    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [lo, hi] (inclusive), unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept;
    double normal() noexcept;
    /// Gamma(shape, scale) by Marsaglia-Tsang; shape > 0.
    double gamma(double shape, double scale) noexcept;

    Image normal_image(const Shape& shape);

    /// Independent stream for a derived key (seed mixing, not jump-ahead).
    static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) noexcept;

private:
    std::array<std::uint64_t, 4> s_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace eqr
