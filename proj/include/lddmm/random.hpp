#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>

namespace lddmm {

/// Counter-based SplitMix64.
///
/// Output n (n = 1, 2, ...) of the stream with key K is mix(K + n * 0x9E3779B97F4A7C15),
/// where mix is the SplitMix64 finaliser (shifts 30/27/31, multipliers
/// 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB). Independent substreams get keys
/// derive_key(seed, tag, index). Uniforms use the top 53 bits; normals use
/// the Marsaglia polar method on successive uniform pairs.
namespace rng {

inline constexpr std::string_view algorithm_name = "splitmix64-counter/polar";
inline constexpr std::uint64_t golden_gamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t derive_key(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) noexcept {
    return mix64(mix64(seed + tag * golden_gamma) + (index + 1) * golden_gamma);
}

enum StreamTag : std::uint64_t {
    target_momentum = 1,
    ensemble_member = 2,
};

class Stream {
public:
    explicit constexpr Stream(std::uint64_t key) noexcept : key_(key) {}

    constexpr std::uint64_t next_u64() noexcept { return mix64(key_ + (++counter_) * golden_gamma); }

    /// Uniform on [0, 1).
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double low, double high) noexcept { return low + (high - low) * uniform(); }

    double normal() noexcept {
        if (spare_) {
            const double v = *spare_;
            spare_.reset();
            return v;
        }
        double u = 0.0;
        double v = 0.0;
        double s = 0.0;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        return u * f;
    }

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::optional<double> spare_;
};

inline Stream substream(std::uint64_t seed, StreamTag tag, std::uint64_t index = 0) {
    return Stream(derive_key(seed, tag, index));
}

}  // namespace rng
}  // namespace lddmm
