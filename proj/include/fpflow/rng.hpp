#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace fpflow {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Maps 64 random bits to a double in the open interval (0, 1).
inline constexpr double to_open_unit(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Sequential generator (SplitMix64). Bit-reproducible across platforms,
/// unlike std::uniform_real_distribution.
class SplitMix {
public:
    explicit SplitMix(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        const std::uint64_t out = splitmix64(state_);
        state_ += 0x9e3779b97f4a7c15ULL;
        return out;
    }
    double uniform() noexcept { return to_open_unit(next()); }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

private:
    std::uint64_t state_;
};

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, step, slot), so results do not depend on how the work is
/// split across threads.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) noexcept : seed_(splitmix64(seed)) {}

    std::uint64_t bits(std::uint64_t stream, std::uint64_t step, std::uint64_t slot) const noexcept {
        std::uint64_t h = splitmix64(seed_ ^ stream);
        h = splitmix64(h ^ (step * 0xd1b54a32d192ed03ULL));
        return splitmix64(h ^ (slot * 0x8cb92ba72f3d8dd7ULL));
    }

    double uniform(std::uint64_t stream, std::uint64_t step, std::uint64_t slot) const noexcept {
        return to_open_unit(bits(stream, step, slot));
    }

    /// Standard normal via Box-Muller on two counter draws.
    double normal(std::uint64_t stream, std::uint64_t step, std::uint64_t slot) const noexcept {
        const double u1 = uniform(stream, step, 2 * slot);
        const double u2 = uniform(stream, step, 2 * slot + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t seed_;
};

}  // namespace fpflow
