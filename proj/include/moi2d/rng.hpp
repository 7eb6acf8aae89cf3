#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace moi2d {

/// Philox-2x64 counter-based generator (10 rounds). A block is a pure
/// function of (counter0, counter1, key), so trajectory i / step n can draw
/// its noise as block(n, i, seed) with no generator state to carry: results
/// are identical no matter how trajectories are scheduled across threads.
struct Philox2x64 {
    static constexpr std::uint64_t mult = 0xD2B74407B1CE6E93ull;
    static constexpr std::uint64_t weyl = 0x9E3779B97F4A7C15ull;

    static std::pair<std::uint64_t, std::uint64_t> block(std::uint64_t c0,
                                                         std::uint64_t c1,
                                                         std::uint64_t key) {
        for (int r = 0; r < 10; ++r) {
            if (r > 0) key += weyl;
            const auto prod = static_cast<unsigned __int128>(mult) * c0;
            const auto lo = static_cast<std::uint64_t>(prod);
            const auto hi = static_cast<std::uint64_t>(prod >> 64);
            c0 = hi ^ key ^ c1;
            c1 = lo;
        }
        return {c0, c1};
    }
};

/// Uniform in (0,1) from 64 random bits (53-bit resolution, never 0 or 1).
inline double uniform_from_bits(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

/// One standard-normal pair per counter block (Box-Muller).
inline std::pair<double, double> normal_pair(std::uint64_t c0, std::uint64_t c1,
                                             std::uint64_t key) {
    const auto [b0, b1] = Philox2x64::block(c0, c1, key);
    const double u1 = uniform_from_bits(b0);
    const double u2 = uniform_from_bits(b1);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(th), r * std::sin(th)};
}

} // namespace moi2d
