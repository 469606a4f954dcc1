#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace smearscope {

/// xoshiro256++ with splitmix64 seed expansion.
///
/// Fixtures and synthetic data must reproduce byte-identically across
/// platforms and standard libraries, so neither the engine nor the
/// distributions may come from <random> (the standard pins the engines but
/// not the distributions). Everything here is integer or IEEE-double
/// arithmetic with a fixed evaluation order.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : state_) w = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Unbiased integer in [0, n), n >= 1. Rejection sampling on the top
    /// multiple of n.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Inclusive integer range.
    std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(
                        next_below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Approximate standard normal via the Irwin-Hall 12-sum. Chosen over
    /// Box-Muller because it needs no libm transcendentals, which are not
    /// bit-identical across platforms.
    double next_gaussian() {
        double s = 0.0;
        for (int i = 0; i < 12; ++i) s += next_double();
        return s - 6.0;
    }

    bool next_bool() { return (next_u64() >> 63) != 0; }

    /// Fisher-Yates shuffle with a fixed traversal order.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_below(i));
            using std::swap;
            swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::array<std::uint64_t, 4> state_;
};

}  // namespace smearscope
