#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace cdpa {

// splitmix64 step (Steele, Lea, Vigna). One invertible 64-bit mix per draw.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Collapses a list of stream-identifying parts into one 64-bit key.
inline std::uint64_t key_hash(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x6a09e667f3bcc908ULL;
    for (std::uint64_t p : parts) {
        h ^= p + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        std::uint64_t s = h;
        h = splitmix64_next(s);
    }
    return h;
}

// Named sub-stream tags so every randomness consumer owns a disjoint key space.
namespace stream {
inline constexpr std::uint64_t data = 1;
inline constexpr std::uint64_t labels = 2;
inline constexpr std::uint64_t init = 3;
inline constexpr std::uint64_t partition = 4;
inline constexpr std::uint64_t split = 5;
inline constexpr std::uint64_t dither = 6;
inline constexpr std::uint64_t flip = 7;
inline constexpr std::uint64_t batch = 8;
inline constexpr std::uint64_t ldp = 9;
inline constexpr std::uint64_t mc_word = 10;
inline constexpr std::uint64_t mc_flip = 11;
inline constexpr std::uint64_t probe = 12;
}  // namespace stream

// Small counter-based generator. Every consumer builds one from a key derived
// with key_hash, so parallel clients/words draw from disjoint, order-free
// streams and any single stage can be re-seeded without disturbing the rest.
class KeyedRng {
public:
    explicit KeyedRng(std::uint64_t key) : state_(key) {}

    static KeyedRng from(std::initializer_list<std::uint64_t> parts) {
        return KeyedRng(key_hash(parts));
    }

    std::uint64_t next_u64() { return splitmix64_next(state_); }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Unbiased integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    // Standard normal via Box-Muller; portable across standard libraries.
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Zero-mean Laplace with the given scale (inverse-CDF sampling).
    double next_laplace(double scale) {
        const double u = next_double() - 0.5;
        const double sign = u < 0.0 ? -1.0 : 1.0;
        return -scale * sign * std::log(1.0 - 2.0 * std::fabs(u));
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace cdpa
