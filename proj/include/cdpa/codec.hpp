#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cdpa/rng.hpp"

namespace cdpa {

// Fixed-point words are m-bit two's-complement integers carried in int32_t.
using FixedWord = std::int32_t;

inline constexpr int kMinWordBits = 8;
inline constexpr int kMaxWordBits = 32;

// Bit positions eligible for randomized flipping. Positions are 0-based from
// the most significant bit, so position i toggles 2^(m-1-i) in the integer
// domain (i = 0 is the sign bit).
struct FlipMask {
    std::vector<int> positions;
    double p = 0.98;  // retain probability; flip probability is 1-p
    int z = 4;        // decimal-scale exponent
    int m = 16;       // word width in bits

    void validate() const;
    bool contains(int position) const;
};

struct FixedEncodeResult {
    std::vector<FixedWord> words;
    std::size_t clamp_count = 0;
};

// Round to z decimals (half away from zero), scale by 10^z, saturate to the
// m-bit two's-complement range. Non-finite input is a contract violation.
FixedEncodeResult float_to_fixed(std::span<const double> v, int z, int m);

// Signed word value divided by 10^z.
std::vector<double> fixed_to_float(std::span<const FixedWord> words, int z);

// m-bit two's-complement pattern of a word, and its sign-extended inverse.
std::uint32_t word_to_pattern(FixedWord value, int m);
FixedWord pattern_to_word(std::uint32_t pattern, int m);

// Core flip: each listed position kept with probability p, inverted with
// probability 1-p; one uniform draw per position in listed order.
std::uint32_t flip_pattern(std::uint32_t pattern, std::span<const int> positions, int m,
                           double p, KeyedRng& rng);

// Masked randomized response on one word; unmasked bits are untouched.
FixedWord bit_flip(FixedWord word, const FlipMask& mask, KeyedRng& rng);

// Per-bit privacy budget of the randomized response: ln(p / (1-p)).
// p = 1 maps to +infinity; p <= 0.5 is a domain error.
double epsilon_of(double p);

// Inverse budget: p = e^eps / (1 + e^eps), for eps >= 0.
double p_of_epsilon(double epsilon);

}  // namespace cdpa
