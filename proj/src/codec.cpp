#include "cdpa/codec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cdpa/errors.hpp"

namespace cdpa {

void FlipMask::validate() const {
    if (m < kMinWordBits || m > kMaxWordBits) {
        throw ConfigError("FlipMask: word width m must be in [8, 32], got " +
                          std::to_string(m));
    }
    if (z < 0) throw ConfigError("FlipMask: scale exponent z must be >= 0");
    if (!(p > 0.5) || p > 1.0) {
        throw ConfigError("FlipMask: retain probability must satisfy 0.5 < p <= 1");
    }
    int prev = -1;
    for (int pos : positions) {
        if (pos < 0 || pos >= m) {
            throw ConfigError("FlipMask: position " + std::to_string(pos) +
                              " outside word width " + std::to_string(m));
        }
        if (pos <= prev) throw ConfigError("FlipMask: positions must be sorted, distinct");
        prev = pos;
    }
}

bool FlipMask::contains(int position) const {
    return std::binary_search(positions.begin(), positions.end(), position);
}

namespace {

void check_width(int m, const char* where) {
    if (m < kMinWordBits || m > kMaxWordBits) {
        throw ContractError(std::string(where) + ": word width must be in [8, 32]");
    }
}

double pow10i(int z) {
    double s = 1.0;
    while (z-- > 0) s *= 10.0;
    return s;
}

}  // namespace

FixedEncodeResult float_to_fixed(std::span<const double> v, int z, int m) {
    check_width(m, "float_to_fixed");
    if (z < 0) throw ContractError("float_to_fixed: z must be >= 0");
    const double scale = pow10i(z);
    const double lo = -std::ldexp(1.0, m - 1);        // -2^(m-1)
    const double hi = std::ldexp(1.0, m - 1) - 1.0;   //  2^(m-1) - 1

    FixedEncodeResult out;
    out.words.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw ContractError("float_to_fixed: non-finite value at index " +
                                std::to_string(i));
        }
        double scaled = std::round(v[i] * scale);  // half away from zero
        if (scaled < lo) {
            scaled = lo;
            ++out.clamp_count;
        } else if (scaled > hi) {
            scaled = hi;
            ++out.clamp_count;
        }
        out.words[i] = static_cast<FixedWord>(scaled);
    }
    return out;
}

std::vector<double> fixed_to_float(std::span<const FixedWord> words, int z) {
    if (z < 0) throw ContractError("fixed_to_float: z must be >= 0");
    const double scale = pow10i(z);
    std::vector<double> out(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
        out[i] = static_cast<double>(words[i]) / scale;
    }
    return out;
}

std::uint32_t word_to_pattern(FixedWord value, int m) {
    check_width(m, "word_to_pattern");
    const std::uint32_t mask =
        (m == 32) ? 0xffffffffu : ((std::uint32_t{1} << m) - 1u);
    return static_cast<std::uint32_t>(value) & mask;
}

FixedWord pattern_to_word(std::uint32_t pattern, int m) {
    check_width(m, "pattern_to_word");
    if (m == 32) return static_cast<FixedWord>(pattern);
    const std::uint32_t sign_bit = std::uint32_t{1} << (m - 1);
    if (pattern & sign_bit) {
        return static_cast<FixedWord>(pattern | ~((std::uint32_t{1} << m) - 1u));
    }
    return static_cast<FixedWord>(pattern);
}

std::uint32_t flip_pattern(std::uint32_t pattern, std::span<const int> positions, int m,
                           double p, KeyedRng& rng) {
    check_width(m, "flip_pattern");
    for (int pos : positions) {
        const double u = rng.next_double();
        if (u >= p) pattern ^= std::uint32_t{1} << (m - 1 - pos);
    }
    return pattern;
}

FixedWord bit_flip(FixedWord word, const FlipMask& mask, KeyedRng& rng) {
    mask.validate();
    const std::uint32_t flipped =
        flip_pattern(word_to_pattern(word, mask.m), mask.positions, mask.m, mask.p, rng);
    return pattern_to_word(flipped, mask.m);
}

double epsilon_of(double p) {
    if (!(p > 0.5) || p > 1.0) {
        throw DomainError("epsilon_of: retain probability must satisfy 0.5 < p <= 1");
    }
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    return std::log(p / (1.0 - p));
}

double p_of_epsilon(double epsilon) {
    if (epsilon < 0.0 || std::isnan(epsilon)) {
        throw DomainError("p_of_epsilon: epsilon must be >= 0");
    }
    if (std::isinf(epsilon)) return 1.0;
    return 1.0 / (1.0 + std::exp(-epsilon));
}

}  // namespace cdpa
