#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cdpa {

// Scaled integer lattice: generator delta * I in `dim` dimensions. The
// covering radius is (delta/2) * sqrt(dim).
struct LatticeSpec {
    std::size_t dim = 1;
    double delta = 1e-4;

    void validate() const;
};

struct DitherDraw {
    std::uint64_t seed = 0;
    std::vector<double> values;  // each uniform in [-delta/2, delta/2)
};

// Componentwise nearest lattice point, ties rounding half away from zero.
std::vector<double> nearest_lattice_point(std::span<const double> x,
                                          const LatticeSpec& spec);

// Deterministic uniform dither over the basic cell.
DitherDraw sample_dither(std::uint64_t seed, std::size_t length, const LatticeSpec& spec);

// Quantize-dequantize with an explicit dither vector (length >= |v|):
// per subvector x of length dim, emits Q(x + d) - d.
std::vector<double> sdq_apply(std::span<const double> v, const LatticeSpec& spec,
                              std::span<const double> dither);

// Subtractive dithered quantization of a flat vector. The vector is split
// into ceil(|v|/dim) subvectors (zero-padded tail); output keeps the input
// length. Pure function of (v, spec, seed).
std::vector<double> sdq_quantize(std::span<const double> v, const LatticeSpec& spec,
                                 std::uint64_t seed);

}  // namespace cdpa
