#include "cdpa/lattice.hpp"

#include <cmath>

#include "cdpa/errors.hpp"
#include "cdpa/rng.hpp"

namespace cdpa {

void LatticeSpec::validate() const {
    if (dim < 1) throw ConfigError("LatticeSpec: dim must be >= 1");
    if (!(delta > 0.0) || !std::isfinite(delta)) {
        throw ConfigError("LatticeSpec: delta must be positive and finite");
    }
}

std::vector<double> nearest_lattice_point(std::span<const double> x,
                                          const LatticeSpec& spec) {
    spec.validate();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        // std::round rounds halfway cases away from zero.
        out[i] = spec.delta * std::round(x[i] / spec.delta);
    }
    return out;
}

DitherDraw sample_dither(std::uint64_t seed, std::size_t length, const LatticeSpec& spec) {
    spec.validate();
    if (length < 1) throw ConfigError("sample_dither: length must be >= 1");
    DitherDraw draw;
    draw.seed = seed;
    draw.values.resize(length);
    KeyedRng rng = KeyedRng::from({seed, stream::dither});
    const double half = spec.delta / 2.0;
    for (double& v : draw.values) v = rng.next_uniform(-half, half);
    return draw;
}

std::vector<double> sdq_apply(std::span<const double> v, const LatticeSpec& spec,
                              std::span<const double> dither) {
    spec.validate();
    if (dither.size() < v.size()) throw ContractError("sdq_apply: dither too short");
    const std::size_t L = spec.dim;
    const std::size_t blocks = (v.size() + L - 1) / L;
    std::vector<double> out(v.size());
    std::vector<double> sub(L);
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t begin = b * L;
        const std::size_t count = std::min(L, v.size() - begin);
        for (std::size_t i = 0; i < L; ++i) {
            const double x = (i < count) ? v[begin + i] : 0.0;  // zero-padded tail
            const double d = (i < count) ? dither[begin + i] : 0.0;
            sub[i] = spec.delta * std::round((x + d) / spec.delta) - d;
        }
        for (std::size_t i = 0; i < count; ++i) out[begin + i] = sub[i];
    }
    return out;
}

std::vector<double> sdq_quantize(std::span<const double> v, const LatticeSpec& spec,
                                 std::uint64_t seed) {
    if (v.empty()) return {};
    const DitherDraw d = sample_dither(seed, v.size(), spec);
    return sdq_apply(v, spec, d.values);
}

}  // namespace cdpa
