#include "cdpa/pipeline.hpp"

#include <vector>

#include "cdpa/errors.hpp"

namespace cdpa {

void ClientPipeline::validate() const {
    mask.validate();
    lattice.validate();
}

PayloadLayer encode_layer(std::span<const double> values, const ClientPipeline& pipeline,
                          bool selected, std::uint16_t layer_id,
                          std::uint64_t dither_seed, std::uint64_t flip_key,
                          std::size_t& clamp_count) {
    pipeline.validate();
    const FlipMask& mask = pipeline.mask;

    std::vector<double> quantized;
    std::span<const double> to_encode = values;
    if (pipeline.quantize) {
        if (pipeline.dither) {
            quantized = sdq_quantize(values, pipeline.lattice, dither_seed);
        } else {
            const std::vector<double> zero(values.size(), 0.0);
            quantized = sdq_apply(values, pipeline.lattice, zero);
        }
        to_encode = quantized;
    }

    FixedEncodeResult encoded = float_to_fixed(to_encode, mask.z, mask.m);
    clamp_count += encoded.clamp_count;

    PayloadLayer layer;
    layer.layer_id = layer_id;
    layer.m = static_cast<std::uint8_t>(mask.m);
    layer.z = static_cast<std::uint8_t>(mask.z);
    if (selected && !mask.positions.empty()) {
        layer.mask_positions = mask.positions;
        for (std::size_t w = 0; w < encoded.words.size(); ++w) {
            KeyedRng rng = KeyedRng::from({flip_key, static_cast<std::uint64_t>(w)});
            encoded.words[w] = bit_flip(encoded.words[w], mask, rng);
        }
    }
    layer.words = std::move(encoded.words);
    return layer;
}

}  // namespace cdpa
