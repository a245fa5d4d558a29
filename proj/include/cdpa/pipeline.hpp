#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "cdpa/codec.hpp"
#include "cdpa/lattice.hpp"
#include "cdpa/payload.hpp"

namespace cdpa {

// Client-side encoding configuration: quantize -> fixed point -> masked
// bit flips. Shared by the federated harness and the inversion probe.
struct ClientPipeline {
    FlipMask mask;
    LatticeSpec lattice;
    bool quantize = true;
    bool dither = true;

    void validate() const;
};

// Encodes one layer's flat gradient values. Flips apply only when `selected`;
// unselected layers still travel as quantized fixed-point words with an empty
// mask bitmap. clamp_count accumulates saturation events.
PayloadLayer encode_layer(std::span<const double> values, const ClientPipeline& pipeline,
                          bool selected, std::uint16_t layer_id,
                          std::uint64_t dither_seed, std::uint64_t flip_key,
                          std::size_t& clamp_count);

}  // namespace cdpa
