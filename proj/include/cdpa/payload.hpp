#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cdpa/codec.hpp"

namespace cdpa {

struct PayloadLayer {
    std::uint16_t layer_id = 0;
    std::uint8_t m = 16;
    std::uint8_t z = 4;
    std::vector<int> mask_positions;  // 0-based from MSB, sorted
    std::vector<FixedWord> words;

    std::size_t param_count() const { return words.size(); }
};

// One client's round message: header plus packed fixed-point words per layer.
struct Payload {
    std::uint32_t round = 0;
    std::uint32_t client_id = 0;
    std::vector<PayloadLayer> layers;
};

// Bit-exact wire format:
//   magic "CDPA" | version u8 (=1) | round u32le | client_id u32le |
//   layer_count u16le, then per layer:
//   layer_id u16le | param_count u32le | m u8 | z u8 |
//   mask bitmap ceil(m/8) bytes (mask position i -> byte i>>3, bit i&7) |
//   words as a contiguous MSB-first bitstream, zero-padded to a byte boundary.
std::vector<std::uint8_t> pack_payload(const Payload& payload);

Payload unpack_payload(std::span<const std::uint8_t> bytes);

}  // namespace cdpa
