#include "cdpa/payload.hpp"

#include <limits>
#include <string>

#include "cdpa/errors.hpp"

namespace cdpa {

namespace {

constexpr std::uint8_t kMagic[4] = {'C', 'D', 'P', 'A'};
constexpr std::uint8_t kVersion = 1;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const { return offset_; }

    void need(std::size_t n, const char* what) const {
        if (offset_ + n > bytes_.size()) {
            throw ParseError(std::string("unpack_payload: truncated ") + what +
                             " at offset " + std::to_string(offset_) + " (expected " +
                             std::to_string(n) + " bytes, got " +
                             std::to_string(bytes_.size() - offset_) + ")");
        }
    }

    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes_[offset_++];
    }

    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(bytes_[offset_]) |
                          static_cast<std::uint16_t>(bytes_[offset_ + 1]) << 8;
        offset_ += 2;
        return v;
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[offset_ + i]) << (8 * i);
        offset_ += 4;
        return v;
    }

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.subspan(offset_, n);
        offset_ += n;
        return s;
    }

    bool done() const { return offset_ == bytes_.size(); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t offset_ = 0;
};

// Append the low m bits of pattern MSB-first to a bitstream.
class BitWriter {
public:
    explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}

    void append(std::uint32_t pattern, int m) {
        for (int i = m - 1; i >= 0; --i) push_bit((pattern >> i) & 1u);
    }

    void pad_to_byte() {
        while (fill_ != 0) push_bit(0);
    }

private:
    void push_bit(std::uint32_t b) {
        if (fill_ == 0) out_.push_back(0);
        out_.back() = static_cast<std::uint8_t>(out_.back() | (b << (7 - fill_)));
        fill_ = (fill_ + 1) % 8;
    }

    std::vector<std::uint8_t>& out_;
    int fill_ = 0;
};

class BitReader {
public:
    explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint32_t read(int m) {
        std::uint32_t v = 0;
        for (int i = 0; i < m; ++i) {
            const std::size_t byte = pos_ >> 3;
            const int bit = 7 - static_cast<int>(pos_ & 7);
            v = (v << 1) | ((bytes_[byte] >> bit) & 1u);
            ++pos_;
        }
        return v;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> pack_payload(const Payload& payload) {
    if (payload.layers.size() > std::numeric_limits<std::uint16_t>::max()) {
        throw ConfigError("pack_payload: too many layers");
    }
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kVersion);
    put_u32(out, payload.round);
    put_u32(out, payload.client_id);
    put_u16(out, static_cast<std::uint16_t>(payload.layers.size()));

    for (const PayloadLayer& layer : payload.layers) {
        const int m = layer.m;
        if (m < kMinWordBits || m > kMaxWordBits) {
            throw ConfigError("pack_payload: layer " + std::to_string(layer.layer_id) +
                              " has invalid word width " + std::to_string(m));
        }
        if (layer.words.size() > std::numeric_limits<std::uint32_t>::max()) {
            throw ConfigError("pack_payload: param count overflow");
        }
        put_u16(out, layer.layer_id);
        put_u32(out, static_cast<std::uint32_t>(layer.words.size()));
        out.push_back(layer.m);
        out.push_back(layer.z);

        std::vector<std::uint8_t> bitmap((m + 7) / 8, 0);
        for (int pos : layer.mask_positions) {
            if (pos < 0 || pos >= m) {
                throw ConfigError("pack_payload: mask position " + std::to_string(pos) +
                                  " outside word width");
            }
            bitmap[pos >> 3] = static_cast<std::uint8_t>(bitmap[pos >> 3] | (1u << (pos & 7)));
        }
        out.insert(out.end(), bitmap.begin(), bitmap.end());

        BitWriter writer(out);
        for (FixedWord w : layer.words) writer.append(word_to_pattern(w, m), m);
        writer.pad_to_byte();
    }
    return out;
}

Payload unpack_payload(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    r.need(4, "magic");
    for (int i = 0; i < 4; ++i) {
        if (bytes[i] != kMagic[i]) {
            throw ParseError("unpack_payload: bad magic at offset 0");
        }
    }
    r.take(4, "magic");
    const std::uint8_t version = r.u8("version");
    if (version != kVersion) {
        throw ParseError("unpack_payload: unsupported version " + std::to_string(version) +
                         " at offset 4 (expected " + std::to_string(kVersion) + ")");
    }

    Payload payload;
    payload.round = r.u32("round");
    payload.client_id = r.u32("client_id");
    const std::uint16_t layer_count = r.u16("layer_count");

    payload.layers.reserve(layer_count);
    for (std::uint16_t li = 0; li < layer_count; ++li) {
        PayloadLayer layer;
        layer.layer_id = r.u16("layer_id");
        const std::uint32_t param_count = r.u32("param_count");
        layer.m = r.u8("word width");
        layer.z = r.u8("scale exponent");
        const int m = layer.m;
        if (m < kMinWordBits || m > kMaxWordBits) {
            throw ParseError("unpack_payload: invalid word width " + std::to_string(m) +
                             " at offset " + std::to_string(r.offset() - 2));
        }
        const auto bitmap = r.take(static_cast<std::size_t>((m + 7) / 8), "mask bitmap");
        for (int pos = 0; pos < m; ++pos) {
            if (bitmap[pos >> 3] & (1u << (pos & 7))) layer.mask_positions.push_back(pos);
        }
        const std::size_t body_bytes =
            (static_cast<std::size_t>(param_count) * static_cast<std::size_t>(m) + 7) / 8;
        const auto body = r.take(body_bytes, "packed words");
        BitReader bits(body);
        layer.words.resize(param_count);
        for (std::uint32_t i = 0; i < param_count; ++i) {
            layer.words[i] = pattern_to_word(bits.read(m), m);
        }
        payload.layers.push_back(std::move(layer));
    }
    if (!r.done()) {
        throw ParseError("unpack_payload: " +
                         std::to_string(bytes.size() - r.offset()) +
                         " trailing bytes at offset " + std::to_string(r.offset()));
    }
    return payload;
}

}  // namespace cdpa
