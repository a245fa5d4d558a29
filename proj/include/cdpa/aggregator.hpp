#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cdpa/model.hpp"
#include "cdpa/payload.hpp"

namespace cdpa {

// Shape of one layer within a round, agreed between every client payload
// and the server before accumulation starts.
struct LayerLayout {
    std::uint16_t layer_id = 0;
    std::uint32_t param_count = 0;
    std::uint8_t m = 16;
    std::uint8_t z = 4;
    std::vector<int> mask_positions;

    bool operator==(const LayerLayout&) const = default;
};

using RoundLayout = std::vector<LayerLayout>;

RoundLayout layout_of(const Payload& payload);

// Server-side per-bit-position accumulation. Counting 1-bits is commutative,
// so the final state is independent of arrival order; accumulate is safe to
// call from concurrent client workers.
class RoundState {
public:
    RoundState(RoundLayout layout, std::size_t expected_clients, std::uint32_t round);

    void accumulate(const Payload& payload);

    bool complete() const;
    std::size_t clients_received() const;
    std::size_t expected_clients() const { return expected_clients_; }
    const RoundLayout& layout() const { return layout_; }
    std::uint32_t round() const { return round_; }

    // 1-bit count at (layer, word, bit position from MSB).
    std::uint32_t bit_counter(std::size_t layer, std::size_t word, int position) const;

    // Per-layer recovered bits (param_count * m entries each, MSB-first per
    // word). Masked positions threshold count/(R*p), unmasked count/R; a
    // ratio equal to the threshold resolves to 1.
    std::vector<std::vector<std::uint8_t>> recover(double p, double threshold = 0.5) const;

    // Exact per-coordinate mean of the decoded client words (integer-sum
    // based, order independent). Reference oracle for the bitwise path.
    std::vector<std::vector<double>> mean_decoded() const;

private:
    RoundLayout layout_;
    std::size_t expected_clients_;
    std::uint32_t round_;
    std::vector<std::vector<std::uint32_t>> counters_;    // per layer: param*m
    std::vector<std::vector<std::int64_t>> word_sums_;    // per layer: param
    std::set<std::uint32_t> seen_clients_;
    std::size_t received_ = 0;
    mutable std::mutex mu_;
};

RoundState new_round_state(RoundLayout layout, std::size_t expected_clients,
                           std::uint32_t round = 0);

// Reassembles recovered bits into words and divides by 10^z. Layer names
// give the GradientSet keys, in layout order.
GradientSet decode_global(const std::vector<std::vector<std::uint8_t>>& bits,
                          const RoundLayout& layout,
                          const std::vector<std::string>& layer_names);

// Coordinatewise arithmetic mean over identically laid out gradient sets.
GradientSet fedavg(std::span<const GradientSet> sets);

// Per-client clip to [-clip, clip] plus Laplace noise of scale 2*clip/epsilon
// on every coordinate, then fedavg.
GradientSet ldp_aggregate(std::span<const GradientSet> sets, double epsilon, double clip,
                          std::uint64_t seed);

// Majority sign per coordinate; zero counts as +1, ties resolve to +1.
GradientSet signsgd_aggregate(std::span<const GradientSet> sets);

// Zeroes the drop_fraction smallest-magnitude coordinates across the whole
// set; ties broken by layout order (earlier coordinates dropped first).
GradientSet graddrop_filter(const GradientSet& g, double drop_fraction);

enum class AggregatorMode { Cdpa, Fedavg, Ldp, Signsgd, Graddrop };

AggregatorMode aggregator_mode_from_string(const std::string& s);
std::string to_string(AggregatorMode m);

// Which layers go through the bitwise flip/recover path.
struct LayerSelection {
    enum class Kind { All, LastLayer, Named };
    Kind kind = Kind::LastLayer;
    std::vector<std::string> names;  // Named only

    bool selects(const std::string& layer_name, bool is_last) const;
};

struct AggregatorConfig {
    AggregatorMode mode = AggregatorMode::Cdpa;
    double p = 0.98;
    double epsilon = 4.0;       // ldp budget
    double clip = 1.0;          // ldp clip bound
    double drop_fraction = 0.6; // graddrop
    double threshold = 0.5;     // bit recover threshold T
    LayerSelection layer_selection;

    void validate() const;
};

}  // namespace cdpa
