#include "cdpa/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdpa/errors.hpp"
#include "cdpa/rng.hpp"

namespace cdpa {

RoundLayout layout_of(const Payload& payload) {
    RoundLayout layout;
    layout.reserve(payload.layers.size());
    for (const PayloadLayer& l : payload.layers) {
        layout.push_back({l.layer_id, static_cast<std::uint32_t>(l.words.size()), l.m, l.z,
                          l.mask_positions});
    }
    return layout;
}

RoundState::RoundState(RoundLayout layout, std::size_t expected_clients, std::uint32_t round)
    : layout_(std::move(layout)), expected_clients_(expected_clients), round_(round) {
    if (layout_.empty()) throw ConfigError("RoundState: empty layout");
    if (expected_clients_ < 1) throw ConfigError("RoundState: expected_clients must be >= 1");
    counters_.reserve(layout_.size());
    word_sums_.reserve(layout_.size());
    for (const LayerLayout& l : layout_) {
        counters_.emplace_back(static_cast<std::size_t>(l.param_count) * l.m, 0u);
        word_sums_.emplace_back(l.param_count, 0);
    }
}

RoundState new_round_state(RoundLayout layout, std::size_t expected_clients,
                           std::uint32_t round) {
    return RoundState(std::move(layout), expected_clients, round);
}

void RoundState::accumulate(const Payload& payload) {
    std::lock_guard<std::mutex> lock(mu_);
    if (payload.round != round_) {
        throw ContractError("accumulate: payload round " + std::to_string(payload.round) +
                            " does not match state round " + std::to_string(round_));
    }
    if (received_ >= expected_clients_) {
        throw ContractError("accumulate: round already has all " +
                            std::to_string(expected_clients_) + " payloads");
    }
    if (seen_clients_.count(payload.client_id)) {
        throw ContractError("accumulate: duplicate client_id " +
                            std::to_string(payload.client_id));
    }
    if (layout_of(payload) != layout_) {
        throw ContractError("accumulate: payload layout mismatch from client " +
                            std::to_string(payload.client_id));
    }

    for (std::size_t li = 0; li < layout_.size(); ++li) {
        const PayloadLayer& layer = payload.layers[li];
        const int m = layer.m;
        auto& counts = counters_[li];
        auto& sums = word_sums_[li];
        for (std::size_t w = 0; w < layer.words.size(); ++w) {
            const std::uint32_t pattern = word_to_pattern(layer.words[w], m);
            for (int pos = 0; pos < m; ++pos) {
                if (pattern & (std::uint32_t{1} << (m - 1 - pos))) {
                    ++counts[w * static_cast<std::size_t>(m) + static_cast<std::size_t>(pos)];
                }
            }
            sums[w] += layer.words[w];
        }
    }
    seen_clients_.insert(payload.client_id);
    ++received_;
}

bool RoundState::complete() const {
    std::lock_guard<std::mutex> lock(mu_);
    return received_ == expected_clients_;
}

std::size_t RoundState::clients_received() const {
    std::lock_guard<std::mutex> lock(mu_);
    return received_;
}

std::uint32_t RoundState::bit_counter(std::size_t layer, std::size_t word, int position) const {
    std::lock_guard<std::mutex> lock(mu_);
    return counters_[layer][word * layout_[layer].m + static_cast<std::size_t>(position)];
}

std::vector<std::vector<std::uint8_t>> RoundState::recover(double p, double threshold) const {
    std::lock_guard<std::mutex> lock(mu_);
    if (received_ != expected_clients_) {
        throw ContractError("recover: round not complete (" + std::to_string(received_) +
                            " of " + std::to_string(expected_clients_) + " payloads)");
    }
    if (!(p > 0.5) || p > 1.0) {
        throw DomainError("recover: retain probability must satisfy 0.5 < p <= 1");
    }
    const double r_clients = static_cast<double>(expected_clients_);

    std::vector<std::vector<std::uint8_t>> bits;
    bits.reserve(layout_.size());
    for (std::size_t li = 0; li < layout_.size(); ++li) {
        const LayerLayout& layer = layout_[li];
        const int m = layer.m;
        std::vector<bool> masked(static_cast<std::size_t>(m), false);
        for (int pos : layer.mask_positions) masked[static_cast<std::size_t>(pos)] = true;

        std::vector<std::uint8_t> layer_bits(counters_[li].size());
        for (std::size_t w = 0; w < layer.param_count; ++w) {
            for (int pos = 0; pos < m; ++pos) {
                const std::size_t idx = w * static_cast<std::size_t>(m) +
                                        static_cast<std::size_t>(pos);
                // Never-flipped positions scale by 1/R; scaling them by
                // 1/(R*p) would bias them toward 1.
                const double scale = masked[static_cast<std::size_t>(pos)]
                                         ? r_clients * p
                                         : r_clients;
                const double ratio = static_cast<double>(counters_[li][idx]) / scale;
                layer_bits[idx] = ratio < threshold ? 0 : 1;
            }
        }
        bits.push_back(std::move(layer_bits));
    }
    return bits;
}

std::vector<std::vector<double>> RoundState::mean_decoded() const {
    std::lock_guard<std::mutex> lock(mu_);
    if (received_ != expected_clients_) {
        throw ContractError("mean_decoded: round not complete");
    }
    std::vector<std::vector<double>> out;
    out.reserve(layout_.size());
    for (std::size_t li = 0; li < layout_.size(); ++li) {
        const double denom = static_cast<double>(expected_clients_) *
                             std::pow(10.0, layout_[li].z);
        std::vector<double> layer(word_sums_[li].size());
        for (std::size_t w = 0; w < layer.size(); ++w) {
            layer[w] = static_cast<double>(word_sums_[li][w]) / denom;
        }
        out.push_back(std::move(layer));
    }
    return out;
}

GradientSet decode_global(const std::vector<std::vector<std::uint8_t>>& bits,
                          const RoundLayout& layout,
                          const std::vector<std::string>& layer_names) {
    if (bits.size() != layout.size() || layer_names.size() != layout.size()) {
        throw ContractError("decode_global: bits/layout/name count mismatch");
    }
    GradientSet out;
    for (std::size_t li = 0; li < layout.size(); ++li) {
        const LayerLayout& layer = layout[li];
        const int m = layer.m;
        if (bits[li].size() != static_cast<std::size_t>(layer.param_count) * m) {
            throw ContractError("decode_global: bit array size mismatch at layer " +
                                std::to_string(layer.layer_id));
        }
        std::vector<FixedWord> words(layer.param_count);
        for (std::size_t w = 0; w < layer.param_count; ++w) {
            std::uint32_t pattern = 0;
            for (int pos = 0; pos < m; ++pos) {
                pattern = (pattern << 1) |
                          bits[li][w * static_cast<std::size_t>(m) + static_cast<std::size_t>(pos)];
            }
            words[w] = pattern_to_word(pattern, m);
        }
        out.layers.emplace_back(layer_names[li], fixed_to_float(words, layer.z));
    }
    return out;
}

namespace {

void check_layouts(std::span<const GradientSet> sets, const char* where) {
    if (sets.empty()) throw ContractError(std::string(where) + ": no gradient sets");
    for (std::size_t i = 1; i < sets.size(); ++i) {
        if (!sets[i].same_layout(sets[0])) {
            throw ContractError(std::string(where) + ": layout mismatch at set " +
                                std::to_string(i));
        }
    }
}

}  // namespace

GradientSet fedavg(std::span<const GradientSet> sets) {
    check_layouts(sets, "fedavg");
    GradientSet out = sets[0];
    for (std::size_t s = 1; s < sets.size(); ++s) {
        for (std::size_t li = 0; li < out.layers.size(); ++li) {
            auto& acc = out.layers[li].second;
            const auto& v = sets[s].layers[li].second;
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
        }
    }
    const double inv = 1.0 / static_cast<double>(sets.size());
    for (auto& [name, values] : out.layers) {
        for (double& v : values) v *= inv;
    }
    return out;
}

GradientSet ldp_aggregate(std::span<const GradientSet> sets, double epsilon, double clip,
                          std::uint64_t seed) {
    if (!(epsilon > 0.0)) throw ConfigError("ldp_aggregate: epsilon must be positive");
    if (!(clip > 0.0)) throw ConfigError("ldp_aggregate: clip must be positive");
    check_layouts(sets, "ldp_aggregate");

    const double scale = 2.0 * clip / epsilon;
    std::vector<GradientSet> noisy(sets.begin(), sets.end());
    for (std::size_t s = 0; s < noisy.size(); ++s) {
        KeyedRng rng = KeyedRng::from({seed, stream::ldp, static_cast<std::uint64_t>(s)});
        for (auto& [name, values] : noisy[s].layers) {
            for (double& v : values) {
                v = std::clamp(v, -clip, clip) + rng.next_laplace(scale);
            }
        }
    }
    return fedavg(noisy);
}

GradientSet signsgd_aggregate(std::span<const GradientSet> sets) {
    check_layouts(sets, "signsgd_aggregate");
    GradientSet out = sets[0];
    for (std::size_t li = 0; li < out.layers.size(); ++li) {
        auto& acc = out.layers[li].second;
        for (std::size_t i = 0; i < acc.size(); ++i) {
            int votes = 0;
            for (const GradientSet& g : sets) {
                votes += g.layers[li].second[i] < 0.0 ? -1 : 1;
            }
            acc[i] = votes < 0 ? -1.0 : 1.0;
        }
    }
    return out;
}

GradientSet graddrop_filter(const GradientSet& g, double drop_fraction) {
    if (drop_fraction < 0.0 || drop_fraction >= 1.0) {
        throw ConfigError("graddrop_filter: drop_fraction must be in [0, 1)");
    }
    const std::size_t n = g.total_size();
    const std::size_t drop = n - static_cast<std::size_t>(
        std::ceil((1.0 - drop_fraction) * static_cast<double>(n)));
    if (drop == 0) return g;

    // (|value|, layout index) pairs; stable sort keeps layout order on ties.
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(n);
    std::size_t flat = 0;
    for (const auto& [name, values] : g.layers) {
        for (double v : values) order.emplace_back(std::fabs(v), flat++);
    }
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<bool> zeroed(n, false);
    for (std::size_t i = 0; i < drop; ++i) zeroed[order[i].second] = true;

    GradientSet out = g;
    flat = 0;
    for (auto& [name, values] : out.layers) {
        for (double& v : values) {
            if (zeroed[flat++]) v = 0.0;
        }
    }
    return out;
}

AggregatorMode aggregator_mode_from_string(const std::string& s) {
    if (s == "cdpa") return AggregatorMode::Cdpa;
    if (s == "fedavg") return AggregatorMode::Fedavg;
    if (s == "ldp") return AggregatorMode::Ldp;
    if (s == "signsgd") return AggregatorMode::Signsgd;
    if (s == "graddrop") return AggregatorMode::Graddrop;
    throw ConfigError("unknown aggregator mode: '" + s + "'");
}

std::string to_string(AggregatorMode m) {
    switch (m) {
        case AggregatorMode::Cdpa: return "cdpa";
        case AggregatorMode::Fedavg: return "fedavg";
        case AggregatorMode::Ldp: return "ldp";
        case AggregatorMode::Signsgd: return "signsgd";
        case AggregatorMode::Graddrop: return "graddrop";
    }
    return "?";
}

bool LayerSelection::selects(const std::string& layer_name, bool is_last) const {
    switch (kind) {
        case Kind::All: return true;
        case Kind::LastLayer: return is_last;
        case Kind::Named:
            return std::find(names.begin(), names.end(), layer_name) != names.end();
    }
    return false;
}

void AggregatorConfig::validate() const {
    if (mode == AggregatorMode::Cdpa) {
        if (!(p > 0.5) || p > 1.0) {
            throw ConfigError("aggregator: cdpa retain probability must satisfy 0.5 < p <= 1");
        }
        if (!(threshold > 0.0) || threshold >= 1.0) {
            throw ConfigError("aggregator: recover threshold must be in (0, 1)");
        }
    }
    if (mode == AggregatorMode::Ldp) {
        if (!(epsilon > 0.0)) throw ConfigError("aggregator: ldp epsilon must be positive");
        if (!(clip > 0.0)) throw ConfigError("aggregator: ldp clip must be positive");
    }
    if (mode == AggregatorMode::Graddrop) {
        if (drop_fraction < 0.0 || drop_fraction >= 1.0) {
            throw ConfigError("aggregator: drop_fraction must be in [0, 1)");
        }
    }
}

}  // namespace cdpa
