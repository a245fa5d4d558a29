#include "cdpa/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdpa/aggregator.hpp"
#include "cdpa/errors.hpp"
#include "cdpa/rng.hpp"

namespace cdpa {

namespace {

void check_prob(double p, const char* where) {
    if (!(p >= 0.5) || p > 1.0) {
        throw DomainError(std::string(where) + ": p must be in [0.5, 1]");
    }
}

void check_mask_shape(const FlipMask& mask, const char* where) {
    if (mask.m < kMinWordBits || mask.m > kMaxWordBits) {
        throw DomainError(std::string(where) + ": word width must be in [8, 32]");
    }
    if (mask.z < 0) throw DomainError(std::string(where) + ": z must be >= 0");
    for (int pos : mask.positions) {
        if (pos < 0 || pos >= mask.m) {
            throw DomainError(std::string(where) + ": mask position outside word");
        }
    }
}

double toggle_magnitude(int position, int m, int z) {
    return std::ldexp(1.0, m - 1 - position) / std::pow(10.0, z);
}

}  // namespace

double recovery_success_prob(std::size_t clients, double p) {
    if (clients < 1 || clients > 10000) {
        throw DomainError("recovery_success_prob: clients must be in [1, 10000]");
    }
    check_prob(p, "recovery_success_prob");
    if (p == 1.0) return 1.0;

    const auto r = static_cast<double>(clients);
    const double log_p = std::log(p);
    const double log_q = std::log1p(-p);
    const std::size_t lo = (clients + 1) / 2;  // ceil(R/2)
    double sum = 0.0;
    for (std::size_t i = lo; i <= clients; ++i) {
        const auto k = static_cast<double>(i);
        const double log_choose =
            std::lgamma(r + 1.0) - std::lgamma(k + 1.0) - std::lgamma(r - k + 1.0);
        sum += std::exp(log_choose + k * log_p + (r - k) * log_q);
    }
    return std::min(sum, 1.0);
}

double expected_flip_error(std::size_t clients, double p, const FlipMask& mask) {
    check_mask_shape(mask, "expected_flip_error");
    const double miss = 1.0 - recovery_success_prob(clients, p);
    double total = 0.0;
    for (int pos : mask.positions) {
        total += toggle_magnitude(pos, mask.m, mask.z) * miss;
    }
    return total;
}

RecoveryErrorReport monte_carlo_recovery_error(std::size_t clients, double p,
                                               const FlipMask& mask, std::size_t trials,
                                               std::uint64_t seed) {
    if (trials < 1000) {
        throw DomainError("monte_carlo_recovery_error: need at least 1000 trials");
    }
    check_prob(p, "monte_carlo_recovery_error");
    check_mask_shape(mask, "monte_carlo_recovery_error");

    const int m = mask.m;
    const std::size_t R = clients;
    const std::size_t majority = (R + 1) / 2;  // ceil(R/2)
    const double word_mask_bits = static_cast<double>(mask.positions.size());

    RecoveryErrorReport report;
    report.clients = clients;
    report.p = p;
    report.trials = trials;
    report.p_gamma2_closed = recovery_success_prob(clients, p);
    report.expected_error = expected_flip_error(clients, p, mask);

    std::size_t consistent = 0;
    std::size_t polarity_one = 0, polarity_zero = 0;
    std::size_t mech_one_ok = 0, mech_zero_ok = 0;
    double err_sum = 0.0, err_sq_sum = 0.0, mech_err_sum = 0.0;
    std::vector<std::uint32_t> counts(mask.positions.size());

    for (std::size_t t = 0; t < trials; ++t) {
        KeyedRng word_rng = KeyedRng::from({seed, stream::mc_word, t});
        const std::uint32_t original =
            word_to_pattern(static_cast<FixedWord>(word_rng.next_u64()), m);

        std::fill(counts.begin(), counts.end(), 0u);
        for (std::size_t r = 0; r < R; ++r) {
            KeyedRng flip_rng = KeyedRng::from({seed, stream::mc_flip, t, r});
            const std::uint32_t sent =
                flip_pattern(original, mask.positions, m, p, flip_rng);
            for (std::size_t pi = 0; pi < mask.positions.size(); ++pi) {
                if (sent & (std::uint32_t{1} << (m - 1 - mask.positions[pi]))) ++counts[pi];
            }
        }

        std::uint32_t maj_word = original;
        std::uint32_t mech_word = original;
        for (std::size_t pi = 0; pi < mask.positions.size(); ++pi) {
            const int pos = mask.positions[pi];
            const std::uint32_t bit_mask = std::uint32_t{1} << (m - 1 - pos);
            const bool orig_bit = (original & bit_mask) != 0;
            const std::uint32_t c = counts[pi];
            const std::uint32_t transmitted_original = orig_bit ? c : static_cast<std::uint32_t>(R) - c;
            // Majority of transmissions kept the bit, ties counting as
            // success regardless of polarity.
            const bool kept = transmitted_original >= majority;
            if (kept) ++consistent;

            const bool mech_bit =
                static_cast<double>(c) / (static_cast<double>(R) * p) >= 0.5;
            if (!kept) maj_word ^= bit_mask;
            if (mech_bit != orig_bit) mech_word ^= bit_mask;
            if (orig_bit) {
                ++polarity_one;
                if (mech_bit) ++mech_one_ok;
            } else {
                ++polarity_zero;
                if (!mech_bit) ++mech_zero_ok;
            }
        }

        const double scale = std::pow(10.0, mask.z);
        const double orig_value = static_cast<double>(pattern_to_word(original, m)) / scale;
        const double maj_value = static_cast<double>(pattern_to_word(maj_word, m)) / scale;
        const double mech_value = static_cast<double>(pattern_to_word(mech_word, m)) / scale;
        const double err = std::fabs(maj_value - orig_value);
        err_sum += err;
        err_sq_sum += err * err;
        mech_err_sum += std::fabs(mech_value - orig_value);
    }

    const auto n = static_cast<double>(trials);
    report.p_gamma2_empirical =
        word_mask_bits > 0 ? static_cast<double>(consistent) / (n * word_mask_bits) : 1.0;
    report.empirical_error = err_sum / n;
    report.mech_error = mech_err_sum / n;
    const double var = std::max(0.0, err_sq_sum / n - report.empirical_error * report.empirical_error);
    report.ci_halfwidth = 3.0 * std::sqrt(var / n);
    report.mech_agree_one =
        polarity_one ? static_cast<double>(mech_one_ok) / static_cast<double>(polarity_one) : 1.0;
    report.mech_agree_zero =
        polarity_zero ? static_cast<double>(mech_zero_ok) / static_cast<double>(polarity_zero) : 1.0;
    return report;
}

CostReport comm_cost(const Payload& payload, std::size_t baseline_bits_per_param) {
    CostReport report;
    report.bits_per_client_per_round = pack_payload(payload).size() * 8;
    std::size_t params = 0;
    for (const PayloadLayer& l : payload.layers) params += l.words.size();
    report.baseline_bits = params * baseline_bits_per_param;
    report.reduction_fraction =
        report.baseline_bits == 0
            ? 0.0
            : 1.0 - static_cast<double>(report.bits_per_client_per_round) /
                        static_cast<double>(report.baseline_bits);
    return report;
}

double carbon_estimate(double wall_ms, double kg_per_hour) {
    if (wall_ms < 0.0 || kg_per_hour < 0.0) {
        throw DomainError("carbon_estimate: inputs must be non-negative");
    }
    return (wall_ms / 3'600'000.0) * kg_per_hour;
}

namespace {

// x_j = dW[c][j] / db[c] for the output row with the largest |db|.
std::vector<double> reconstruct_input(const std::vector<double>& layer_grad,
                                      std::size_t out_dim, std::size_t in_dim) {
    const std::size_t wsize = out_dim * in_dim;
    std::size_t best = 0;
    double best_abs = -1.0;
    for (std::size_t c = 0; c < out_dim; ++c) {
        const double b = std::fabs(layer_grad[wsize + c]);
        if (b > best_abs) {
            best_abs = b;
            best = c;
        }
    }
    std::vector<double> x(in_dim, 0.0);
    const double denom = layer_grad[wsize + best];
    if (denom == 0.0) return x;
    for (std::size_t j = 0; j < in_dim; ++j) x[j] = layer_grad[best * in_dim + j] / denom;
    return x;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double mse(const std::vector<double>& a, const std::vector<double>& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.size());
}

}  // namespace

ProbeResult inversion_probe(const Model& model, const Dataset& sample,
                            const ClientPipeline& pipeline, std::uint64_t seed) {
    if (model.kind == ModelKind::Mlp) {
        throw ContractError("inversion_probe: only linear and logistic models supported");
    }
    if (sample.n_examples != 1) {
        throw ContractError("inversion_probe: sample must hold exactly one example");
    }

    const auto [grads, loss] = compute_gradient(model, sample);
    (void)loss;
    const std::vector<double>& g = grads.layers[0].second;
    const std::size_t out_dim = model.output_dim;
    const std::size_t in_dim = model.feature_dim;

    const std::vector<double> truth(sample.features.begin(), sample.features.end());
    const std::vector<double> x_plain = reconstruct_input(g, out_dim, in_dim);

    // Transmit through the client pipeline and a single-client round.
    std::size_t clamps = 0;
    Payload payload;
    payload.round = 0;
    payload.client_id = 0;
    payload.layers.push_back(encode_layer(
        g, pipeline, /*selected=*/true, /*layer_id=*/0,
        key_hash({seed, stream::dither, 0}), key_hash({seed, stream::flip, 0}), clamps));

    RoundState state(layout_of(payload), 1, 0);
    state.accumulate(unpack_payload(pack_payload(payload)));
    const GradientSet decoded =
        decode_global(state.recover(pipeline.mask.p), state.layout(), {grads.layers[0].first});
    const std::vector<double> x_cdpa =
        reconstruct_input(decoded.layers[0].second, out_dim, in_dim);

    ProbeResult result;
    result.cosine_plain = cosine(x_plain, truth);
    result.cosine_cdpa = cosine(x_cdpa, truth);
    result.mse_plain = mse(x_plain, truth);
    result.mse_cdpa = mse(x_cdpa, truth);
    return result;
}

}  // namespace cdpa
