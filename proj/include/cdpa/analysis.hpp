#pragma once

#include <cstddef>
#include <cstdint>

#include "cdpa/codec.hpp"
#include "cdpa/dataset.hpp"
#include "cdpa/model.hpp"
#include "cdpa/payload.hpp"
#include "cdpa/pipeline.hpp"

namespace cdpa {

// Probability that at least ceil(R/2) of R independent Bernoulli(p) bit
// transmissions arrive unflipped (ties counting as success): the chance the
// recovered bit stays consistent with the unanimous no-flip value. Computed
// in log space; valid for clients up to 1e4 and p in [0.5, 1].
double recovery_success_prob(std::size_t clients, double p);

// Residual error estimate for a masked word: sum over masked positions of
// 2^(m-1-i)/10^z * (1 - recovery_success_prob). The multi-position form sums
// the single-bit estimate independently per position.
double expected_flip_error(std::size_t clients, double p, const FlipMask& mask);

struct RecoveryErrorReport {
    std::size_t clients = 0;
    double p = 1.0;
    std::size_t trials = 0;
    double p_gamma2_closed = 1.0;
    // Fraction of masked-bit transmissions whose majority kept the original
    // value, ties counting as success; the event the closed form computes.
    double p_gamma2_empirical = 1.0;
    double expected_error = 0.0;  // closed-form gamma2+gamma3 estimate
    // Mean |decoded - original| when each masked bit follows its transmitted
    // majority (ties kept).
    double empirical_error = 0.0;
    double ci_halfwidth = 0.0;  // 3 sigma on empirical_error
    // Diagnostics for the production threshold count/(R*p): agreement split
    // by the original bit's polarity, and the corresponding word error.
    double mech_agree_one = 1.0;
    double mech_agree_zero = 1.0;
    double mech_error = 0.0;
};

// Simulates `trials` rounds of R clients transmitting one identical random
// word through bit_flip -> positional accumulation -> recovery. The headline
// p_gamma2/error fields use majority recovery (the event the closed form
// models); the mech_* fields use the count/(R*p) threshold.
RecoveryErrorReport monte_carlo_recovery_error(std::size_t clients, double p,
                                               const FlipMask& mask, std::size_t trials,
                                               std::uint64_t seed);

struct CostReport {
    std::size_t bits_per_client_per_round = 0;
    std::size_t baseline_bits = 0;
    double reduction_fraction = 0.0;
    double wall_ms_per_round = 0.0;
    double kg_co2 = 0.0;
};

// Exact serialized size of the payload vs `baseline_bits_per_param` bits for
// every parameter; never a formula estimate.
CostReport comm_cost(const Payload& payload, std::size_t baseline_bits_per_param);

// Linear wall-time carbon proxy: kg = (wall_ms / 3.6e6) * kg_per_hour.
double carbon_estimate(double wall_ms, double kg_per_hour);

struct ProbeResult {
    double cosine_plain = 0.0;
    double cosine_cdpa = 0.0;
    double mse_plain = 0.0;
    double mse_cdpa = 0.0;
};

// Closed-form reconstruction of a single training input from a linear or
// logistic gradient (bias-ratio recovery: x_j = dW[c][j] / db[c]), applied to
// the plain gradient and to the gradient after the client pipeline plus
// single-client recovery. Reports cosine similarity and MSE against the
// true features.
ProbeResult inversion_probe(const Model& model, const Dataset& sample,
                            const ClientPipeline& pipeline, std::uint64_t seed);

}  // namespace cdpa
