#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdpa/aggregator.hpp"
#include "cdpa/analysis.hpp"
#include "cdpa/dataset.hpp"
#include "cdpa/model.hpp"
#include "cdpa/pipeline.hpp"

namespace cdpa {

struct DatasetSpec {
    enum class Type { Synthetic, Csv };
    Type type = Type::Synthetic;
    // synthetic
    std::size_t n = 2000;
    std::size_t d = 2;
    std::size_t classes = 2;
    double separation = 4.0;
    // csv
    std::string path;
    std::string label_column;
    // common
    double feature_scale = 1.0;
    double test_fraction = 0.25;
};

struct ModelSpec {
    ModelKind kind = ModelKind::Logistic;
    std::size_t hidden_dim = 16;  // mlp only
};

struct ProbeSpec {
    std::size_t trials = 100;
    std::uint64_t seed = 1;
};

struct ExperimentConfig {
    std::uint64_t seed = 42;
    std::size_t rounds = 95;
    std::size_t clients = 20;
    std::size_t local_iters = 1;
    std::size_t batch_size = 0;  // 0 = full shard
    double lr = 0.5;
    ModelSpec model;
    DatasetSpec dataset;
    AggregatorConfig aggregator;
    FlipMask codec;          // p, z, m, mask positions
    LatticeSpec lattice;
    bool quantize = true;
    bool dither = true;
    std::size_t baseline_bits = 32;
    double carbon_kg_per_hour = 0.3;
    std::string output_dir = "out";
    ProbeSpec probe;

    void validate() const;
    ClientPipeline pipeline() const;

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path);
};

struct RoundMetrics {
    std::size_t round = 0;
    double train_loss = 0.0;
    double test_loss = 0.0;
    double accuracy = 0.0;
    std::size_t comm_bits_per_client = 0;
    double epsilon_per_bit = 0.0;
    std::size_t clamp_count = 0;
    double cdpa_vs_mean_l2 = 0.0;
    double wall_ms = 0.0;
    double kg_co2 = 0.0;
};

struct ExperimentResult {
    std::vector<RoundMetrics> metrics;
    Model final_model;
};

// Full federated simulation: broadcast -> local training -> client encoding
// -> secure addition & recovery (or baseline aggregation) -> global step.
// All randomness flows from config.seed through named sub-streams, so the
// non-timing metrics are a pure function of the config.
ExperimentResult run_experiment_full(const ExperimentConfig& config);
std::vector<RoundMetrics> run_experiment(const ExperimentConfig& config);

// Writes metrics.csv, config.json and summary.txt under `dir`.
void emit_report(const std::vector<RoundMetrics>& metrics, const ExperimentConfig& config,
                 const std::string& dir);

// Closed-form inversion probe over config.probe.trials fresh single-sample
// cases drawn from the dataset spec.
std::vector<ProbeResult> run_probe(const ExperimentConfig& config);
void write_probe_csv(const std::vector<ProbeResult>& results, const std::string& path);

// Recovery-curve rows for `analyze`: one RecoveryErrorReport per (R, p).
std::vector<RecoveryErrorReport> recovery_curve(const std::vector<std::size_t>& clients,
                                                const std::vector<double>& probabilities,
                                                const FlipMask& mask, std::size_t trials,
                                                std::uint64_t seed);
void write_recovery_csv(const std::vector<RecoveryErrorReport>& rows,
                        const std::string& path);

}  // namespace cdpa
