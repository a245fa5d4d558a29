#include "cdpa/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

#include "cdpa/errors.hpp"
#include "cdpa/rng.hpp"

namespace cdpa {

namespace {

std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

Dataset scaled(Dataset data, double feature_scale) {
    if (feature_scale != 1.0) {
        for (double& v : data.features) v *= feature_scale;
    }
    return data;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (clients < 1) throw ConfigError("config: clients must be >= 1");
    if (rounds < 1) throw ConfigError("config: rounds must be >= 1");
    if (local_iters < 1) throw ConfigError("config: local_iters must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("config: lr must be positive");
    if (dataset.type == DatasetSpec::Type::Synthetic) {
        if (dataset.classes < 2) throw ConfigError("config: dataset.classes must be >= 2");
        if (dataset.n < dataset.classes) throw ConfigError("config: dataset.n too small");
    } else if (dataset.path.empty() || dataset.label_column.empty()) {
        throw ConfigError("config: dataset.path and dataset.label_column required for csv");
    }
    if (dataset.test_fraction < 0.0 || dataset.test_fraction >= 1.0) {
        throw ConfigError("config: dataset.test_fraction must be in [0, 1)");
    }
    if (baseline_bits < 1) throw ConfigError("config: baseline_bits must be >= 1");
    if (carbon_kg_per_hour < 0.0) throw ConfigError("config: carbon_kg_per_hour must be >= 0");
    codec.validate();
    lattice.validate();
    aggregator.validate();
    if (model.kind == ModelKind::Mlp && model.hidden_dim < 1) {
        throw ConfigError("config: model.hidden_dim must be >= 1 for mlp");
    }
}

ClientPipeline ExperimentConfig::pipeline() const {
    ClientPipeline p;
    p.mask = codec;
    p.lattice = lattice;
    p.quantize = quantize;
    p.dither = dither;
    return p;
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["rounds"] = rounds;
    j["clients"] = clients;
    j["local_iters"] = local_iters;
    j["batch_size"] = batch_size;
    j["lr"] = lr;
    j["model"] = {{"kind", to_string(model.kind)}, {"hidden_dim", model.hidden_dim}};
    if (dataset.type == DatasetSpec::Type::Synthetic) {
        j["dataset"] = {{"type", "synthetic"}, {"n", dataset.n},       {"d", dataset.d},
                        {"classes", dataset.classes}, {"separation", dataset.separation},
                        {"feature_scale", dataset.feature_scale},
                        {"test_fraction", dataset.test_fraction}};
    } else {
        j["dataset"] = {{"type", "csv"},
                        {"path", dataset.path},
                        {"label_column", dataset.label_column},
                        {"feature_scale", dataset.feature_scale},
                        {"test_fraction", dataset.test_fraction}};
    }
    nlohmann::json sel;
    switch (aggregator.layer_selection.kind) {
        case LayerSelection::Kind::All: sel = "all"; break;
        case LayerSelection::Kind::LastLayer: sel = "last_layer"; break;
        case LayerSelection::Kind::Named: sel = aggregator.layer_selection.names; break;
    }
    j["aggregator"] = {{"mode", to_string(aggregator.mode)},
                       {"p", aggregator.p},
                       {"epsilon", aggregator.epsilon},
                       {"clip", aggregator.clip},
                       {"drop_fraction", aggregator.drop_fraction},
                       {"threshold", aggregator.threshold},
                       {"layer_selection", sel}};
    j["codec"] = {{"p", codec.p}, {"z", codec.z}, {"m", codec.m}, {"mask", codec.positions}};
    j["lattice"] = {{"dim", lattice.dim}, {"delta", lattice.delta}};
    j["quantize"] = quantize;
    j["dither"] = dither;
    j["baseline_bits"] = baseline_bits;
    j["carbon_kg_per_hour"] = carbon_kg_per_hour;
    j["output_dir"] = output_dir;
    j["probe"] = {{"trials", probe.trials}, {"seed", probe.seed}};
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        c.rounds = j.value("rounds", c.rounds);
        c.clients = j.value("clients", c.clients);
        c.local_iters = j.value("local_iters", c.local_iters);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.lr = j.value("lr", c.lr);
        if (j.contains("model")) {
            const auto& m = j.at("model");
            c.model.kind = model_kind_from_string(m.value("kind", std::string("logistic")));
            c.model.hidden_dim = m.value("hidden_dim", c.model.hidden_dim);
        }
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            const std::string type = d.value("type", std::string("synthetic"));
            if (type == "synthetic") {
                c.dataset.type = DatasetSpec::Type::Synthetic;
            } else if (type == "csv") {
                c.dataset.type = DatasetSpec::Type::Csv;
            } else {
                throw ConfigError("config: dataset.type must be synthetic or csv");
            }
            c.dataset.n = d.value("n", c.dataset.n);
            c.dataset.d = d.value("d", c.dataset.d);
            c.dataset.classes = d.value("classes", c.dataset.classes);
            c.dataset.separation = d.value("separation", c.dataset.separation);
            c.dataset.path = d.value("path", c.dataset.path);
            c.dataset.label_column = d.value("label_column", c.dataset.label_column);
            c.dataset.feature_scale = d.value("feature_scale", c.dataset.feature_scale);
            c.dataset.test_fraction = d.value("test_fraction", c.dataset.test_fraction);
        }
        if (j.contains("codec")) {
            const auto& k = j.at("codec");
            c.codec.p = k.value("p", c.codec.p);
            c.codec.z = k.value("z", c.codec.z);
            c.codec.m = k.value("m", c.codec.m);
            if (k.contains("mask")) c.codec.positions = k.at("mask").get<std::vector<int>>();
        }
        if (j.contains("aggregator")) {
            const auto& a = j.at("aggregator");
            c.aggregator.mode =
                aggregator_mode_from_string(a.value("mode", std::string("cdpa")));
            c.aggregator.p = a.value("p", c.codec.p);
            c.aggregator.epsilon = a.value("epsilon", c.aggregator.epsilon);
            c.aggregator.clip = a.value("clip", c.aggregator.clip);
            c.aggregator.drop_fraction = a.value("drop_fraction", c.aggregator.drop_fraction);
            c.aggregator.threshold = a.value("threshold", c.aggregator.threshold);
            if (a.contains("layer_selection")) {
                const auto& sel = a.at("layer_selection");
                if (sel.is_array()) {
                    c.aggregator.layer_selection.kind = LayerSelection::Kind::Named;
                    c.aggregator.layer_selection.names = sel.get<std::vector<std::string>>();
                } else if (sel.get<std::string>() == "all") {
                    c.aggregator.layer_selection.kind = LayerSelection::Kind::All;
                } else if (sel.get<std::string>() == "last_layer") {
                    c.aggregator.layer_selection.kind = LayerSelection::Kind::LastLayer;
                } else {
                    throw ConfigError(
                        "config: aggregator.layer_selection must be all, last_layer or a list");
                }
            }
        } else {
            c.aggregator.p = c.codec.p;
        }
        if (j.contains("lattice")) {
            const auto& l = j.at("lattice");
            c.lattice.dim = l.value("dim", c.lattice.dim);
            c.lattice.delta = l.value("delta", c.lattice.delta);
        }
        c.quantize = j.value("quantize", c.quantize);
        c.dither = j.value("dither", c.dither);
        c.baseline_bits = j.value("baseline_bits", c.baseline_bits);
        c.carbon_kg_per_hour = j.value("carbon_kg_per_hour", c.carbon_kg_per_hour);
        c.output_dir = j.value("output_dir", c.output_dir);
        if (j.contains("probe")) {
            const auto& p = j.at("probe");
            c.probe.trials = p.value("trials", c.probe.trials);
            c.probe.seed = p.value("seed", c.probe.seed);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: malformed value: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("config: invalid JSON in " + path + ": " + e.what());
    }
    return from_json(j);
}

namespace {

struct ClientOutput {
    GradientSet update;          // net local update (non-cdpa modes)
    Payload payload;             // cdpa mode
    std::size_t payload_bits = 0;
    std::size_t clamp_count = 0;
    double first_loss = 0.0;
};

Dataset minibatch(const Dataset& shard, std::size_t batch_size, std::uint64_t seed_key) {
    if (batch_size == 0 || batch_size >= shard.n_examples) return shard;
    KeyedRng rng{seed_key};
    std::vector<std::size_t> idx(shard.n_examples);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < batch_size; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_below(idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    Dataset out;
    out.feature_dim = shard.feature_dim;
    out.classes = shard.classes;
    out.n_examples = batch_size;
    out.features.reserve(batch_size * shard.feature_dim);
    for (std::size_t i = 0; i < batch_size; ++i) {
        const double* p = shard.row(idx[i]);
        out.features.insert(out.features.end(), p, p + shard.feature_dim);
        out.labels.push_back(shard.labels[idx[i]]);
    }
    return out;
}

// Net local update: (initial - final parameters) / lr. At one local pass this
// is exactly the shard gradient.
GradientSet net_update(const Model& before, const Model& after, double lr) {
    GradientSet a = parameters_as_gradient(before);
    const GradientSet b = parameters_as_gradient(after);
    for (std::size_t li = 0; li < a.layers.size(); ++li) {
        auto& va = a.layers[li].second;
        const auto& vb = b.layers[li].second;
        for (std::size_t i = 0; i < va.size(); ++i) va[i] = (va[i] - vb[i]) / lr;
    }
    return a;
}

ClientOutput run_client(const ExperimentConfig& cfg, const Model& global,
                        const Dataset& shard, std::size_t round, std::size_t client,
                        const std::vector<bool>& selected) {
    ClientOutput out;
    Model local = global;
    for (std::size_t it = 0; it < cfg.local_iters; ++it) {
        const Dataset batch = minibatch(
            shard, cfg.batch_size,
            key_hash({cfg.seed, stream::batch, round, client, it}));
        auto [grads, loss] = compute_gradient(local, batch);
        if (it == 0) out.first_loss = loss;
        local = sgd_step(local, grads, cfg.lr);
    }
    out.update = net_update(global, local, cfg.lr);

    if (cfg.aggregator.mode == AggregatorMode::Cdpa) {
        const ClientPipeline pipe = cfg.pipeline();
        out.payload.round = static_cast<std::uint32_t>(round);
        out.payload.client_id = static_cast<std::uint32_t>(client);
        const std::uint64_t dither_base =
            key_hash({cfg.seed, stream::dither, round, client});
        for (std::size_t li = 0; li < out.update.layers.size(); ++li) {
            const auto& [name, values] = out.update.layers[li];
            out.payload.layers.push_back(encode_layer(
                values, pipe, selected[li], static_cast<std::uint16_t>(li),
                key_hash({dither_base, static_cast<std::uint64_t>(li)}),
                key_hash({cfg.seed, stream::flip, round, client,
                          static_cast<std::uint64_t>(li)}),
                out.clamp_count));
        }
        out.payload_bits = pack_payload(out.payload).size() * 8;
    }
    return out;
}

double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return sum;
}

}  // namespace

ExperimentResult run_experiment_full(const ExperimentConfig& config) {
    config.validate();

    Dataset full;
    if (config.dataset.type == DatasetSpec::Type::Synthetic) {
        full = make_synthetic_dataset(config.dataset.n, config.dataset.d,
                                      config.dataset.classes, config.dataset.separation,
                                      key_hash({config.seed, stream::data}));
    } else {
        full = load_csv_dataset(config.dataset.path, config.dataset.label_column);
    }
    full = scaled(std::move(full), config.dataset.feature_scale);

    auto [train, test] = split_train_test(full, config.dataset.test_fraction, config.seed);
    if (test.n_examples == 0) test = train;
    const std::vector<Dataset> shards = partition_iid(train, config.clients, config.seed);

    const std::size_t output_dim = full.classes >= 2 ? full.classes : 1;
    Model global = make_model(config.model.kind, full.feature_dim, output_dim,
                              config.model.hidden_dim, config.seed);

    std::vector<std::string> layer_names;
    std::vector<bool> selected;
    for (std::size_t li = 0; li < global.layers.size(); ++li) {
        layer_names.push_back(global.layers[li].name);
        selected.push_back(config.aggregator.layer_selection.selects(
            global.layers[li].name, li + 1 == global.layers.size()));
    }

    ExperimentResult result;
    result.metrics.reserve(config.rounds);

    for (std::size_t round = 0; round < config.rounds; ++round) {
        const auto t0 = std::chrono::steady_clock::now();

        // Client workers run concurrently; the aggregator is the only shared
        // sink and its accumulate is thread-safe.
        std::unique_ptr<RoundState> state;
        std::vector<ClientOutput> outputs(config.clients);
        {
            std::mutex state_init_mu;
            std::vector<std::future<void>> workers;
            workers.reserve(config.clients);
            for (std::size_t c = 0; c < config.clients; ++c) {
                workers.push_back(std::async(std::launch::async, [&, c] {
                    ClientOutput out =
                        run_client(config, global, shards[c], round, c, selected);
                    if (config.aggregator.mode == AggregatorMode::Cdpa) {
                        Payload over_wire = unpack_payload(pack_payload(out.payload));
                        {
                            std::lock_guard<std::mutex> lk(state_init_mu);
                            if (!state) {
                                state = std::make_unique<RoundState>(
                                    layout_of(over_wire), config.clients,
                                    static_cast<std::uint32_t>(round));
                            }
                        }
                        state->accumulate(over_wire);
                    }
                    outputs[c] = std::move(out);
                }));
            }
            for (auto& w : workers) w.get();
        }

        RoundMetrics row;
        row.round = round + 1;
        double loss_sum = 0.0;
        for (const ClientOutput& out : outputs) {
            loss_sum += out.first_loss;
            row.clamp_count += out.clamp_count;
        }
        row.train_loss = loss_sum / static_cast<double>(config.clients);

        GradientSet aggregated;
        switch (config.aggregator.mode) {
            case AggregatorMode::Cdpa: {
                const auto bits = state->recover(config.aggregator.p,
                                                 config.aggregator.threshold);
                const GradientSet bitwise =
                    decode_global(bits, state->layout(), layer_names);
                const auto means = state->mean_decoded();
                aggregated = bitwise;
                double disagreement = 0.0;
                for (std::size_t li = 0; li < aggregated.layers.size(); ++li) {
                    if (selected[li]) {
                        disagreement += l2_distance(bitwise.layers[li].second, means[li]);
                    } else {
                        aggregated.layers[li].second = means[li];
                    }
                }
                row.cdpa_vs_mean_l2 = std::sqrt(disagreement);
                row.comm_bits_per_client = outputs[0].payload_bits;
                row.epsilon_per_bit = epsilon_of(config.aggregator.p);
                break;
            }
            case AggregatorMode::Fedavg:
            case AggregatorMode::Ldp:
            case AggregatorMode::Signsgd:
            case AggregatorMode::Graddrop: {
                std::vector<GradientSet> updates;
                updates.reserve(config.clients);
                for (ClientOutput& out : outputs) updates.push_back(std::move(out.update));
                const std::size_t params = global.parameter_count();
                if (config.aggregator.mode == AggregatorMode::Fedavg) {
                    aggregated = fedavg(updates);
                    row.comm_bits_per_client = params * config.baseline_bits;
                } else if (config.aggregator.mode == AggregatorMode::Ldp) {
                    aggregated = ldp_aggregate(
                        updates, config.aggregator.epsilon, config.aggregator.clip,
                        key_hash({config.seed, stream::ldp, round}));
                    row.comm_bits_per_client = params * config.baseline_bits;
                    row.epsilon_per_bit = config.aggregator.epsilon;
                } else if (config.aggregator.mode == AggregatorMode::Signsgd) {
                    aggregated = signsgd_aggregate(updates);
                    row.comm_bits_per_client = params;
                } else {
                    for (GradientSet& u : updates) {
                        u = graddrop_filter(u, config.aggregator.drop_fraction);
                    }
                    aggregated = fedavg(updates);
                    // kept coordinates travel as (index, value) pairs
                    const auto kept = static_cast<std::size_t>(std::ceil(
                        (1.0 - config.aggregator.drop_fraction) *
                        static_cast<double>(params)));
                    row.comm_bits_per_client = kept * (config.baseline_bits + 32);
                }
                break;
            }
        }

        global = sgd_step(global, aggregated, config.lr);

        const EvalResult eval = evaluate(global, test);
        row.accuracy = eval.accuracy;
        row.test_loss = eval.loss;
        const auto t1 = std::chrono::steady_clock::now();
        row.wall_ms =
            std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(t1 - t0)
                .count();
        row.kg_co2 = carbon_estimate(row.wall_ms, config.carbon_kg_per_hour);
        result.metrics.push_back(row);
    }
    result.final_model = std::move(global);
    return result;
}

std::vector<RoundMetrics> run_experiment(const ExperimentConfig& config) {
    return run_experiment_full(config).metrics;
}

void emit_report(const std::vector<RoundMetrics>& metrics, const ExperimentConfig& config,
                 const std::string& dir) {
    if (metrics.empty()) throw ContractError("emit_report: no metrics rows");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("emit_report: cannot create directory: " + dir);

    const std::string metrics_path = (fs::path(dir) / "metrics.csv").string();
    {
        std::ofstream out(metrics_path);
        if (!out) throw IoError("emit_report: cannot write " + metrics_path);
        out << "round,train_loss,test_loss,accuracy,comm_bits_per_client,epsilon_per_bit,"
               "clamp_count,cdpa_vs_mean_l2,wall_ms,kg_co2\n";
        for (const RoundMetrics& r : metrics) {
            out << r.round << ',' << fmt9(r.train_loss) << ',' << fmt9(r.test_loss) << ','
                << fmt9(r.accuracy) << ',' << r.comm_bits_per_client << ','
                << fmt9(r.epsilon_per_bit) << ',' << r.clamp_count << ','
                << fmt9(r.cdpa_vs_mean_l2) << ',' << fmt9(r.wall_ms) << ','
                << fmt9(r.kg_co2) << '\n';
        }
    }

    const std::string config_path = (fs::path(dir) / "config.json").string();
    {
        std::ofstream out(config_path);
        if (!out) throw IoError("emit_report: cannot write " + config_path);
        out << config.to_json().dump(2) << '\n';
    }

    const std::string summary_path = (fs::path(dir) / "summary.txt").string();
    {
        std::ofstream out(summary_path);
        if (!out) throw IoError("emit_report: cannot write " + summary_path);
        std::size_t total_bits = 0;
        std::size_t total_clamps = 0;
        double total_co2 = 0.0;
        for (const RoundMetrics& r : metrics) {
            total_bits += r.comm_bits_per_client * config.clients;
            total_clamps += r.clamp_count;
            total_co2 += r.kg_co2;
        }
        const RoundMetrics& last = metrics.back();
        out << "mode: " << to_string(config.aggregator.mode) << '\n';
        out << "rounds: " << metrics.size() << '\n';
        out << "clients: " << config.clients << '\n';
        out << "final_accuracy: " << fmt9(last.accuracy) << '\n';
        out << "final_test_loss: " << fmt9(last.test_loss) << '\n';
        out << "total_bits: " << total_bits << '\n';
        out << "total_kg_co2: " << fmt9(total_co2) << '\n';
        out << "epsilon_per_bit: " << fmt9(last.epsilon_per_bit) << '\n';
        out << "total_clamp_count: " << total_clamps << '\n';
    }
}

std::vector<ProbeResult> run_probe(const ExperimentConfig& config) {
    if (config.model.kind == ModelKind::Mlp) {
        throw ConfigError("probe: model.kind must be linear or logistic");
    }
    const std::size_t trials = config.probe.trials;
    if (trials < 1) throw ConfigError("probe: trials must be >= 1");

    Dataset samples;
    if (config.dataset.type == DatasetSpec::Type::Synthetic) {
        samples = make_synthetic_dataset(
            std::max(trials, config.dataset.classes), config.dataset.d,
            config.dataset.classes, config.dataset.separation,
            key_hash({config.probe.seed, stream::data}));
    } else {
        samples = load_csv_dataset(config.dataset.path, config.dataset.label_column);
    }
    samples = scaled(std::move(samples), config.dataset.feature_scale);
    const std::size_t output_dim = samples.classes >= 2 ? samples.classes : 1;

    const ClientPipeline pipe = config.pipeline();
    std::vector<ProbeResult> results;
    results.reserve(trials);
    for (std::size_t t = 0; t < trials; ++t) {
        const Model model =
            make_model(config.model.kind, samples.feature_dim, output_dim, 0,
                       key_hash({config.probe.seed, stream::init, t}));
        const Dataset one = samples.example(t % samples.n_examples);
        results.push_back(
            inversion_probe(model, one, pipe, key_hash({config.probe.seed, stream::probe, t})));
    }
    return results;
}

void write_probe_csv(const std::vector<ProbeResult>& results, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("write_probe_csv: cannot write " + path);
    out << "trial,cosine_plain,cosine_cdpa,mse_plain,mse_cdpa\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        const ProbeResult& r = results[i];
        out << i << ',' << fmt9(r.cosine_plain) << ',' << fmt9(r.cosine_cdpa) << ','
            << fmt9(r.mse_plain) << ',' << fmt9(r.mse_cdpa) << '\n';
    }
}

std::vector<RecoveryErrorReport> recovery_curve(const std::vector<std::size_t>& clients,
                                                const std::vector<double>& probabilities,
                                                const FlipMask& mask, std::size_t trials,
                                                std::uint64_t seed) {
    std::vector<RecoveryErrorReport> rows;
    rows.reserve(clients.size() * probabilities.size());
    for (std::size_t r : clients) {
        for (double p : probabilities) {
            rows.push_back(monte_carlo_recovery_error(
                r, p, mask, trials, key_hash({seed, r, static_cast<std::uint64_t>(p * 1e6)})));
        }
    }
    return rows;
}

void write_recovery_csv(const std::vector<RecoveryErrorReport>& rows,
                        const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("write_recovery_csv: cannot write " + path);
    out << "R,p,p_gamma2_closed,p_gamma2_empirical,expected_error,empirical_error,ci\n";
    for (const RecoveryErrorReport& r : rows) {
        out << r.clients << ',' << fmt9(r.p) << ',' << fmt9(r.p_gamma2_closed) << ','
            << fmt9(r.p_gamma2_empirical) << ',' << fmt9(r.expected_error) << ','
            << fmt9(r.empirical_error) << ',' << fmt9(r.ci_halfwidth) << '\n';
    }
}

}  // namespace cdpa
