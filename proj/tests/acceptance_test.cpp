// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are pinned in code next to each check.
#include <algorithm>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cdpa/aggregator.hpp"
#include "cdpa/analysis.hpp"
#include "cdpa/cli.hpp"
#include "cdpa/codec.hpp"
#include "cdpa/dataset.hpp"
#include "cdpa/errors.hpp"
#include "cdpa/harness.hpp"
#include "cdpa/model.hpp"
#include "cdpa/payload.hpp"
#include "cdpa/rng.hpp"

using namespace cdpa;

namespace {

int failures = 0;

void report(int number, const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %d: %s — %s\n", ok ? "PASS" : "FAIL", number, name.c_str(),
                detail.c_str());
    if (!ok) ++failures;
}

void run(int number, const std::string& name,
         const std::function<std::pair<bool, std::string>()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    std::string detail;
    try {
        auto [r, d] = body();
        ok = r;
        detail = d;
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    const double ms = std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    char buf[64];
    std::snprintf(buf, sizeof(buf), " (%.0f ms)", ms);
    report(number, name, ok, detail + buf);
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

// ---- criterion 1 -----------------------------------------------------------

std::pair<bool, std::string> epsilon_table() {
    const std::pair<double, double> table[] = {
        {0.80, 1.38}, {0.90, 2.20}, {0.95, 2.94}, {0.98, 3.89}};
    std::string detail;
    for (const auto& [p, expected] : table) {
        std::ostringstream out, err;
        char parg[16];
        std::snprintf(parg, sizeof(parg), "%.2f", p);
        if (run_cli({"calibrate", "--p", parg}, out, err) != 0) {
            return {false, "calibrate exited nonzero"};
        }
        const std::string text = out.str();
        const auto pos = text.find("epsilon = ");
        if (pos == std::string::npos) return {false, "no epsilon in output"};
        const double eps = std::stod(text.substr(pos + 10));
        detail += fmt("p=%.2f -> %.4f; ", p, eps);
        if (std::fabs(eps - expected) > 0.01) {
            return {false, detail + fmt("off from %.2f by more than 0.01", expected)};
        }
    }
    return {true, detail + "all within 0.01"};
}

// ---- criterion 2 -----------------------------------------------------------

std::pair<bool, std::string> closed_form_enumeration() {
    double worst = 0.0;
    for (std::size_t clients : {1, 2, 3, 5, 8}) {
        for (double p : {0.6, 0.75, 0.9, 0.98}) {
            const std::size_t majority = (clients + 1) / 2;
            double enumerated = 0.0;
            for (std::uint64_t pattern = 0; pattern < (std::uint64_t{1} << clients);
                 ++pattern) {
                double prob = 1.0;
                std::size_t kept = 0;
                for (std::size_t r = 0; r < clients; ++r) {
                    if (pattern & (std::uint64_t{1} << r)) {
                        prob *= 1.0 - p;
                    } else {
                        prob *= p;
                        ++kept;
                    }
                }
                if (kept >= majority) enumerated += prob;
            }
            worst = std::max(worst, std::fabs(enumerated - recovery_success_prob(clients, p)));
        }
    }
    return {worst <= 1e-12, fmt("max |closed - enumerated| = %.3g (tol 1e-12)", worst)};
}

// ---- criterion 3 -----------------------------------------------------------

std::pair<bool, std::string> recovery_curve_reproduction() {
    const std::size_t trials = 100000;
    const std::vector<double> ps = {0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    const std::vector<std::size_t> rs = {5, 20, 100};
    FlipMask mask;
    mask.positions = {2};
    mask.p = 0.98;
    mask.z = 4;
    mask.m = 16;

    std::vector<std::vector<double>> miss(rs.size());
    for (std::size_t ri = 0; ri < rs.size(); ++ri) {
        for (double p : ps) {
            const auto rep = monte_carlo_recovery_error(rs[ri], p, mask, trials,
                                                        4242 + rs[ri]);
            const double closed_miss = 1.0 - rep.p_gamma2_closed;
            const double emp_miss = 1.0 - rep.p_gamma2_empirical;
            const double sigma = std::sqrt(rep.p_gamma2_closed *
                                           (1.0 - rep.p_gamma2_closed) /
                                           static_cast<double>(trials));
            if (std::fabs(emp_miss - closed_miss) > 3.0 * sigma + 1e-12) {
                return {false, fmt("R=%zu p=%.1f: |%.3g - %.3g| > 3 sigma", rs[ri], p,
                                   emp_miss, closed_miss)};
            }
            miss[ri].push_back(emp_miss);
        }
    }
    for (std::size_t ri = 0; ri < rs.size(); ++ri) {
        for (std::size_t pi = 1; pi < ps.size(); ++pi) {
            if (miss[ri][pi] > miss[ri][pi - 1] + 1e-12) {
                return {false, fmt("not non-increasing in p at R=%zu, p=%.1f", rs[ri],
                                   ps[pi])};
            }
        }
    }
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
        if (ps[pi] < 0.6) continue;
        for (std::size_t ri = 1; ri < rs.size(); ++ri) {
            if (miss[ri][pi] > miss[ri - 1][pi] + 1e-12) {
                return {false, fmt("not non-increasing in R at p=%.1f", ps[pi])};
            }
        }
    }
    return {true, fmt("18 grid points within 3 sigma, both monotonicities hold")};
}

// ---- criterion 4 -----------------------------------------------------------

std::pair<bool, std::string> codec_vector_check() {
    const auto encoded = float_to_fixed(std::vector<double>{2.7813}, 4, 16);
    if (encoded.words[0] != 27813) {
        return {false, fmt("word = %d, expected 27813", encoded.words[0])};
    }
    std::string bits;
    const std::uint32_t pattern = word_to_pattern(encoded.words[0], 16);
    for (int i = 15; i >= 0; --i) bits += (pattern >> i) & 1u ? '1' : '0';
    if (bits != "0110110010100101") return {false, "bit pattern " + bits};
    const double decoded = fixed_to_float(encoded.words, 4)[0];
    if (decoded != 2.7813) return {false, fmt("decoded %.10f", decoded)};
    return {true, "27813 = 0110110010100101, decodes to 2.7813"};
}

// ---- criterion 5 -----------------------------------------------------------

std::pair<bool, std::string> communication_halving() {
    // Logistic head over 4499 features, two classes: exactly 9000 parameters.
    ExperimentConfig cfg;
    cfg.seed = 31;
    cfg.rounds = 1;
    cfg.clients = 2;
    cfg.lr = 0.1;
    cfg.dataset.n = 40;
    cfg.dataset.d = 4499;
    cfg.dataset.classes = 2;
    cfg.dataset.separation = 2.0;
    cfg.codec.positions = {2, 3};
    cfg.codec.m = 16;
    cfg.codec.z = 4;
    cfg.baseline_bits = 32;
    const auto metrics = run_experiment(cfg);
    const std::size_t measured_bits = metrics[0].comm_bits_per_client;
    const double reduction =
        1.0 - static_cast<double>(measured_bits) / (9000.0 * 32.0);
    const bool ok = reduction >= 0.48 && reduction <= 0.50;
    return {ok, fmt("measured %zu bits vs 288000 baseline: reduction %.4f", measured_bits,
                    reduction)};
}

// ---- criterion 6 -----------------------------------------------------------

std::pair<bool, std::string> utility_preservation() {
    double cdpa_sum = 0.0, avg_sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ExperimentConfig cfg;
        cfg.seed = seed;
        cfg.rounds = 50;
        cfg.clients = 20;
        cfg.lr = 0.5;
        cfg.dataset.n = 2000;
        cfg.dataset.d = 2;
        cfg.dataset.classes = 2;
        cfg.dataset.separation = 2.0;  // ~4 sigma between blob means
        cfg.codec.positions = {2, 3};
        cfg.codec.p = 0.98;
        cfg.codec.z = 4;
        cfg.codec.m = 16;
        cfg.aggregator.p = 0.98;
        cfg.aggregator.mode = AggregatorMode::Cdpa;
        cdpa_sum += run_experiment(cfg).back().accuracy;

        cfg.aggregator.mode = AggregatorMode::Fedavg;
        avg_sum += run_experiment(cfg).back().accuracy;
    }
    const double cdpa_mean = cdpa_sum / 5.0, avg_mean = avg_sum / 5.0;
    const bool ok = std::fabs(cdpa_mean - avg_mean) <= 0.02 && cdpa_mean > 0.90 &&
                    avg_mean > 0.90;
    return {ok, fmt("mean accuracy cdpa %.4f vs fedavg %.4f (gap %.4f, limit 0.02)",
                    cdpa_mean, avg_mean, std::fabs(cdpa_mean - avg_mean))};
}

// ---- criterion 7 -----------------------------------------------------------

std::pair<bool, std::string> defense_property() {
    ExperimentConfig cfg;
    cfg.model.kind = ModelKind::Logistic;
    cfg.dataset.d = 100;
    cfg.dataset.classes = 2;
    cfg.dataset.separation = 1.0;
    cfg.dataset.feature_scale = 0.35;
    cfg.codec.positions = {2, 3};
    cfg.codec.p = 0.98;
    cfg.probe.trials = 100;
    cfg.probe.seed = 99;
    const auto results = run_probe(cfg);

    std::vector<double> plain, cdpa;
    std::size_t weaker = 0;
    for (const auto& r : results) {
        plain.push_back(r.cosine_plain);
        cdpa.push_back(r.cosine_cdpa);
        if (r.cosine_cdpa < r.cosine_plain) ++weaker;
    }
    std::sort(plain.begin(), plain.end());
    std::sort(cdpa.begin(), cdpa.end());
    const double med_plain = 0.5 * (plain[49] + plain[50]);
    const double med_cdpa = 0.5 * (cdpa[49] + cdpa[50]);
    const bool ok = med_plain > 0.999 && med_cdpa < 0.7 && weaker >= 95;
    return {ok, fmt("median plain %.6f, median cdpa %.4f, weaker on %zu/100", med_plain,
                    med_cdpa, weaker)};
}

// ---- criterion 8 -----------------------------------------------------------

std::pair<bool, std::string> pipeline_fidelity() {
    ExperimentConfig base;
    base.seed = 13;
    base.clients = 8;
    base.lr = 0.5;
    base.dataset.n = 400;
    base.dataset.d = 2;
    base.dataset.classes = 2;
    base.dataset.separation = 4.0;
    base.codec.positions = {};
    base.codec.p = 1.0;
    base.codec.m = 32;
    base.codec.z = 4;
    base.aggregator.p = 1.0;
    base.aggregator.layer_selection = {LayerSelection::Kind::Named, {}};
    base.quantize = false;

    double worst_per_round = 0.0;
    for (std::size_t rounds : {1, 2, 4, 7, 10}) {
        ExperimentConfig cdpa_cfg = base;
        cdpa_cfg.rounds = rounds;
        ExperimentConfig avg_cfg = base;
        avg_cfg.rounds = rounds;
        avg_cfg.aggregator.mode = AggregatorMode::Fedavg;

        const GradientSet a =
            parameters_as_gradient(run_experiment_full(cdpa_cfg).final_model);
        const GradientSet b =
            parameters_as_gradient(run_experiment_full(avg_cfg).final_model);
        double worst = 0.0;
        for (std::size_t li = 0; li < a.layers.size(); ++li) {
            for (std::size_t i = 0; i < a.layers[li].second.size(); ++i) {
                worst = std::max(worst, std::fabs(a.layers[li].second[i] -
                                                  b.layers[li].second[i]));
            }
        }
        worst_per_round = std::max(worst_per_round, worst / static_cast<double>(rounds));
        if (worst > 0.5e-4 * static_cast<double>(rounds)) {
            return {false, fmt("divergence %.3g after %zu rounds exceeds %.3g", worst,
                               rounds, 0.5e-4 * static_cast<double>(rounds))};
        }
    }
    return {true, fmt("worst per-round divergence %.3g <= 5e-05", worst_per_round)};
}

// ---- criterion 9 -----------------------------------------------------------

std::pair<bool, std::string> invariant_suites() {
    std::string detail;

    {  // flip-rate convergence, 1e6 trials per masked position
        FlipMask mask;
        mask.positions = {2, 3};
        mask.p = 0.98;
        const std::size_t trials = 1000000;
        std::size_t flips[2] = {0, 0};
        for (std::size_t t = 0; t < trials; ++t) {
            KeyedRng rng = KeyedRng::from({77, t});
            const std::uint32_t diff = word_to_pattern(bit_flip(27813, mask, rng), 16) ^
                                       word_to_pattern(27813, 16);
            if (diff & ~((1u << 13) | (1u << 12))) return {false, "unmasked bit moved"};
            if (diff & (1u << 13)) ++flips[0];
            if (diff & (1u << 12)) ++flips[1];
        }
        const double sigma = std::sqrt(0.02 * 0.98 * static_cast<double>(trials));
        for (std::size_t rate : flips) {
            if (std::fabs(static_cast<double>(rate) - 0.02 * trials) > 3.0 * sigma) {
                return {false, fmt("flip rate %zu outside 3 sigma of %g", rate,
                                   0.02 * trials)};
            }
        }
        detail += "flip-rate ok; ";
    }

    {  // magnitude law, all 16 positions x 1000 words
        KeyedRng rng(5);
        for (int pos = 0; pos < 16; ++pos) {
            const double xi = std::ldexp(1.0, 15 - pos) / 1e4;
            for (int rep = 0; rep < 1000; ++rep) {
                const auto w =
                    static_cast<FixedWord>(static_cast<std::int16_t>(rng.next_u64()));
                const FixedWord toggled =
                    pattern_to_word(word_to_pattern(w, 16) ^ (1u << (15 - pos)), 16);
                const double delta = std::fabs(fixed_to_float({&toggled, 1}, 4)[0] -
                                               fixed_to_float({&w, 1}, 4)[0]);
                if (std::fabs(delta - xi) > 1e-12) {
                    return {false, fmt("magnitude law broken at position %d", pos)};
                }
            }
        }
        detail += "magnitude law ok; ";
    }

    {  // fixed-point roundtrip bound, 1e5 cases
        KeyedRng rng(6);
        for (int rep = 0; rep < 100000; ++rep) {
            const double v = rng.next_uniform(-3.2, 3.2);
            const auto words = float_to_fixed({&v, 1}, 4, 16);
            const double back = fixed_to_float(words.words, 4)[0];
            if (std::fabs(back - v) > 0.5e-4 + 1e-15) {
                return {false, fmt("roundtrip error %.3g at %.6f", std::fabs(back - v), v)};
            }
        }
        detail += "fixed roundtrip ok; ";
    }

    {  // payload pack/unpack bijection, 1e3 random payloads
        KeyedRng rng(7);
        for (int rep = 0; rep < 1000; ++rep) {
            Payload p;
            p.round = static_cast<std::uint32_t>(rng.next_u64());
            p.client_id = static_cast<std::uint32_t>(rng.next_u64());
            PayloadLayer layer;
            layer.layer_id = static_cast<std::uint16_t>(rng.next_u64());
            layer.m = static_cast<std::uint8_t>(8 + rng.next_below(25));
            layer.z = static_cast<std::uint8_t>(rng.next_below(7));
            for (int pos = 0; pos < layer.m; ++pos) {
                if (rng.next_double() < 0.2) layer.mask_positions.push_back(pos);
            }
            const std::size_t words = 1 + rng.next_below(30);
            const std::int64_t lo = -(std::int64_t{1} << (layer.m - 1));
            const std::int64_t hi = (std::int64_t{1} << (layer.m - 1)) - 1;
            for (std::size_t w = 0; w < words; ++w) {
                layer.words.push_back(static_cast<FixedWord>(
                    lo + static_cast<std::int64_t>(
                             rng.next_below(static_cast<std::uint64_t>(hi - lo + 1)))));
            }
            p.layers.push_back(layer);
            const Payload back = unpack_payload(pack_payload(p));
            if (back.layers[0].words != p.layers[0].words ||
                back.layers[0].mask_positions != p.layers[0].mask_positions ||
                back.round != p.round || back.client_id != p.client_id) {
                return {false, "payload roundtrip mismatch"};
            }
        }
        detail += "payload bijection ok; ";
    }

    {  // accumulate commutativity, 1e3 shuffled replays
        KeyedRng rng(8);
        for (int rep = 0; rep < 1000; ++rep) {
            std::vector<Payload> payloads;
            for (std::uint32_t c = 0; c < 6; ++c) {
                Payload p;
                p.client_id = c;
                PayloadLayer layer;
                layer.layer_id = 0;
                layer.m = 16;
                layer.z = 4;
                layer.mask_positions = {2, 3};
                for (int w = 0; w < 8; ++w) {
                    layer.words.push_back(
                        static_cast<FixedWord>(static_cast<std::int16_t>(rng.next_u64())));
                }
                p.layers.push_back(layer);
                payloads.push_back(p);
            }
            RoundState forward(layout_of(payloads[0]), 6, 0);
            for (const auto& p : payloads) forward.accumulate(p);
            std::vector<std::size_t> order(6);
            std::iota(order.begin(), order.end(), std::size_t{0});
            for (std::size_t i = 6; i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);
            RoundState shuffled(layout_of(payloads[0]), 6, 0);
            for (std::size_t i : order) shuffled.accumulate(payloads[i]);
            for (std::size_t w = 0; w < 8; ++w) {
                for (int pos = 0; pos < 16; ++pos) {
                    if (forward.bit_counter(0, w, pos) != shuffled.bit_counter(0, w, pos)) {
                        return {false, "accumulate order changed a counter"};
                    }
                }
            }
        }
        detail += "commutativity ok; ";
    }

    {  // SDQ distortion bound, 1e4 vectors (componentwise, delta * I)
        KeyedRng rng(9);
        for (int rep = 0; rep < 10000; ++rep) {
            const LatticeSpec spec{1 + rng.next_below(4), 0.05 + rng.next_double()};
            std::vector<double> v(1 + rng.next_below(10));
            for (double& x : v) x = rng.next_uniform(-3.0, 3.0);
            const auto out = sdq_quantize(v, spec, rng.next_u64());
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (std::fabs(out[i] - v[i]) > spec.delta / 2.0 + 1e-12) {
                    return {false, "sdq distortion bound broken"};
                }
            }
        }
        detail += "sdq bound ok; ";
    }

    {  // gradient finite-difference checks, 1e3 draws
        KeyedRng rng(10);
        const ModelKind kinds[] = {ModelKind::Linear, ModelKind::Logistic, ModelKind::Mlp};
        for (int rep = 0; rep < 1000; ++rep) {
            const ModelKind kind = kinds[rep % 3];
            const std::size_t dim = 2 + rng.next_below(2);
            const Model model =
                make_model(kind, dim, 2, kind == ModelKind::Mlp ? 3 : 0, rng.next_u64());
            Dataset batch;
            batch.n_examples = 1 + rng.next_below(3);
            batch.feature_dim = dim;
            batch.classes = 2;
            batch.features.resize(batch.n_examples * dim);
            for (double& x : batch.features) x = rng.next_normal();
            batch.labels.resize(batch.n_examples);
            for (double& y : batch.labels) y = static_cast<double>(rng.next_below(2));

            const auto analytic = compute_gradient(model, batch).first;
            GradientSet params = parameters_as_gradient(model);
            // Spot-check three random coordinates per draw.
            std::size_t total = 0;
            for (const auto& [name, vals] : params.layers) total += vals.size();
            for (int probe_i = 0; probe_i < 3; ++probe_i) {
                const std::size_t k = rng.next_below(total);
                auto loss_at = [&](double delta) {
                    GradientSet p = params;
                    std::size_t off = 0;
                    for (auto& [name, vals] : p.layers) {
                        if (k < off + vals.size()) {
                            vals[k - off] += delta;
                            break;
                        }
                        off += vals.size();
                    }
                    return compute_gradient(model_from_parameters(model, p), batch).second;
                };
                const double fd = (loss_at(1e-5) - loss_at(-1e-5)) / 2e-5;
                std::size_t off = 0;
                double a = 0.0;
                for (const auto& [name, vals] : analytic.layers) {
                    if (k < off + vals.size()) {
                        a = vals[k - off];
                        break;
                    }
                    off += vals.size();
                }
                const double denom = std::max({std::fabs(a), std::fabs(fd), 1e-6});
                if (std::fabs(a - fd) / denom > 1e-4) {
                    return {false, fmt("gradient mismatch %.3g vs %.3g", a, fd)};
                }
            }
        }
        detail += "finite differences ok";
    }

    return {true, detail};
}

}  // namespace

int main() {
    std::printf("CDPA acceptance suite\n");
    run(1, "epsilon-p calibration table", epsilon_table);
    run(2, "closed form equals exhaustive enumeration", closed_form_enumeration);
    run(3, "recovery-error curve reproduction", recovery_curve_reproduction);
    run(4, "fixed-point codec vector", codec_vector_check);
    run(5, "communication halving on serialized bytes", communication_halving);
    run(6, "utility preservation vs paired baseline", utility_preservation);
    run(7, "gradient-inversion defense", defense_property);
    run(8, "width-preserving pipeline fidelity", pipeline_fidelity);
    run(9, "module invariant suites (>= 1e3 cases each)", invariant_suites);
    if (failures == 0) {
        std::printf("all 9 criteria passed\n");
    } else {
        std::printf("%d criteria FAILED\n", failures);
    }
    return failures == 0 ? 0 : 1;
}
