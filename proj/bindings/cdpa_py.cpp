#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdpa/aggregator.hpp"
#include "cdpa/analysis.hpp"
#include "cdpa/codec.hpp"
#include "cdpa/errors.hpp"
#include "cdpa/dataset.hpp"
#include "cdpa/harness.hpp"
#include "cdpa/lattice.hpp"
#include "cdpa/payload.hpp"
#include "cdpa/rng.hpp"

namespace py = pybind11;

namespace {

cdpa::FlipMask make_mask(std::vector<int> positions, double p, int z, int m) {
    cdpa::FlipMask mask;
    mask.positions = std::move(positions);
    mask.p = p;
    mask.z = z;
    mask.m = m;
    return mask;
}

cdpa::ExperimentConfig config_from_json_str(const std::string& config_json) {
    return cdpa::ExperimentConfig::from_json(nlohmann::json::parse(config_json));
}

py::dict metrics_to_dict(const cdpa::RoundMetrics& r) {
    py::dict d;
    d["round"] = r.round;
    d["train_loss"] = r.train_loss;
    d["test_loss"] = r.test_loss;
    d["accuracy"] = r.accuracy;
    d["comm_bits_per_client"] = r.comm_bits_per_client;
    d["epsilon_per_bit"] = r.epsilon_per_bit;
    d["clamp_count"] = r.clamp_count;
    d["cdpa_vs_mean_l2"] = r.cdpa_vs_mean_l2;
    d["wall_ms"] = r.wall_ms;
    d["kg_co2"] = r.kg_co2;
    return d;
}

}  // namespace

PYBIND11_MODULE(_cdpa, m) {
    m.doc() = "Compressed differentially private aggregation: quantize, "
              "fixed-point encode, masked bit-flip, bitwise aggregate, recover.";

    m.def("epsilon_of", &cdpa::epsilon_of, py::arg("p"),
          "Per-bit randomized-response budget ln(p / (1 - p)).");
    m.def("p_of_epsilon", &cdpa::p_of_epsilon, py::arg("epsilon"),
          "Inverse budget: p = e^eps / (1 + e^eps).");

    m.def(
        "float_to_fixed",
        [](const std::vector<double>& values, int z, int m_bits) {
            auto r = cdpa::float_to_fixed(values, z, m_bits);
            return py::make_tuple(r.words, r.clamp_count);
        },
        py::arg("values"), py::arg("z") = 4, py::arg("m") = 16,
        "Round to z decimals, scale by 10^z, saturate to m-bit words. "
        "Returns (words, clamp_count).");
    m.def(
        "fixed_to_float",
        [](const std::vector<cdpa::FixedWord>& words, int z) {
            return cdpa::fixed_to_float(words, z);
        },
        py::arg("words"), py::arg("z") = 4);
    m.def("word_to_pattern", &cdpa::word_to_pattern, py::arg("value"), py::arg("m") = 16,
          "m-bit two's-complement pattern of a word.");

    m.def(
        "bit_flip_words",
        [](std::vector<cdpa::FixedWord> words, std::vector<int> positions, double p, int z,
           int m_bits, std::uint64_t seed) {
            const cdpa::FlipMask mask = make_mask(std::move(positions), p, z, m_bits);
            for (std::size_t w = 0; w < words.size(); ++w) {
                cdpa::KeyedRng rng = cdpa::KeyedRng::from({seed, w});
                words[w] = cdpa::bit_flip(words[w], mask, rng);
            }
            return words;
        },
        py::arg("words"), py::arg("positions"), py::arg("p") = 0.98, py::arg("z") = 4,
        py::arg("m") = 16, py::arg("seed") = 0,
        "Masked randomized response on each word, one RNG stream per word.");

    m.def(
        "sdq_quantize",
        [](const std::vector<double>& v, std::size_t dim, double delta, std::uint64_t seed) {
            cdpa::LatticeSpec spec{dim, delta};
            return cdpa::sdq_quantize(v, spec, seed);
        },
        py::arg("values"), py::arg("dim") = 1, py::arg("delta") = 1e-4, py::arg("seed") = 0,
        "Subtractive dithered lattice quantization (quantize-dequantize).");

    m.def(
        "secure_aggregate",
        [](const std::vector<std::vector<cdpa::FixedWord>>& client_words,
           std::vector<int> positions, double p, int z, int m_bits, double threshold) {
            if (client_words.empty()) throw cdpa::ContractError("no client words");
            cdpa::RoundLayout layout{{0,
                                      static_cast<std::uint32_t>(client_words[0].size()),
                                      static_cast<std::uint8_t>(m_bits),
                                      static_cast<std::uint8_t>(z), positions}};
            cdpa::RoundState state(layout, client_words.size(), 0);
            for (std::size_t c = 0; c < client_words.size(); ++c) {
                cdpa::Payload payload;
                payload.round = 0;
                payload.client_id = static_cast<std::uint32_t>(c);
                cdpa::PayloadLayer layer;
                layer.layer_id = 0;
                layer.m = static_cast<std::uint8_t>(m_bits);
                layer.z = static_cast<std::uint8_t>(z);
                layer.mask_positions = positions;
                layer.words = client_words[c];
                payload.layers.push_back(std::move(layer));
                state.accumulate(cdpa::unpack_payload(cdpa::pack_payload(payload)));
            }
            const auto bits = state.recover(p, threshold);
            return cdpa::decode_global(bits, layout, {"out"}).layers[0].second;
        },
        py::arg("client_words"), py::arg("positions"), py::arg("p") = 0.98, py::arg("z") = 4,
        py::arg("m") = 16, py::arg("threshold") = 0.5,
        "Bitwise secure addition plus probabilistic recovery over one layer; "
        "returns the decoded global values.");

    m.def("recovery_success_prob", &cdpa::recovery_success_prob, py::arg("clients"),
          py::arg("p"),
          "Probability the recovered bit matches the unanimous no-flip value.");
    m.def(
        "expected_flip_error",
        [](std::size_t clients, double p, std::vector<int> positions, int m_bits, int z) {
            return cdpa::expected_flip_error(clients, p,
                                             make_mask(std::move(positions), 0.98, z, m_bits));
        },
        py::arg("clients"), py::arg("p"), py::arg("positions"), py::arg("m") = 16,
        py::arg("z") = 4);
    m.def(
        "monte_carlo_recovery_error",
        [](std::size_t clients, double p, std::vector<int> positions, int m_bits, int z,
           std::size_t trials, std::uint64_t seed) {
            const auto r = cdpa::monte_carlo_recovery_error(
                clients, p, make_mask(std::move(positions), 0.98, z, m_bits), trials, seed);
            py::dict d;
            d["clients"] = r.clients;
            d["p"] = r.p;
            d["trials"] = r.trials;
            d["p_gamma2_closed"] = r.p_gamma2_closed;
            d["p_gamma2_empirical"] = r.p_gamma2_empirical;
            d["expected_error"] = r.expected_error;
            d["empirical_error"] = r.empirical_error;
            d["ci_halfwidth"] = r.ci_halfwidth;
            d["mech_agree_one"] = r.mech_agree_one;
            d["mech_agree_zero"] = r.mech_agree_zero;
            d["mech_error"] = r.mech_error;
            return d;
        },
        py::arg("clients"), py::arg("p"), py::arg("positions"), py::arg("m") = 16,
        py::arg("z") = 4, py::arg("trials") = 100000, py::arg("seed") = 7);

    m.def(
        "make_synthetic_dataset",
        [](std::size_t n, std::size_t d, std::size_t classes, double separation,
           std::uint64_t seed) {
            const cdpa::Dataset data = cdpa::make_synthetic_dataset(n, d, classes,
                                                                    separation, seed);
            std::vector<std::vector<double>> rows(n);
            for (std::size_t i = 0; i < n; ++i) {
                rows[i].assign(data.row(i), data.row(i) + d);
            }
            return py::make_tuple(rows, data.labels);
        },
        py::arg("n"), py::arg("d"), py::arg("classes") = 2, py::arg("separation") = 4.0,
        py::arg("seed") = 0, "Gaussian class blobs; returns (features, labels).");

    m.def(
        "run_experiment",
        [](const std::string& config_json) {
            const auto metrics = cdpa::run_experiment(config_from_json_str(config_json));
            py::list rows;
            for (const auto& r : metrics) rows.append(metrics_to_dict(r));
            return rows;
        },
        py::arg("config_json"),
        "Full federated simulation from a JSON config string; returns per-round metrics.");

    m.def(
        "run_probe",
        [](const std::string& config_json) {
            const auto results = cdpa::run_probe(config_from_json_str(config_json));
            py::list rows;
            for (const auto& r : results) {
                py::dict d;
                d["cosine_plain"] = r.cosine_plain;
                d["cosine_cdpa"] = r.cosine_cdpa;
                d["mse_plain"] = r.mse_plain;
                d["mse_cdpa"] = r.mse_cdpa;
                rows.append(d);
            }
            return rows;
        },
        py::arg("config_json"),
        "Closed-form gradient-inversion probe; returns per-trial similarity metrics.");

    m.def("default_config", []() {
        return cdpa::ExperimentConfig{}.to_json().dump(2);
    });
}
