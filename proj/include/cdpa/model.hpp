#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cdpa/dataset.hpp"

namespace cdpa {

enum class ModelKind { Linear, Logistic, Mlp };

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);

// Fully connected layer, weights row-major (out_dim x in_dim).
struct DenseLayer {
    std::string name;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    std::size_t param_count() const { return weights.size() + bias.size(); }
};

// Linear regression (MSE), softmax regression (cross-entropy) or a
// one-hidden-layer tanh MLP (cross-entropy). Gradients are hand-written.
struct Model {
    ModelKind kind = ModelKind::Logistic;
    std::size_t feature_dim = 0;
    std::size_t output_dim = 0;
    std::size_t hidden_dim = 0;  // MLP only
    std::vector<DenseLayer> layers;

    std::size_t parameter_count() const;
};

// Per-layer flat gradient vectors (weights then bias per layer), in the
// model's layer order. The layout is the unit of agreement between clients
// and the server within a round.
struct GradientSet {
    using Layout = std::vector<std::pair<std::string, std::size_t>>;

    std::vector<std::pair<std::string, std::vector<double>>> layers;

    Layout layout() const;
    std::size_t total_size() const;
    bool same_layout(const GradientSet& other) const;
    const std::vector<double>& at(const std::string& name) const;
};

// Uniform [-0.1, 0.1] initialization, deterministic per seed.
Model make_model(ModelKind kind, std::size_t feature_dim, std::size_t output_dim,
                 std::size_t hidden_dim, std::uint64_t seed);

// Analytic gradient of the mean loss over the batch, plus the loss itself.
std::pair<GradientSet, double> compute_gradient(const Model& model, const Dataset& batch);

// Returns a model with every parameter decreased by lr * gradient.
Model sgd_step(const Model& model, const GradientSet& grads, double lr);

struct EvalResult {
    double accuracy = 0.0;
    double loss = 0.0;
};

EvalResult evaluate(const Model& model, const Dataset& data);

// Flat parameter vector in layer order (weights then bias), and its inverse.
GradientSet parameters_as_gradient(const Model& model);
Model model_from_parameters(const Model& prototype, const GradientSet& params);

}  // namespace cdpa
