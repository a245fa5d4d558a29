#include "cdpa/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cdpa/errors.hpp"
#include "cdpa/rng.hpp"

namespace cdpa {

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "linear") return ModelKind::Linear;
    if (s == "logistic") return ModelKind::Logistic;
    if (s == "mlp") return ModelKind::Mlp;
    throw ConfigError("unknown model kind: '" + s + "' (expected linear|logistic|mlp)");
}

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Linear: return "linear";
        case ModelKind::Logistic: return "logistic";
        case ModelKind::Mlp: return "mlp";
    }
    return "?";
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
}

GradientSet::Layout GradientSet::layout() const {
    Layout out;
    out.reserve(layers.size());
    for (const auto& [name, values] : layers) out.emplace_back(name, values.size());
    return out;
}

std::size_t GradientSet::total_size() const {
    std::size_t n = 0;
    for (const auto& [name, values] : layers) n += values.size();
    return n;
}

bool GradientSet::same_layout(const GradientSet& other) const {
    return layout() == other.layout();
}

const std::vector<double>& GradientSet::at(const std::string& name) const {
    for (const auto& [n, v] : layers) {
        if (n == name) return v;
    }
    throw ContractError("GradientSet: no layer named '" + name + "'");
}

namespace {

DenseLayer make_layer(const std::string& name, std::size_t in_dim, std::size_t out_dim,
                      KeyedRng& rng) {
    DenseLayer l;
    l.name = name;
    l.in_dim = in_dim;
    l.out_dim = out_dim;
    l.weights.resize(in_dim * out_dim);
    l.bias.resize(out_dim);
    for (double& w : l.weights) w = rng.next_uniform(-0.1, 0.1);
    for (double& b : l.bias) b = rng.next_uniform(-0.1, 0.1);
    return l;
}

void affine_forward(const DenseLayer& l, const double* x, double* out) {
    for (std::size_t r = 0; r < l.out_dim; ++r) {
        double acc = l.bias[r];
        const double* wrow = l.weights.data() + r * l.in_dim;
        for (std::size_t c = 0; c < l.in_dim; ++c) acc += wrow[c] * x[c];
        out[r] = acc;
    }
}

void softmax_inplace(std::vector<double>& z) {
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : z) v /= sum;
}

std::size_t argmax(const std::vector<double>& v) {
    return static_cast<std::size_t>(
        std::distance(v.begin(), std::max_element(v.begin(), v.end())));
}

void check_batch(const Model& model, const Dataset& batch, const char* where) {
    if (batch.n_examples == 0) throw ContractError(std::string(where) + ": empty dataset");
    if (batch.feature_dim != model.feature_dim) {
        throw ContractError(std::string(where) + ": feature dim mismatch (model " +
                            std::to_string(model.feature_dim) + ", data " +
                            std::to_string(batch.feature_dim) + ")");
    }
    if (batch.classes >= 2) {
        for (double y : batch.labels) {
            if (y < 0.0 || static_cast<std::size_t>(y) >= model.output_dim) {
                throw ContractError(std::string(where) + ": label out of range");
            }
        }
    }
}

// Per-example output error dz and loss for the model's head.
double head_error(const Model& model, const Dataset& batch, std::size_t i,
                  const std::vector<double>& logits, std::vector<double>& dz) {
    const std::size_t C = model.output_dim;
    dz.assign(logits.begin(), logits.end());
    if (model.kind == ModelKind::Linear) {
        // MSE against one-hot targets (classification) or the raw target.
        double loss = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            double target = 0.0;
            if (batch.classes >= 2) {
                target = (static_cast<std::size_t>(batch.labels[i]) == c) ? 1.0 : 0.0;
            } else {
                target = batch.labels[i];
            }
            dz[c] = logits[c] - target;
            loss += 0.5 * dz[c] * dz[c];
        }
        return loss;
    }
    // Softmax cross-entropy.
    softmax_inplace(dz);
    const auto y = static_cast<std::size_t>(batch.labels[i]);
    const double py = std::max(dz[y], 1e-300);
    dz[y] -= 1.0;
    return -std::log(py);
}

}  // namespace

Model make_model(ModelKind kind, std::size_t feature_dim, std::size_t output_dim,
                 std::size_t hidden_dim, std::uint64_t seed) {
    if (feature_dim == 0 || output_dim == 0) {
        throw ConfigError("make_model: feature_dim and output_dim must be positive");
    }
    Model m;
    m.kind = kind;
    m.feature_dim = feature_dim;
    m.output_dim = output_dim;
    m.hidden_dim = (kind == ModelKind::Mlp) ? hidden_dim : 0;
    KeyedRng rng = KeyedRng::from({seed, stream::init});
    if (kind == ModelKind::Mlp) {
        if (hidden_dim == 0) throw ConfigError("make_model: mlp needs hidden_dim >= 1");
        m.layers.push_back(make_layer("hidden", feature_dim, hidden_dim, rng));
        m.layers.push_back(make_layer("out", hidden_dim, output_dim, rng));
    } else {
        m.layers.push_back(make_layer("out", feature_dim, output_dim, rng));
    }
    return m;
}

std::pair<GradientSet, double> compute_gradient(const Model& model, const Dataset& batch) {
    check_batch(model, batch, "compute_gradient");
    const std::size_t N = batch.n_examples;
    const double inv_n = 1.0 / static_cast<double>(N);

    GradientSet grads;
    for (const auto& l : model.layers) {
        grads.layers.emplace_back(l.name, std::vector<double>(l.param_count(), 0.0));
    }

    double total_loss = 0.0;
    std::vector<double> logits(model.output_dim);
    std::vector<double> dz;
    if (model.kind == ModelKind::Mlp) {
        const DenseLayer& l1 = model.layers[0];
        const DenseLayer& l2 = model.layers[1];
        auto& g1 = grads.layers[0].second;
        auto& g2 = grads.layers[1].second;
        std::vector<double> hidden(l1.out_dim);
        std::vector<double> dhidden(l1.out_dim);
        for (std::size_t i = 0; i < N; ++i) {
            const double* x = batch.row(i);
            affine_forward(l1, x, hidden.data());
            for (double& h : hidden) h = std::tanh(h);
            logits.resize(l2.out_dim);
            affine_forward(l2, hidden.data(), logits.data());
            total_loss += head_error(model, batch, i, logits, dz);

            for (std::size_t r = 0; r < l2.out_dim; ++r) {
                double* grow = g2.data() + r * l2.in_dim;
                for (std::size_t c = 0; c < l2.in_dim; ++c) grow[c] += dz[r] * hidden[c];
                g2[l2.weights.size() + r] += dz[r];
            }
            for (std::size_t c = 0; c < l1.out_dim; ++c) {
                double acc = 0.0;
                for (std::size_t r = 0; r < l2.out_dim; ++r) {
                    acc += l2.weights[r * l2.in_dim + c] * dz[r];
                }
                dhidden[c] = acc * (1.0 - hidden[c] * hidden[c]);
            }
            for (std::size_t r = 0; r < l1.out_dim; ++r) {
                double* grow = g1.data() + r * l1.in_dim;
                for (std::size_t c = 0; c < l1.in_dim; ++c) grow[c] += dhidden[r] * x[c];
                g1[l1.weights.size() + r] += dhidden[r];
            }
        }
    } else {
        const DenseLayer& l = model.layers[0];
        auto& g = grads.layers[0].second;
        for (std::size_t i = 0; i < N; ++i) {
            const double* x = batch.row(i);
            affine_forward(l, x, logits.data());
            total_loss += head_error(model, batch, i, logits, dz);
            for (std::size_t r = 0; r < l.out_dim; ++r) {
                double* grow = g.data() + r * l.in_dim;
                for (std::size_t c = 0; c < l.in_dim; ++c) grow[c] += dz[r] * x[c];
                g[l.weights.size() + r] += dz[r];
            }
        }
    }

    for (auto& [name, values] : grads.layers) {
        for (double& v : values) v *= inv_n;
    }
    return {std::move(grads), total_loss * inv_n};
}

Model sgd_step(const Model& model, const GradientSet& grads, double lr) {
    if (grads.layers.size() != model.layers.size()) {
        throw ContractError("sgd_step: gradient layer count mismatch");
    }
    Model out = model;
    for (std::size_t li = 0; li < out.layers.size(); ++li) {
        DenseLayer& l = out.layers[li];
        const auto& [gname, gvalues] = grads.layers[li];
        if (gname != l.name || gvalues.size() != l.param_count()) {
            throw ContractError("sgd_step: layout mismatch at layer '" + l.name + "'");
        }
        for (std::size_t i = 0; i < l.weights.size(); ++i) l.weights[i] -= lr * gvalues[i];
        for (std::size_t i = 0; i < l.bias.size(); ++i) {
            l.bias[i] -= lr * gvalues[l.weights.size() + i];
        }
    }
    return out;
}

EvalResult evaluate(const Model& model, const Dataset& data) {
    check_batch(model, data, "evaluate");
    const std::size_t N = data.n_examples;
    std::vector<double> logits(model.output_dim);
    std::vector<double> hidden;
    std::vector<double> dz;
    std::size_t correct = 0;
    double total_loss = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double* x = data.row(i);
        if (model.kind == ModelKind::Mlp) {
            const DenseLayer& l1 = model.layers[0];
            hidden.resize(l1.out_dim);
            affine_forward(l1, x, hidden.data());
            for (double& h : hidden) h = std::tanh(h);
            affine_forward(model.layers[1], hidden.data(), logits.data());
        } else {
            affine_forward(model.layers[0], x, logits.data());
        }
        total_loss += head_error(model, data, i, logits, dz);
        if (model.output_dim == 1) {
            if (std::round(logits[0]) == data.labels[i]) ++correct;
        } else if (static_cast<double>(argmax(logits)) == data.labels[i]) {
            ++correct;
        }
    }
    return {static_cast<double>(correct) / static_cast<double>(N),
            total_loss / static_cast<double>(N)};
}

GradientSet parameters_as_gradient(const Model& model) {
    GradientSet out;
    for (const auto& l : model.layers) {
        std::vector<double> v;
        v.reserve(l.param_count());
        v.insert(v.end(), l.weights.begin(), l.weights.end());
        v.insert(v.end(), l.bias.begin(), l.bias.end());
        out.layers.emplace_back(l.name, std::move(v));
    }
    return out;
}

Model model_from_parameters(const Model& prototype, const GradientSet& params) {
    Model out = prototype;
    if (params.layers.size() != out.layers.size()) {
        throw ContractError("model_from_parameters: layer count mismatch");
    }
    for (std::size_t li = 0; li < out.layers.size(); ++li) {
        DenseLayer& l = out.layers[li];
        const auto& v = params.layers[li].second;
        if (v.size() != l.param_count()) {
            throw ContractError("model_from_parameters: size mismatch at '" + l.name + "'");
        }
        std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(l.weights.size()),
                  l.weights.begin());
        std::copy(v.begin() + static_cast<std::ptrdiff_t>(l.weights.size()), v.end(),
                  l.bias.begin());
    }
    return out;
}

}  // namespace cdpa
