#pragma once

#include "momentmatch/discrepancy.hpp"
#include "momentmatch/samples.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace momentmatch {

enum class Activation { Sigmoid, Tanh, Softmax, ClippedRelu };

struct LayerSpec {
    Eigen::Index in_dim;
    Eigen::Index out_dim;
    Activation activation;
    double clip_lo = 0.0;  // clipped_relu only
    double clip_hi = 1.0;
    bool regularized = false;  // the attachment point H

    Bounds activation_bounds() const {
        switch (activation) {
            case Activation::Sigmoid: return Bounds(0.0, 1.0);
            case Activation::Tanh: return Bounds(-1.0, 1.0);
            case Activation::ClippedRelu: return Bounds(clip_lo, clip_hi);
            case Activation::Softmax: return Bounds(0.0, 1.0);
        }
        throw std::logic_error("activation_bounds: unreachable");
    }
};

/// Network parameters: per-layer weights (out_dim x in_dim) and biases.
struct NetworkState {
    struct Layer {
        Matrix weights;
        Vector bias;
        LayerSpec spec;
    };
    std::vector<Layer> layers;
    std::uint64_t rng_seed = 0;

    int regularized_layer() const {
        for (size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].spec.regularized) return static_cast<int>(i);
        }
        return -1;
    }
};

/// Per-layer intermediates of one forward pass plus the hidden activations
/// at the attachment layer H, wrapped as a bounded Sample.
struct ForwardTrace {
    std::vector<Matrix> pre_activations;  // batch x out_dim per layer
    std::vector<Matrix> activations;
    int regularized_layer = -1;

    const Matrix& output() const { return activations.back(); }

    Sample hidden_activations_at_h() const {
        if (regularized_layer < 0) throw std::logic_error("no regularized layer in trace");
        return Sample(activations[static_cast<size_t>(regularized_layer)], h_bounds);
    }

    Bounds h_bounds{0.0, 1.0};
};

namespace detail {

inline void validate_specs(const std::vector<LayerSpec>& specs) {
    if (specs.empty()) throw std::invalid_argument("network: no layers");
    int reg_count = 0;
    for (size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].in_dim < 1 || specs[i].out_dim < 1) {
            throw std::invalid_argument("network: layer dimensions must be >= 1");
        }
        if (i > 0 && specs[i].in_dim != specs[i - 1].out_dim) {
            throw std::invalid_argument("network: layer dimension chain broken at layer " +
                                        std::to_string(i));
        }
        if (specs[i].activation == Activation::Softmax && i + 1 != specs.size()) {
            throw std::invalid_argument("network: softmax permitted only on the final layer");
        }
        if (specs[i].regularized) {
            if (i + 1 == specs.size()) {
                throw std::invalid_argument("network: regularized layer must be hidden");
            }
            ++reg_count;
        }
    }
    if (reg_count != 1) {
        throw std::invalid_argument("network: exactly one hidden layer must be regularized");
    }
}

inline Matrix apply_activation(const LayerSpec& spec, const Matrix& z) {
    switch (spec.activation) {
        case Activation::Sigmoid:
            return (1.0 / (1.0 + (-z.array()).exp())).matrix();
        case Activation::Tanh:
            return z.array().tanh().matrix();
        case Activation::ClippedRelu:
            return z.array().max(spec.clip_lo).min(spec.clip_hi).matrix();
        case Activation::Softmax: {
            Matrix out(z.rows(), z.cols());
            for (Eigen::Index i = 0; i < z.rows(); ++i) {
                Vector row = z.row(i);
                double mx = row.maxCoeff();
                Vector e = (row.array() - mx).exp();
                out.row(i) = (e / e.sum()).transpose();
            }
            return out;
        }
    }
    throw std::logic_error("apply_activation: unreachable");
}

/// Elementwise derivative da/dz given pre-activation z and activation a.
/// Softmax is handled jointly with cross-entropy, never through here.
inline Matrix activation_derivative(const LayerSpec& spec, const Matrix& z, const Matrix& a) {
    switch (spec.activation) {
        case Activation::Sigmoid:
            return (a.array() * (1.0 - a.array())).matrix();
        case Activation::Tanh:
            return (1.0 - a.array().square()).matrix();
        case Activation::ClippedRelu:
            return ((z.array() > spec.clip_lo) && (z.array() < spec.clip_hi))
                .cast<double>()
                .matrix();
        case Activation::Softmax:
            throw std::logic_error("softmax derivative is fused with cross-entropy");
    }
    throw std::logic_error("activation_derivative: unreachable");
}

}  // namespace detail

/// Initialize weights uniformly in [-s, s] with s = sqrt(6/(in+out)),
/// biases zero. Deterministic given the seed.
inline NetworkState init_network(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
    detail::validate_specs(specs);
    std::mt19937_64 rng(seed);
    NetworkState state;
    state.rng_seed = seed;
    for (const auto& spec : specs) {
        double s = std::sqrt(6.0 / static_cast<double>(spec.in_dim + spec.out_dim));
        std::uniform_real_distribution<double> dist(-s, s);
        Matrix w(spec.out_dim, spec.in_dim);
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
        }
        state.layers.push_back({std::move(w), Vector::Zero(spec.out_dim), spec});
    }
    return state;
}

inline ForwardTrace forward(const NetworkState& state, const Matrix& inputs) {
    if (inputs.cols() != state.layers.front().spec.in_dim) {
        throw std::invalid_argument("forward: input dimension mismatch");
    }
    if (!inputs.allFinite()) throw std::invalid_argument("forward: non-finite input");

    ForwardTrace trace;
    trace.regularized_layer = state.regularized_layer();
    Matrix a = inputs;
    for (size_t i = 0; i < state.layers.size(); ++i) {
        const auto& layer = state.layers[i];
        Matrix z = a * layer.weights.transpose();
        z.rowwise() += layer.bias.transpose();
        a = detail::apply_activation(layer.spec, z);
        trace.pre_activations.push_back(z);
        trace.activations.push_back(a);
        if (static_cast<int>(i) == trace.regularized_layer) {
            trace.h_bounds = layer.spec.activation_bounds();
        }
    }
    return trace;
}

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    static Gradients zeros_like(const NetworkState& state) {
        Gradients g;
        for (const auto& layer : state.layers) {
            g.weights.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
            g.biases.push_back(Vector::Zero(layer.bias.size()));
        }
        return g;
    }
};

struct LossResult {
    double loss = 0.0;
    double task_loss = 0.0;
    double reg_value = 0.0;
    Gradients grads;
};

namespace detail {

/// Backpropagate from a delta (dL/dActivation) at layer `start` down to the
/// input, accumulating parameter gradients.
inline void backprop_from(const NetworkState& state, const ForwardTrace& trace,
                          const Matrix& inputs, Matrix delta_act, int start, Gradients& grads) {
    Matrix delta = std::move(delta_act);
    for (int l = start; l >= 0; --l) {
        const auto& layer = state.layers[static_cast<size_t>(l)];
        Matrix dz = delta.array() * detail::activation_derivative(
                                        layer.spec, trace.pre_activations[static_cast<size_t>(l)],
                                        trace.activations[static_cast<size_t>(l)])
                                        .array();
        const Matrix& below = (l == 0) ? inputs : trace.activations[static_cast<size_t>(l - 1)];
        grads.weights[static_cast<size_t>(l)] += dz.transpose() * below;
        grads.biases[static_cast<size_t>(l)] += dz.colwise().sum().transpose();
        if (l > 0) delta = dz * layer.weights;
    }
}

/// Backprop starting at the output of a softmax + mean cross-entropy head:
/// dz at the last layer is (softmax - y)/batch.
inline void backprop_cross_entropy(const NetworkState& state, const ForwardTrace& trace,
                                   const Matrix& inputs, const Matrix& labels, Gradients& grads) {
    int last = static_cast<int>(state.layers.size()) - 1;
    Matrix dz = (trace.output() - labels) / static_cast<double>(labels.rows());
    const Matrix& below =
        (last == 0) ? inputs : trace.activations[static_cast<size_t>(last - 1)];
    grads.weights[static_cast<size_t>(last)] += dz.transpose() * below;
    grads.biases[static_cast<size_t>(last)] += dz.colwise().sum().transpose();
    if (last > 0) {
        Matrix delta = dz * state.layers[static_cast<size_t>(last)].weights;
        backprop_from(state, trace, inputs, std::move(delta), last - 1, grads);
    }
}

}  // namespace detail

/// Mean cross-entropy of softmax outputs against one-hot labels, with the
/// log clamped at 1e-12.
inline double cross_entropy(const Matrix& outputs, const Matrix& labels) {
    double loss = 0.0;
    for (Eigen::Index i = 0; i < outputs.rows(); ++i) {
        for (Eigen::Index j = 0; j < outputs.cols(); ++j) {
            if (labels(i, j) != 0.0) {
                loss -= labels(i, j) * std::log(std::max(outputs(i, j), 1e-12));
            }
        }
    }
    return loss / static_cast<double>(outputs.rows());
}

/// Regularized objective: mean source cross-entropy plus lambda times the
/// discrepancy between source and target hidden activations at layer H.
/// The regularizer gradient flows through both branches into the shared
/// parameters.
inline LossResult loss_and_grad(const NetworkState& state, const LabeledSample& source_batch,
                                const Matrix& target_inputs, const DiscrepancySpec& spec) {
    if (source_batch.size() == 0) throw std::invalid_argument("loss_and_grad: empty source batch");
    if (spec.lambda > 0 && target_inputs.rows() == 0) {
        throw std::invalid_argument("loss_and_grad: empty target batch with lambda > 0");
    }
    if (state.layers.back().spec.activation != Activation::Softmax) {
        throw std::invalid_argument("loss_and_grad: final layer must be softmax");
    }

    LossResult result;
    result.grads = Gradients::zeros_like(state);

    ForwardTrace src_trace = forward(state, source_batch.inputs);
    result.task_loss = cross_entropy(src_trace.output(), source_batch.labels);
    detail::backprop_cross_entropy(state, src_trace, source_batch.inputs, source_batch.labels,
                                   result.grads);

    if (spec.lambda > 0) {
        ForwardTrace tgt_trace = forward(state, target_inputs);
        int h = src_trace.regularized_layer;
        Sample src_h = src_trace.hidden_activations_at_h();
        Sample tgt_h = tgt_trace.hidden_activations_at_h();

        DiscrepancyValue d = evaluate(spec, src_h, tgt_h);
        result.reg_value = d.value;

        Matrix g_src = spec.lambda * evaluate_grad(spec, src_h, tgt_h);
        Matrix g_tgt = spec.lambda * evaluate_grad(spec, tgt_h, src_h);  // d is symmetric
        detail::backprop_from(state, src_trace, source_batch.inputs, std::move(g_src), h,
                              result.grads);
        detail::backprop_from(state, tgt_trace, target_inputs, std::move(g_tgt), h, result.grads);
    } else if (target_inputs.rows() > 0) {
        // Diagnostic value only; no gradient contribution.
        ForwardTrace tgt_trace = forward(state, target_inputs);
        result.reg_value =
            evaluate(spec, src_trace.hidden_activations_at_h(), tgt_trace.hidden_activations_at_h())
                .value;
    }

    result.loss = result.task_loss + spec.lambda * result.reg_value;
    return result;
}

/// Argmax class per row, ties broken toward the lowest class index.
inline std::vector<int> predict(const NetworkState& state, const Matrix& inputs) {
    ForwardTrace trace = forward(state, inputs);
    const Matrix& out = trace.output();
    std::vector<int> classes(static_cast<size_t>(out.rows()));
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        int best = 0;
        for (Eigen::Index j = 1; j < out.cols(); ++j) {
            if (out(i, j) > out(i, best)) best = static_cast<int>(j);
        }
        classes[static_cast<size_t>(i)] = best;
    }
    return classes;
}

inline double accuracy(const NetworkState& state, const LabeledSample& data) {
    auto preds = predict(state, data.inputs);
    Eigen::Index correct = 0;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (preds[static_cast<size_t>(i)] == data.class_of(i)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

// -- checkpoint serialization --------------------------------------------

namespace detail {

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Tanh: return "tanh";
        case Activation::Softmax: return "softmax";
        case Activation::ClippedRelu: return "clipped_relu";
    }
    throw std::logic_error("activation_name: unreachable");
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "tanh") return Activation::Tanh;
    if (s == "softmax") return Activation::Softmax;
    if (s == "clipped_relu") return Activation::ClippedRelu;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

}  // namespace detail

/// Checkpoint as JSON: specs, row-major weights, biases, seed. Numbers
/// round-trip bit-exactly (nlohmann serializes doubles at full precision).
inline nlohmann::json checkpoint_to_json(const NetworkState& state) {
    nlohmann::json j;
    j["rng_seed"] = state.rng_seed;
    j["layers"] = nlohmann::json::array();
    for (const auto& layer : state.layers) {
        nlohmann::json lj;
        lj["in_dim"] = layer.spec.in_dim;
        lj["out_dim"] = layer.spec.out_dim;
        lj["activation"] = detail::activation_name(layer.spec.activation);
        lj["clip_lo"] = layer.spec.clip_lo;
        lj["clip_hi"] = layer.spec.clip_hi;
        lj["regularized"] = layer.spec.regularized;
        std::vector<double> w;
        w.reserve(static_cast<size_t>(layer.weights.size()));
        for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
            for (Eigen::Index jx = 0; jx < layer.weights.cols(); ++jx) {
                w.push_back(layer.weights(i, jx));
            }
        }
        lj["weights"] = w;
        lj["bias"] = std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size());
        j["layers"].push_back(lj);
    }
    return j;
}

inline NetworkState checkpoint_from_json(const nlohmann::json& j) {
    NetworkState state;
    state.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    for (const auto& lj : j.at("layers")) {
        LayerSpec spec;
        spec.in_dim = lj.at("in_dim").get<Eigen::Index>();
        spec.out_dim = lj.at("out_dim").get<Eigen::Index>();
        spec.activation = detail::activation_from_name(lj.at("activation").get<std::string>());
        spec.clip_lo = lj.at("clip_lo").get<double>();
        spec.clip_hi = lj.at("clip_hi").get<double>();
        spec.regularized = lj.at("regularized").get<bool>();
        auto w = lj.at("weights").get<std::vector<double>>();
        auto b = lj.at("bias").get<std::vector<double>>();
        Matrix weights(spec.out_dim, spec.in_dim);
        size_t idx = 0;
        for (Eigen::Index i = 0; i < weights.rows(); ++i) {
            for (Eigen::Index jx = 0; jx < weights.cols(); ++jx) weights(i, jx) = w[idx++];
        }
        Vector bias = Eigen::Map<Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
        state.layers.push_back({std::move(weights), std::move(bias), spec});
    }
    return state;
}

inline void save_checkpoint(const NetworkState& state, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << checkpoint_to_json(state).dump(2) << "\n";
}

inline NetworkState load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return checkpoint_from_json(j);
}

}  // namespace momentmatch
