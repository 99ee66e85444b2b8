#pragma once

#include "momentmatch/network.hpp"

#include <stdexcept>
#include <vector>

namespace momentmatch {

/// First-order optimizers: Adagrad (sparse data), Adadelta (non-sparse)
/// and plain SGD as a control. Accumulators mirror parameter shapes and
/// start at zero.
class Optimizer {
public:
    enum class Kind { Sgd, Adagrad, Adadelta };

    static Optimizer sgd(double lr) { return Optimizer(Kind::Sgd, lr, 0.0, 0.0); }
    static Optimizer adagrad(double lr = 0.01, double eps = 1e-7) {
        return Optimizer(Kind::Adagrad, lr, 0.0, eps);
    }
    static Optimizer adadelta(double rho = 0.95, double eps = 1e-7) {
        return Optimizer(Kind::Adadelta, 0.0, rho, eps);
    }
    static Optimizer from_name(const std::string& name) {
        if (name == "sgd") return sgd(0.1);
        if (name == "adagrad") return adagrad();
        if (name == "adadelta") return adadelta();
        throw std::invalid_argument("unknown optimizer '" + name + "'");
    }

    Kind kind() const { return kind_; }

    void step(NetworkState& state, const Gradients& grads) {
        if (grads.weights.size() != state.layers.size()) {
            throw std::invalid_argument("optimizer step: gradient/parameter layer count mismatch");
        }
        ensure_state(state);
        for (size_t l = 0; l < state.layers.size(); ++l) {
            auto& layer = state.layers[l];
            if (grads.weights[l].rows() != layer.weights.rows() ||
                grads.weights[l].cols() != layer.weights.cols() ||
                grads.biases[l].size() != layer.bias.size()) {
                throw std::invalid_argument("optimizer step: shape mismatch at layer " +
                                            std::to_string(l));
            }
            if (!grads.weights[l].allFinite() || !grads.biases[l].allFinite()) {
                throw std::invalid_argument("optimizer step: non-finite gradient at layer " +
                                            std::to_string(l));
            }
            update(layer.weights, grads.weights[l], acc_w_[l], acc2_w_[l]);
            update_vec(layer.bias, grads.biases[l], acc_b_[l], acc2_b_[l]);
        }
    }

private:
    Optimizer(Kind kind, double lr, double rho, double eps)
        : kind_(kind), lr_(lr), rho_(rho), eps_(eps) {}

    void ensure_state(const NetworkState& state) {
        if (!acc_w_.empty()) return;
        for (const auto& layer : state.layers) {
            acc_w_.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
            acc2_w_.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
            acc_b_.push_back(Vector::Zero(layer.bias.size()));
            acc2_b_.push_back(Vector::Zero(layer.bias.size()));
        }
    }

    template <typename P, typename G, typename A>
    void apply(P& p, const G& g, A& acc, A& acc2) {
        switch (kind_) {
            case Kind::Sgd:
                p.array() -= lr_ * g.array();
                break;
            case Kind::Adagrad:
                acc.array() += g.array().square();
                p.array() -= lr_ * g.array() / (acc.array().sqrt() + eps_);
                break;
            case Kind::Adadelta: {
                acc.array() = rho_ * acc.array() + (1.0 - rho_) * g.array().square();
                auto delta =
                    (-(acc2.array() + eps_).sqrt() / (acc.array() + eps_).sqrt() * g.array())
                        .eval();
                acc2.array() = rho_ * acc2.array() + (1.0 - rho_) * delta.square();
                p.array() += delta;
                break;
            }
        }
    }

    void update(Matrix& p, const Matrix& g, Matrix& acc, Matrix& acc2) { apply(p, g, acc, acc2); }
    void update_vec(Vector& p, const Vector& g, Vector& acc, Vector& acc2) {
        apply(p, g, acc, acc2);
    }

    Kind kind_;
    double lr_;
    double rho_;
    double eps_;
    std::vector<Matrix> acc_w_, acc2_w_;
    std::vector<Vector> acc_b_, acc2_b_;
};

}  // namespace momentmatch
