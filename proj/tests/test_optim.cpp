#include "momentmatch/optim.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace momentmatch;

namespace {

/// One-parameter "network" so optimizer updates can be simulated by hand.
NetworkState scalar_state(double value) {
    std::vector<LayerSpec> specs = {
        {1, 1, Activation::Sigmoid, 0.0, 1.0, true},
        {1, 2, Activation::Softmax, 0.0, 1.0, false},
    };
    auto state = init_network(specs, 0);
    state.layers[0].weights(0, 0) = value;
    state.layers[0].bias.setZero();
    state.layers[1].weights.setZero();
    state.layers[1].bias.setZero();
    return state;
}

Gradients scalar_grad(const NetworkState& state, double g) {
    Gradients grads = Gradients::zeros_like(state);
    grads.weights[0](0, 0) = g;
    return grads;
}

double param(const NetworkState& state) { return state.layers[0].weights(0, 0); }

}  // namespace

TEST_CASE("sgd single step") {
    auto state = scalar_state(1.0);
    auto opt = Optimizer::sgd(0.1);
    opt.step(state, scalar_grad(state, 2.0));
    CHECK(param(state) == Catch::Approx(0.8).margin(1e-15));
}

TEST_CASE("adagrad first step with zero eps") {
    auto state = scalar_state(0.0);
    auto opt = Optimizer::adagrad(0.1, 0.0);
    opt.step(state, scalar_grad(state, 3.0));
    // acc = 9, update = -0.1 * 3 / 3 = -0.1
    CHECK(param(state) == Catch::Approx(-0.1).margin(1e-15));
}

TEST_CASE("adadelta first step") {
    auto state = scalar_state(0.0);
    auto opt = Optimizer::adadelta(0.95, 1e-6);
    opt.step(state, scalar_grad(state, 1.0));
    double expect = -std::sqrt(1e-6 / (0.05 + 1e-6));
    CHECK(param(state) == Catch::Approx(expect).margin(1e-10));
}

TEST_CASE("adadelta first-step magnitude is insensitive to gradient scale") {
    std::vector<double> gs = {0.1, 1.0, 10.0};
    std::vector<double> deltas;
    for (double g : gs) {
        auto state = scalar_state(0.0);
        auto opt = Optimizer::adadelta(0.95, 1e-7);
        opt.step(state, scalar_grad(state, g));
        deltas.push_back(std::abs(param(state)));
    }
    for (size_t i = 1; i < deltas.size(); ++i) {
        CHECK(std::abs(deltas[i] - deltas[0]) / deltas[0] < 0.01);
    }
}

TEST_CASE("adagrad steps shrink monotonically under constant gradient") {
    auto state = scalar_state(0.0);
    auto opt = Optimizer::adagrad(0.1, 1e-7);
    double prev = param(state);
    double prev_update = 1e9;
    for (int t = 0; t < 20; ++t) {
        opt.step(state, scalar_grad(state, 2.0));
        double update = std::abs(param(state) - prev);
        CHECK(update < prev_update);
        prev_update = update;
        prev = param(state);
    }
}

TEST_CASE("optimizers are deterministic") {
    for (auto make : {+[] { return Optimizer::sgd(0.05); }, +[] { return Optimizer::adagrad(); },
                      +[] { return Optimizer::adadelta(); }}) {
        auto s1 = scalar_state(1.0);
        auto s2 = scalar_state(1.0);
        auto o1 = make();
        auto o2 = make();
        for (int t = 0; t < 5; ++t) {
            o1.step(s1, scalar_grad(s1, 0.5 + t));
            o2.step(s2, scalar_grad(s2, 0.5 + t));
        }
        CHECK(param(s1) == param(s2));
    }
}

TEST_CASE("all optimizers minimize the scalar quadratic") {
    // f(p) = p^2 / 2 so the gradient is p itself.
    for (auto make : {+[] { return Optimizer::sgd(0.1); },
                      +[] { return Optimizer::adagrad(0.1, 1e-7); },
                      +[] { return Optimizer::adadelta(); }}) {
        auto state = scalar_state(1.0);
        auto opt = make();
        int steps = 0;
        while (std::abs(param(state)) >= 1e-3 && steps < 10000) {
            opt.step(state, scalar_grad(state, param(state)));
            ++steps;
        }
        INFO("steps = " << steps);
        CHECK(std::abs(param(state)) < 1e-3);
    }
}

TEST_CASE("step rejects non-finite gradients") {
    auto state = scalar_state(0.0);
    auto opt = Optimizer::sgd(0.1);
    CHECK_THROWS_AS(opt.step(state, scalar_grad(state, std::nan(""))), std::invalid_argument);
}

TEST_CASE("step rejects shape mismatches") {
    auto state = scalar_state(0.0);
    auto opt = Optimizer::sgd(0.1);
    Gradients bad = Gradients::zeros_like(state);
    bad.weights[0] = Matrix::Zero(2, 2);
    CHECK_THROWS_AS(opt.step(state, bad), std::invalid_argument);
}
