#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sqlab/nn.hpp"

using namespace sqlab;
using namespace sqlab::nn;
using Catch::Approx;

namespace {

NetworkModel zeroed(std::vector<LayerSpec> layers) {
    Rng rng(0);
    NetworkModel m = make_network(std::move(layers), rng);
    std::fill(m.parameters.begin(), m.parameters.end(), 0.0);
    return m;
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("dense forward with identity weights is the identity") {
    NetworkModel m = zeroed({dense(2, 2, Activation::linear)});
    m.parameters[0] = 1.0;  // W[0][0]
    m.parameters[3] = 1.0;  // W[1][1]
    const std::vector<double> out = forward(m, std::vector<double>{1.0, 2.0});
    REQUIRE(out[0] == 1.0);
    REQUIRE(out[1] == 2.0);
}

TEST_CASE("dense forward with zero weights and sigmoid gives 0.5 everywhere") {
    NetworkModel m = zeroed({dense(3, 4, Activation::sigmoid)});
    const std::vector<double> out = forward(m, std::vector<double>{-1.0, 7.0, 0.25});
    for (double v : out) REQUIRE(v == 0.5);
}

TEST_CASE("3x3 valid conv with all-ones kernel sums the input") {
    NetworkModel m = zeroed({conv2d(3, 3, 1, 1, 3, Padding::valid, Activation::linear)});
    for (int i = 0; i < 9; ++i) m.parameters[i] = 1.0;  // kernel; bias stays 0
    std::vector<double> input(9);
    double sum = 0.0;
    for (int i = 0; i < 9; ++i) {
        input[i] = 0.5 * i - 1.0;
        sum += input[i];
    }
    const std::vector<double> out = forward(m, input);
    REQUIRE(out.size() == 1);
    REQUIRE(out[0] == Approx(sum).epsilon(1e-12));
}

TEST_CASE("forward rejects shape mismatch") {
    NetworkModel m = zeroed({dense(3, 2, Activation::linear)});
    REQUIRE_THROWS_AS(forward(m, std::vector<double>{1.0, 2.0}), std::invalid_argument);
    Workspace ws;
    forward(m, std::vector<double>{1.0, 2.0, 3.0}, ws);
    std::vector<double> grad(m.parameter_count(), 0.0);
    REQUIRE_THROWS_AS(backward_into(m, ws, std::vector<double>{1.0, 2.0, 3.0}, grad),
                      std::invalid_argument);
}

TEST_CASE("zero output gradient gives zero parameter gradient") {
    Rng rng(7);
    NetworkModel m = make_network({dense(4, 3, Activation::sigmoid)}, rng);
    const std::vector<double> g =
        backward(m, std::vector<double>{0.3, -0.2, 0.9, 0.0}, std::vector<double>{0.0, 0.0, 0.0});
    for (double v : g) REQUIRE(v == 0.0);
}

TEST_CASE("scalar linear model y = w*x has gradient x") {
    NetworkModel m = zeroed({dense(1, 1, Activation::linear, false)});
    m.parameters[0] = 2.5;
    const std::vector<double> g =
        backward(m, std::vector<double>{3.0}, std::vector<double>{1.0});
    REQUIRE(g.size() == 1);
    REQUIRE(g[0] == 3.0);
}

TEST_CASE("backward matches central finite differences for every layer kind") {
    struct Probe {
        std::vector<LayerSpec> layers;
        int input_size;
    };
    const std::vector<Probe> probes = {
        {{dense(5, 3, Activation::linear)}, 5},
        {{dense(4, 4, Activation::relu)}, 4},
        {{dense(3, 2, Activation::sigmoid)}, 3},
        {{dense(4, 3, Activation::softmax)}, 4},
        {{dense(5, 1, Activation::sigmoid, false)}, 5},
        {{conv2d(3, 3, 2, 3, 3, Padding::valid, Activation::linear)}, 18},
        {{conv2d(3, 3, 4, 2, 3, Padding::same, Activation::relu),
          conv2d(3, 3, 2, 3, 3, Padding::valid, Activation::linear)},
         36},
        {{conv2d(3, 3, 4, 3, 3, Padding::valid, Activation::relu),
          dense(3, 4, Activation::relu), dense(4, 2, Activation::sigmoid)},
         36},
    };
    Rng rng(1234);
    for (const Probe& probe : probes) {
        for (int trial = 0; trial < 10; ++trial) {
            Rng model_rng(rng.next_u64());
            NetworkModel m = make_network(probe.layers, model_rng);
            std::vector<double> input(probe.input_size);
            for (double& x : input) x = rng.uniform(-1.0, 1.0);
            std::vector<double> og(m.layers.back().output_shape.count());
            for (double& x : og) x = rng.uniform(-1.0, 1.0);

            const std::vector<double> analytic = backward(m, input, og);
            const std::vector<double> fd =
                finite_difference_parameter_gradient(m, input, og, 1e-5);
            for (std::size_t i = 0; i < analytic.size(); ++i)
                REQUIRE(rel_err(analytic[i], fd[i]) < 1e-4);
        }
    }
}

TEST_CASE("forward is pure: identical inputs give bitwise-identical outputs") {
    Rng rng(99);
    NetworkModel m = make_network(
        {conv2d(3, 3, 4, 2, 3, Padding::same, Activation::relu),
         conv2d(3, 3, 2, 2, 3, Padding::valid, Activation::sigmoid)},
        rng);
    std::vector<double> input(36);
    for (double& x : input) x = rng.uniform(-1.0, 1.0);
    const std::vector<double> a = forward(m, input);
    const std::vector<double> b = forward(m, input);
    REQUIRE(a == b);
}

TEST_CASE("softmax sums to one, sigmoid stays strictly inside (0,1)") {
    Rng rng(5);
    NetworkModel sm = make_network({dense(6, 6, Activation::softmax)}, rng);
    std::vector<double> input(6);
    for (int trial = 0; trial < 20; ++trial) {
        for (double& x : input) x = rng.uniform(-5.0, 5.0);
        const std::vector<double> out = forward(sm, input);
        double sum = 0.0;
        for (double v : out) sum += v;
        REQUIRE(std::abs(sum - 1.0) <= 1e-9);
    }

    NetworkModel sig = zeroed({dense(1, 1, Activation::sigmoid)});
    for (double w : {-1000.0, -40.0, 0.0, 40.0, 1000.0}) {
        sig.parameters[0] = w;
        const double p = forward(sig, std::vector<double>{1.0})[0];
        REQUIRE(p > 0.0);
        REQUIRE(p < 1.0);
    }
}

TEST_CASE("mse loss: exact prediction gives zero loss and gradient") {
    const std::vector<double> p = {0.5, -2.0, 3.25};
    const LossResult r = loss_and_gradient(p, p, LossKind::mse);
    REQUIRE(r.value == 0.0);
    for (double g : r.gradient) REQUIRE(g == 0.0);
}

TEST_CASE("bce of 0.5 against target 1 is ln 2") {
    const LossResult r =
        loss_and_gradient(std::vector<double>{0.5}, std::vector<double>{1.0}, LossKind::bce);
    REQUIRE(r.value == Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("mse of [2] vs [0] is 4 with gradient [4]") {
    const LossResult r =
        loss_and_gradient(std::vector<double>{2.0}, std::vector<double>{0.0}, LossKind::mse);
    REQUIRE(r.value == Approx(4.0));
    REQUIRE(r.gradient[0] == Approx(4.0));
}

TEST_CASE("loss errors: shape mismatch and bce domain") {
    REQUIRE_THROWS_AS(loss_and_gradient(std::vector<double>{1.0},
                                        std::vector<double>{1.0, 2.0}, LossKind::mse),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(loss_and_gradient(std::vector<double>{1.2},
                                        std::vector<double>{1.0}, LossKind::bce),
                      std::domain_error);
    REQUIRE_THROWS_AS(loss_and_gradient(std::vector<double>{0.0},
                                        std::vector<double>{0.0}, LossKind::bce),
                      std::domain_error);
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(11);
    for (LossKind kind : {LossKind::mse, LossKind::bce}) {
        std::vector<double> p(6), t(6);
        for (double& x : p) x = rng.uniform(0.05, 0.95);
        for (double& x : t) x = kind == LossKind::bce ? (rng.bernoulli(0.5) ? 1.0 : 0.0)
                                                      : rng.uniform(-1.0, 1.0);
        const LossResult r = loss_and_gradient(p, t, kind);
        for (std::size_t i = 0; i < p.size(); ++i) {
            std::vector<double> hi = p, lo = p;
            hi[i] += 1e-6;
            lo[i] -= 1e-6;
            const double fd = (loss_and_gradient(hi, t, kind).value -
                               loss_and_gradient(lo, t, kind).value) / 2e-6;
            REQUIRE(rel_err(r.gradient[i], fd) < 1e-4);
        }
    }
}

TEST_CASE("optimizer: zero gradient leaves parameters unchanged") {
    Rng rng(3);
    NetworkModel m = make_network({dense(3, 2, Activation::linear)}, rng);
    const std::vector<double> before = m.parameters;
    const std::vector<double> zeros(m.parameter_count(), 0.0);

    OptimizerState sgd_state = make_sgd(0.1);
    optimizer_step(m, sgd_state, zeros, Direction::ascend);
    REQUIRE(m.parameters == before);

    OptimizerState adam_state = make_adam(0.1, m.parameter_count());
    optimizer_step(m, adam_state, zeros, Direction::descend);
    REQUIRE(m.parameters == before);
    REQUIRE(adam_state.step_count == 1);
}

TEST_CASE("sgd descend: 1.0 with gradient 2.0 and step 0.005 gives 0.99") {
    NetworkModel m = zeroed({dense(1, 1, Activation::linear, false)});
    m.parameters[0] = 1.0;
    OptimizerState st = make_sgd(0.005);
    optimizer_step(m, st, std::vector<double>{2.0}, Direction::descend);
    REQUIRE(m.parameters[0] == Approx(0.99).epsilon(1e-15));
}

TEST_CASE("adam first update from zero moments has magnitude ~ learning rate") {
    NetworkModel m = zeroed({dense(1, 1, Activation::linear, false)});
    OptimizerState st = make_adam(0.003, 1);
    optimizer_step(m, st, std::vector<double>{1.0}, Direction::descend);
    REQUIRE(m.parameters[0] == Approx(-0.003).epsilon(1e-6));
}

TEST_CASE("optimizer rejects gradient length mismatch") {
    NetworkModel m = zeroed({dense(2, 1, Activation::linear)});
    OptimizerState st = make_sgd(0.1);
    REQUIRE_THROWS_AS(optimizer_step(m, st, std::vector<double>{1.0}, Direction::ascend),
                      std::invalid_argument);
}

TEST_CASE("sgd ascend then descend with the same gradient restores parameters") {
    Rng rng(42);
    NetworkModel m = make_network({dense(4, 4, Activation::relu), dense(4, 2, Activation::linear)}, rng);
    const std::vector<double> before = m.parameters;
    std::vector<double> g(m.parameter_count());
    for (double& x : g) x = rng.uniform(-3.0, 3.0);
    OptimizerState st = make_sgd(0.005);
    optimizer_step(m, st, g, Direction::ascend);
    optimizer_step(m, st, g, Direction::descend);
    for (int i = 0; i < m.parameter_count(); ++i)
        REQUIRE(std::abs(m.parameters[i] - before[i]) <= 1e-12);
}
