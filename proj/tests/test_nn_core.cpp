#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "advparams/advparams.hpp"
#include "oracles.hpp"

using namespace advparams;

namespace {

Batch single(const std::vector<float>& x, int label, std::vector<int> shape = {}) {
    if (shape.empty()) shape = {static_cast<int>(x.size())};
    std::vector<int> full = {1};
    full.insert(full.end(), shape.begin(), shape.end());
    return Batch{Tensor(full, x), {label}};
}

Network mlp(std::vector<int> dims, std::uint64_t seed) {
    Network net;
    net.name = "mlp";
    net.input_shape = {dims.front()};
    net.class_count = dims.back();
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        net.layers.push_back(dense(dims[i], dims[i + 1]));
        if (i + 2 < dims.size()) net.layers.push_back(relu());
    }
    init_params(net, seed);
    return net;
}

Batch random_batch(const Network& net, int n, std::uint64_t seed) {
    std::mt19937 rng(static_cast<std::uint32_t>(seed));
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    std::vector<int> shape = {n};
    shape.insert(shape.end(), net.input_shape.begin(), net.input_shape.end());
    Tensor x = Tensor::zeros(shape);
    for (auto& v : x.data) v = gauss(rng);
    std::uniform_int_distribution<int> lab(0, net.class_count - 1);
    std::vector<int> labels(n);
    for (auto& l : labels) l = lab(rng);
    return Batch{std::move(x), std::move(labels)};
}

}  // namespace

TEST_CASE("forward: identity dense") {
    Network net;
    net.input_shape = {2};
    net.class_count = 2;
    net.layers.push_back(dense(2, 2));
    net.layers[0].weights.data = {1, 0, 0, 1};
    Tensor logits = forward(net, single({1, 0}, 0));
    CHECK(logits.data[0] == 1.0f);
    CHECK(logits.data[1] == 0.0f);
}

TEST_CASE("forward: zero weights give zero logits") {
    Network net;
    net.input_shape = {5};
    net.class_count = 3;
    net.layers.push_back(dense(5, 3));
    Tensor logits = forward(net, single({0.3f, -1.2f, 4.0f, 0.0f, 2.5f}, 1));
    for (float v : logits.data) CHECK(v == 0.0f);
}

TEST_CASE("forward: matches straight-line matmul oracle") {
    Network net = mlp({4, 6, 3}, 7);
    Batch b = random_batch(net, 5, 8);
    Tensor logits = forward(net, b);
    for (int n = 0; n < 5; ++n) {
        std::vector<float> x(b.inputs.data.begin() + n * 4, b.inputs.data.begin() + (n + 1) * 4);
        auto ref = oracles::mlp_forward_naive({net.layers[0].weights.data, net.layers[2].weights.data},
                                              {net.layers[0].bias.data, net.layers[2].bias.data}, {4, 6, 3},
                                              {true, false}, x);
        for (int c = 0; c < 3; ++c) CHECK(logits.data[n * 3 + c] == doctest::Approx(ref[c]).epsilon(1e-5));
    }
}

TEST_CASE("forward: shape mismatch rejected") {
    Network net = mlp({4, 3}, 1);
    CHECK_THROWS(forward(net, single({1, 2, 3}, 0)));
}

TEST_CASE("forward: deterministic bitwise") {
    Network net = mlp({8, 16, 4}, 3);
    Batch b = random_batch(net, 10, 4);
    Tensor a = forward(net, b);
    Tensor c = forward(net, b);
    CHECK(a.data == c.data);
}

TEST_CASE("cross_entropy: uniform softmax gives ln 2") {
    Tensor logits({1, 2}, {0, 0});
    CHECK(cross_entropy(logits, {0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("cross_entropy: huge logit stays finite") {
    Tensor logits({1, 2}, {1000, 0});
    double l = cross_entropy(logits, {0});
    CHECK(std::isfinite(l));
    CHECK(l == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("cross_entropy: label out of range rejected") {
    Tensor logits({1, 2}, {0, 0});
    CHECK_THROWS(cross_entropy(logits, {2}));
    CHECK_THROWS(cross_entropy(logits, {-1}));
}

TEST_CASE("cross_entropy: matches extended-precision oracle") {
    std::mt19937 rng(11);
    std::normal_distribution<float> gauss(0.0f, 3.0f);
    const int N = 16, C = 7;
    Tensor logits = Tensor::zeros({N, C});
    for (auto& v : logits.data) v = gauss(rng);
    std::vector<int> labels(N);
    std::vector<std::vector<float>> rows(N);
    for (int n = 0; n < N; ++n) {
        labels[n] = n % C;
        rows[n].assign(logits.data.begin() + n * C, logits.data.begin() + (n + 1) * C);
    }
    long double ref = oracles::cross_entropy_naive(rows, labels);
    CHECK(cross_entropy(logits, labels) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-10));
}

TEST_CASE("cross_entropy: nonnegative always") {
    std::mt19937 rng(12);
    std::normal_distribution<float> gauss(0.0f, 10.0f);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor logits = Tensor::zeros({4, 5});
        for (auto& v : logits.data) v = gauss(rng);
        CHECK(cross_entropy(logits, {0, 1, 2, 3}) >= 0.0);
    }
}

TEST_CASE("param_gradients: closed form for Dense(1,2) softmax") {
    // logits = (w0 x + b0, w1 x + b1); dL/dw0 = (p0 - 1[y=0]) x
    Network net;
    net.input_shape = {1};
    net.class_count = 2;
    net.layers.push_back(dense(1, 2));
    net.layers[0].weights.data = {0.7f, -0.3f};
    net.layers[0].bias.data = {0.1f, -0.2f};
    float x = 1.5f;
    Batch b = single({x}, 0);
    GradientSet g = param_gradients(net, b);
    double z0 = 0.7 * x + 0.1, z1 = -0.3 * x - 0.2;
    double p0 = std::exp(z0) / (std::exp(z0) + std::exp(z1));
    CHECK(g.entries[0].wgrad.data[0] == doctest::Approx((p0 - 1.0) * x).epsilon(1e-5));
    CHECK(g.entries[0].wgrad.data[1] == doctest::Approx((1.0 - p0) * x).epsilon(1e-5));
    CHECK(g.entries[0].bgrad.data[0] == doctest::Approx(p0 - 1.0).epsilon(1e-5));
}

TEST_CASE("param_gradients: finite differences on dense MLP") {
    Network net = mlp({6, 10, 4}, 21);
    Batch b = random_batch(net, 8, 22);
    GradientSet g = param_gradients(net, b);
    for (const auto& e : g.entries) {
        for (std::size_t i = 0; i < e.wgrad.data.size(); ++i) {
            double fd = oracles::fd_weight_gradient(net, b, e.layer_id, i);
            CHECK_MESSAGE(oracles::grad_close(e.wgrad.data[i], fd),
                          "layer ", e.layer_id, " w[", i, "]: bp=", e.wgrad.data[i], " fd=", fd);
        }
        for (std::size_t i = 0; i < e.bgrad.data.size(); ++i) {
            double fd = oracles::fd_bias_gradient(net, b, e.layer_id, i);
            CHECK(oracles::grad_close(e.bgrad.data[i], fd));
        }
    }
}

TEST_CASE("param_gradients: finite differences on conv net") {
    Network net;
    net.name = "cnn";
    net.input_shape = {1, 8, 8};
    net.class_count = 3;
    net.layers.push_back(conv2d(1, 3, 3, 3));
    net.layers.push_back(relu());
    net.layers.push_back(maxpool2d(2));
    net.layers.push_back(flatten());
    net.layers.push_back(dense(3 * 3 * 3, 3));
    init_params(net, 31);
    Batch b = random_batch(net, 4, 32);
    GradientSet g = param_gradients(net, b);
    for (const auto& e : g.entries)
        for (std::size_t i = 0; i < e.wgrad.data.size(); ++i) {
            double fd = oracles::fd_weight_gradient(net, b, e.layer_id, i);
            CHECK_MESSAGE(oracles::grad_close(e.wgrad.data[i], fd),
                          "layer ", e.layer_id, " w[", i, "]: bp=", e.wgrad.data[i], " fd=", fd);
        }
}

TEST_CASE("param_gradients: zero at exact one-hot fit") {
    // saturate logits so softmax is numerically one-hot at the target
    Network net;
    net.input_shape = {1};
    net.class_count = 2;
    net.layers.push_back(dense(1, 2));
    net.layers[0].weights.data = {100.0f, -100.0f};
    Batch b = single({1.0f}, 0);
    GradientSet g = param_gradients(net, b);
    for (float v : g.entries[0].wgrad.data) CHECK(std::fabs(v) < 1e-12f);
}

TEST_CASE("SGD: single step without momentum") {
    // lr=0.1, w=1.0, g=0.5 -> 0.95
    Network net;
    net.input_shape = {1};
    net.class_count = 1;
    net.layers.push_back(dense(1, 1));
    net.layers[0].weights.data = {1.0f};
    GradientSet g;
    g.entries.push_back({0, Tensor({1, 1}, {0.5f}), Tensor({1}, {0.0f})});
    SGD opt(0.1, 0.0);
    opt.step(net, g);
    CHECK(net.layers[0].weights.data[0] == doctest::Approx(0.95f));
}

TEST_CASE("SGD: zero gradient leaves weights unchanged") {
    Network net = mlp({3, 3}, 5);
    auto before = net.layers[0].weights.data;
    GradientSet g;
    g.entries.push_back({0, Tensor::zeros({3, 3}), Tensor::zeros({3})});
    SGD opt(0.1, 0.9);
    opt.step(net, g);
    opt.step(net, g);
    CHECK(net.layers[0].weights.data == before);
}

TEST_CASE("SGD: two momentum steps match velocity recursion") {
    // v1 = g1; w1 = w0 - lr v1; v2 = m v1 + g2; w2 = w1 - lr v2
    Network net;
    net.input_shape = {1};
    net.class_count = 1;
    net.layers.push_back(dense(1, 1));
    net.layers[0].weights.data = {1.0f};
    SGD opt(0.1, 0.9);
    GradientSet g1, g2;
    g1.entries.push_back({0, Tensor({1, 1}, {0.5f}), Tensor({1}, {0.0f})});
    g2.entries.push_back({0, Tensor({1, 1}, {0.2f}), Tensor({1}, {0.0f})});
    opt.step(net, g1);
    opt.step(net, g2);
    double v1 = 0.5, w1 = 1.0 - 0.1 * v1;
    double v2 = 0.9 * v1 + 0.2, w2 = w1 - 0.1 * v2;
    CHECK(net.layers[0].weights.data[0] == doctest::Approx(w2).epsilon(1e-6));
}

TEST_CASE("Adam: zero gradient leaves weights unchanged") {
    Network net = mlp({3, 3}, 6);
    auto before = net.layers[0].weights.data;
    GradientSet g;
    g.entries.push_back({0, Tensor::zeros({3, 3}), Tensor::zeros({3})});
    Adam opt(0.003);
    opt.step(net, g);
    CHECK(net.layers[0].weights.data == before);
}

TEST_CASE("Adam: single step matches hand-evaluated formula") {
    Network net;
    net.input_shape = {1};
    net.class_count = 1;
    net.layers.push_back(dense(1, 1));
    net.layers[0].weights.data = {1.0f};
    Adam opt(0.003, 0.9, 0.999, 1e-8);
    GradientSet g;
    g.entries.push_back({0, Tensor({1, 1}, {0.4f}), Tensor({1}, {0.0f})});
    opt.step(net, g);
    double m = 0.1 * 0.4, v = 0.001 * 0.4 * 0.4;
    double mhat = m / (1 - 0.9), vhat = v / (1 - 0.999);
    double w = 1.0 - 0.003 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(net.layers[0].weights.data[0] == doctest::Approx(w).epsilon(1e-6));
}

TEST_CASE("Adam: loss decreases over 10 steps on a toy net") {
    Network net = mlp({4, 8, 3}, 41);
    Batch b = random_batch(net, 16, 42);
    double before = cross_entropy(forward(net, b), b.labels);
    Adam opt(0.003);
    for (int i = 0; i < 10; ++i) opt.step(net, param_gradients(net, b));
    double after = cross_entropy(forward(net, b), b.labels);
    CHECK(after < before);
}

TEST_CASE("Adam: invalid hyperparameters rejected") {
    CHECK_THROWS(Adam(0.0));
    CHECK_THROWS(Adam(0.1, 1.0));
    CHECK_THROWS(SGD(0.0));
}

TEST_CASE("evaluate_accuracy: constant classifier") {
    Network net;
    net.input_shape = {2};
    net.class_count = 3;
    net.layers.push_back(dense(2, 3));
    net.layers[0].bias.data = {1.0f, 0.0f, 0.0f};  // always predicts 0
    Tensor x = Tensor::zeros({6, 2});
    CHECK(evaluate_accuracy(net, Batch{x, {0, 0, 0, 0, 0, 0}}) == 1.0);
    CHECK(evaluate_accuracy(net, Batch{x, {0, 1, 2, 0, 1, 2}}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("evaluate_accuracy: argmax ties go to lowest class") {
    Network net;
    net.input_shape = {1};
    net.class_count = 2;
    net.layers.push_back(dense(1, 2));  // zero weights: tied logits
    Batch b0 = single({1.0f}, 0);
    Batch b1 = single({1.0f}, 1);
    CHECK(evaluate_accuracy(net, b0) == 1.0);
    CHECK(evaluate_accuracy(net, b1) == 0.0);
}

TEST_CASE("evaluate_accuracy: matches per-sample loop oracle") {
    Network net = mlp({5, 12, 4}, 51);
    Batch b = random_batch(net, 30, 52);
    double got = evaluate_accuracy(net, b);
    int correct = 0;
    for (int n = 0; n < 30; ++n) {
        std::vector<float> x(b.inputs.data.begin() + n * 5, b.inputs.data.begin() + (n + 1) * 5);
        Batch one = single(x, b.labels[n]);
        Tensor logits = forward(net, one);
        int best = 0;
        for (int c = 1; c < 4; ++c)
            if (logits.data[c] > logits.data[best]) best = c;
        if (best == b.labels[n]) ++correct;
    }
    CHECK(got == doctest::Approx(correct / 30.0));
}

TEST_CASE("determinism: gradients and updates bitwise stable across runs") {
    auto run = [] {
        Network net = mlp({6, 8, 3}, 77);
        Batch b = random_batch(net, 12, 78);
        SGD opt(0.05, 0.9);
        for (int i = 0; i < 5; ++i) opt.step(net, param_gradients(net, b));
        return net.layers[0].weights.data;
    };
    CHECK(run() == run());
}
