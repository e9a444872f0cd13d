#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "advparams/advparams.hpp"
#include "desk_model.hpp"
#include "oracles.hpp"

using namespace advparams;

namespace {

Network blobs_model(const Dataset& train_set, std::uint64_t seed, int hidden = 64, int epochs = 20) {
    Network net;
    net.name = "blobs-mlp";
    net.input_shape = {train_set.inputs.shape[1]};
    net.class_count = train_set.class_count;
    net.layers = {dense(net.input_shape[0], hidden), relu(), dense(hidden, net.class_count)};
    init_params(net, seed);
    TrainConfig tc;
    tc.epochs = epochs;
    tc.seed = seed;
    train(net, train_set, tc);
    return net;
}

LayerSnapshot snap_of(float mn, float mx, double alpha) {
    Network net;
    net.input_shape = {1};
    net.class_count = 2;
    net.layers.push_back(dense(1, 2));
    net.layers[0].weights.data = {mn, mx};
    return LayerSnapshot::capture(net, 0, alpha);
}

}  // namespace

TEST_CASE("select_weight: argmax of |grad| with mask and tie-break") {
    CHECK(*select_weight({0.1f, -0.5f, 0.3f}, {1, 1, 1}) == 1);
    CHECK(*select_weight({0.1f, -0.5f, 0.3f}, {1, 0, 1}) == 2);
    CHECK(*select_weight({0.5f, -0.5f}, {1, 1}) == 0);  // tie -> lowest index
    CHECK(!select_weight({0.5f, -0.5f}, {0, 0}).has_value());
    CHECK_THROWS(select_weight({0.5f}, {1, 1}));
}

TEST_CASE("perturbation: theta * sign(grad) * range") {
    LayerSnapshot s = snap_of(-1.0f, 1.0f, 0.0);
    CHECK(perturbation(0.07, 0.4f, s) == doctest::Approx(0.14f));
    LayerSnapshot s1 = snap_of(0.0f, 1.0f, 0.0);
    CHECK(perturbation(0.07, -2.0f, s1) == doctest::Approx(-0.07f));
    CHECK(perturbation(0.07, 0.0f, s) == 0.0f);
}

TEST_CASE("clip: saturates at the alpha-shrunk band") {
    LayerSnapshot s = snap_of(-1.0f, 1.0f, 0.05);
    CHECK(s.t_lo == doctest::Approx(-0.9f));
    CHECK(s.t_hi == doctest::Approx(0.9f));
    CHECK(clip(0.5f, s) == 0.5f);
    CHECK(clip(-2.0f, s) == doctest::Approx(-0.9f));
    CHECK(clip(0.95f, s) == doctest::Approx(0.9f));
}

TEST_CASE("layer_gradient: consistent with param_gradients and finite differences") {
    auto [train_set, test_set] = synth_blobs(4, 6, 30, 0.5, 17);
    Network net = blobs_model(train_set, 17, 8, 5);
    Batch de = sample_encryption_set(train_set, 20, 3).batch;

    std::vector<float> g0 = layer_gradient(net, de, 0);
    GradientSet full = param_gradients(net, de);
    CHECK(g0 == full.for_layer(0).wgrad.data);

    for (std::size_t i = 0; i < g0.size(); i += 7) {
        double fd = oracles::fd_weight_gradient(net, de, 0, i);
        CHECK(oracles::grad_close(g0[i], fd));
    }
    CHECK_THROWS(layer_gradient(net, de, 1));  // ReLU is not encryptable
}

TEST_CASE("layer_gradient: near zero on a perfectly fit model") {
    Network net;
    net.input_shape = {1};
    net.class_count = 2;
    net.layers.push_back(dense(1, 2));
    net.layers[0].weights.data = {60.0f, -60.0f};
    Batch b{Tensor({2, 1}, {1.0f, 0.5f}), {0, 0}};
    for (float g : layer_gradient(net, b, 0)) CHECK(std::fabs(g) < 1e-12f);
}

TEST_CASE("encrypt: initial loss above threshold returns unchanged model") {
    auto [train_set, test_set] = synth_blobs(3, 4, 20, 0.5, 23);
    Network net;
    net.input_shape = {4};
    net.class_count = 3;
    net.layers = {dense(4, 3)};
    init_params(net, 23);
    Batch de = train_set.as_batch();
    EncryptionConfig cfg;
    cfg.t_loss = 1e-9;  // any positive loss exceeds it
    cfg.layer_ids = {0};
    EncryptionOutcome out = encrypt(net, de, cfg);
    CHECK(out.reached_threshold);
    CHECK(out.records.empty());
    CHECK(out.network.layers[0].weights.data == net.layers[0].weights.data);
}

TEST_CASE("encrypt: input validation") {
    Network net;
    net.input_shape = {2};
    net.class_count = 2;
    net.layers = {dense(2, 2)};
    Batch de{Tensor({1, 2}, {0.f, 0.f}), {0}};
    EncryptionConfig cfg;
    cfg.layer_ids = {};
    CHECK_THROWS(encrypt(net, de, cfg));  // no layers
    cfg.layer_ids = {0};
    cfg.theta = 0.0;
    CHECK_THROWS(encrypt(net, de, cfg));
    cfg.theta = 0.07;
    cfg.alpha = 0.6;
    CHECK_THROWS(encrypt(net, de, cfg));
    cfg.alpha = 0.05;
    Batch empty{Tensor(), {}};
    CHECK_THROWS(encrypt(net, empty, cfg));
}

TEST_CASE("encrypt: first selection matches exhaustive finite-difference saliency") {
    // single-layer toy model: eligible set == all weights
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        auto [train_set, test_set] = synth_blobs(3, 4, 20, 0.6, 100 + seed);
        Network net;
        net.input_shape = {4};
        net.class_count = 3;
        net.layers = {dense(4, 3)};
        init_params(net, seed);
        TrainConfig tc;
        tc.epochs = 10;
        tc.seed = seed;
        train(net, train_set, tc);
        Batch de = sample_encryption_set(train_set, 12, seed).batch;

        std::size_t fd_best = 0;
        double fd_best_abs = -1.0;
        for (std::size_t i = 0; i < net.layers[0].weights.data.size(); ++i) {
            double d = std::fabs(oracles::fd_weight_gradient(net, de, 0, i));
            if (d > fd_best_abs) {
                fd_best_abs = d;
                fd_best = i;
            }
        }
        EncryptionConfig cfg;
        cfg.layer_ids = {0};
        cfg.max_params = 1;
        cfg.t_loss = 1e9;

        // The saliency pick must agree with the finite-difference argmax.
        std::vector<std::uint8_t> mask(net.layers[0].weights.data.size(), 1);
        auto pick = select_weight(layer_gradient(net, de, 0), mask);
        REQUIRE(pick.has_value());
        CHECK(*pick == static_cast<std::int64_t>(fd_best));

        // The first *recorded* perturbation matches the argmax whenever the
        // perturbed value admits a bit-exact inverse; otherwise the argmax is
        // masked untouched and a later pick is recorded instead.
        LayerSnapshot snap = LayerSnapshot::capture(net, 0, cfg.alpha);
        float grad_best = layer_gradient(net, de, 0)[fd_best];
        float w_best = net.layers[0].weights.data[fd_best];
        float cand = clip(w_best + perturbation(cfg.theta, grad_best, snap), snap);
        float delta = 0.0f;
        bool invertible = cand != w_best && detail::exact_invertible(w_best, cand, delta, snap);

        EncryptionOutcome out = encrypt(net, de, cfg);
        REQUIRE(out.records.size() == 1);
        if (invertible) {
            CHECK(out.records[0].index == static_cast<std::int64_t>(fd_best));
        } else {
            CHECK(out.records[0].index != static_cast<std::int64_t>(fd_best));
            CHECK(out.network.layers[0].weights.data[fd_best] == w_best);
        }
    }
}

TEST_CASE("encrypt: full pipeline collapses a strong blobs model") {
    desk::Asset asset = desk::make();
    const Network& net = asset.model;
    const Dataset& train_set = asset.train;
    const Dataset& test_set = asset.test;
    REQUIRE(asset.a_o >= 0.90);

    Batch de = sample_encryption_set(train_set, desk::kEncSetSize, 1).batch;
    EncryptionConfig cfg = desk::default_config();
    EncryptionOutcome out = encrypt(net, de, cfg);

    double a_e = evaluate_accuracy(out.network, test_set.as_batch());
    CHECK(a_e <= 0.15);
    CHECK(static_cast<double>(out.records.size()) <= 0.005 * net.encryptable_weight_count());

    SUBCASE("record completeness: subtracting deltas restores the model bit-exactly") {
        Network restored = out.network;
        for (const auto& r : out.records)
            restored.layers[r.layer_id].weights.data[r.index] =
                restored.layers[r.layer_id].weights.data[r.index] - r.delta;
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            CHECK(restored.layers[i].weights.data == net.layers[i].weights.data);
            CHECK(restored.layers[i].bias.data == net.layers[i].bias.data);
        }
    }

    SUBCASE("range invariant: perturbed weights inside the frozen clip band") {
        for (const auto& r : out.records) {
            LayerSnapshot snap = LayerSnapshot::capture(net, r.layer_id, cfg.alpha);
            float w = out.network.layers[r.layer_id].weights.data[r.index];
            CHECK(w >= snap.t_lo);
            CHECK(w <= snap.t_hi);
            CHECK(w >= snap.w_min);
            CHECK(w <= snap.w_max);
        }
    }

    SUBCASE("loss at termination") {
        if (out.reached_threshold) CHECK(out.final_loss > cfg.t_loss);
    }

    SUBCASE("budget bound and record uniqueness") {
        CHECK(static_cast<int>(out.records.size()) <=
              cfg.max_iter_per_layer * static_cast<int>(cfg.layer_ids.size()));
        std::set<std::pair<int, std::int64_t>> seen;
        for (const auto& r : out.records) CHECK(seen.insert({r.layer_id, r.index}).second);
    }

    SUBCASE("n_e equals direct weight diff") {
        std::int64_t diff = 0;
        for (std::size_t i = 0; i < net.layers.size(); ++i)
            if (net.layers[i].encryptable())
                for (std::size_t k = 0; k < net.layers[i].weights.data.size(); ++k)
                    if (net.layers[i].weights.data[k] != out.network.layers[i].weights.data[k]) ++diff;
        CHECK(diff == static_cast<std::int64_t>(out.records.size()));
    }
}

TEST_CASE("encrypt: max_params cap is respected") {
    auto [train_set, test_set] = synth_blobs(4, 8, 40, 0.5, 33);
    Network net = blobs_model(train_set, 33, 12, 8);
    Batch de = sample_encryption_set(train_set, 32, 1).batch;
    EncryptionConfig cfg;
    cfg.layer_ids = net.encryptable_layer_ids();
    cfg.t_loss = 1e9;
    cfg.max_iter_per_layer = 50;
    cfg.max_params = 5;
    EncryptionOutcome out = encrypt(net, de, cfg);
    CHECK(out.records.size() <= 5);
    CHECK(!out.reached_threshold);
}

TEST_CASE("encrypt: deterministic across runs") {
    auto [train_set, test_set] = synth_blobs(5, 10, 40, 0.5, 44);
    Network net = blobs_model(train_set, 44, 16, 10);
    Batch de = sample_encryption_set(train_set, 40, 2).batch;
    EncryptionConfig cfg;
    cfg.layer_ids = net.encryptable_layer_ids();
    cfg.t_loss = 6.0;
    EncryptionOutcome a = encrypt(net, de, cfg);
    EncryptionOutcome b = encrypt(net, de, cfg);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].index == b.records[i].index);
        CHECK(a.records[i].delta == b.records[i].delta);
    }
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        CHECK(a.network.layers[i].weights.data == b.network.layers[i].weights.data);
}
