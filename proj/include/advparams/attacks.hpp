#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "advparams/data.hpp"
#include "advparams/encrypt.hpp"
#include "advparams/nn.hpp"

namespace advparams {

struct AttackReport {
    std::string kind;
    std::string params;
    // (checkpoint value, test accuracy); value is an epoch count or pruning rate
    std::vector<std::pair<double, double>> checkpoints;
    double initial_accuracy = 0.0;
    double final_accuracy = 0.0;
};

struct FineTuneConfig {
    std::string optimizer = "sgd";  // "sgd" or "adam"
    double lr = 0.01;
    double momentum = 0.0;
    int batch_size = 32;
    int epochs = 100;
    int eval_every = 10;
    std::uint64_t seed = 0;
};

// Fine-tuning attack: the adversary trains every parameter of the encrypted
// model on its own small data slice. Sees neither the key nor the original
// model.
inline AttackReport fine_tune_attack(const Network& encrypted, const Batch& attacker_data,
                                     const FineTuneConfig& cfg, const Batch& eval_data) {
    if (attacker_data.size() == 0) throw std::invalid_argument("fine_tune_attack: empty attacker set");

    Network model = encrypted;
    AttackReport rep;
    rep.kind = "finetune";
    rep.params = cfg.optimizer + " lr=" + std::to_string(cfg.lr) + " epochs=" + std::to_string(cfg.epochs);
    rep.initial_accuracy = evaluate_accuracy(model, eval_data);
    rep.checkpoints.emplace_back(0.0, rep.initial_accuracy);

    SGD sgd(cfg.lr > 0 ? cfg.lr : 1e-9, cfg.momentum);
    Adam adam(cfg.lr > 0 ? cfg.lr : 1e-9);
    std::mt19937 rng(static_cast<std::uint32_t>(cfg.seed));
    const int n = attacker_data.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    Dataset view;  // wrap the batch for subset()
    view.inputs = attacker_data.inputs;
    view.labels = attacker_data.labels;
    view.class_count = encrypted.class_count;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (int start = 0; start < n; start += cfg.batch_size) {
            int end = std::min(n, start + cfg.batch_size);
            std::vector<int> idx(order.begin() + start, order.begin() + end);
            Batch mb = view.subset(idx);
            GradientSet grads = param_gradients(model, mb);
            if (cfg.optimizer == "adam")
                adam.step(model, grads);
            else
                sgd.step(model, grads);
        }
        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)
            rep.checkpoints.emplace_back(epoch, evaluate_accuracy(model, eval_data));
    }
    rep.final_accuracy = rep.checkpoints.back().second;
    return rep;
}

// Per-layer magnitude pruning: zeroes the floor(rate * |W_l|) smallest-
// magnitude weights of every encryptable layer. Ties go to the lowest index.
inline Network prune_attack(const Network& net, double rate) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("prune_attack: rate must be in [0,1)");
    Network out = net;
    for (auto& l : out.layers) {
        if (!l.encryptable()) continue;
        std::size_t n = l.weights.data.size();
        std::size_t k = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n)));
        if (k == 0) continue;
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return std::fabs(l.weights.data[a]) < std::fabs(l.weights.data[b]);
        });
        for (std::size_t i = 0; i < k; ++i) l.weights.data[idx[i]] = 0.0f;
    }
    return out;
}

// Key-free adaptive decryption: the attacker knows the scheme and the guessed
// hyperparameters, re-runs selection on the *encrypted* model (the only
// min/max it can observe), and subtracts the computed perturbation from each
// selected weight. Runs the same per-layer iteration budget as encryption.
inline AttackReport adaptive_attack(const Network& encrypted, const Batch& attacker_enc_set,
                                    const EncryptionConfig& guessed, const Batch& eval_data) {
    guessed.validate(encrypted);
    AttackReport rep;
    rep.kind = "adaptive";
    rep.params = "theta=" + std::to_string(guessed.theta) + " alpha=" + std::to_string(guessed.alpha) +
                 " I=" + std::to_string(guessed.max_iter_per_layer);
    rep.initial_accuracy = evaluate_accuracy(encrypted, eval_data);

    Network model = encrypted;
    for (int lid : guessed.layer_ids) {
        LayerSnapshot snap = LayerSnapshot::capture(model, lid, guessed.alpha);
        Tensor& w = model.layers[lid].weights;
        std::vector<std::uint8_t> mask(w.data.size(), 1);
        for (int i = 0; i < guessed.max_iter_per_layer; ++i) {
            std::vector<float> grad = layer_gradient(model, attacker_enc_set, lid);
            auto pick = select_weight(grad, mask);
            if (!pick) break;
            std::int64_t t = *pick;
            // subtract eta as computed by Eq. 3 on the encrypted weights;
            // one treatment per index
            float eta = perturbation(guessed.theta, grad[t], snap);
            w.data[t] = w.data[t] - eta;
            mask[t] = 0;
        }
    }
    rep.final_accuracy = evaluate_accuracy(model, eval_data);
    rep.checkpoints.emplace_back(0.0, rep.initial_accuracy);
    rep.checkpoints.emplace_back(1.0, rep.final_accuracy);
    return rep;
}

}  // namespace advparams
