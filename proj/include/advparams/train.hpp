#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "advparams/data.hpp"
#include "advparams/nn.hpp"

namespace advparams {

struct TrainConfig {
    std::string optimizer = "sgd";  // "sgd" or "adam"
    double lr = 0.1;
    double momentum = 0.9;
    int epochs = 30;
    int batch_size = 128;
    std::uint64_t seed = 0;
};

// Deterministic minibatch training loop; order depends only on cfg.seed.
inline void train(Network& net, const Dataset& data, const TrainConfig& cfg) {
    SGD sgd(cfg.lr, cfg.momentum);
    Adam adam(cfg.lr);
    std::mt19937 rng(static_cast<std::uint32_t>(cfg.seed));
    const int n = data.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (int start = 0; start < n; start += cfg.batch_size) {
            int end = std::min(n, start + cfg.batch_size);
            std::vector<int> idx(order.begin() + start, order.begin() + end);
            Batch mb = data.subset(idx);
            GradientSet grads = param_gradients(net, mb);
            if (cfg.optimizer == "adam")
                adam.step(net, grads);
            else
                sgd.step(net, grads);
        }
    }
}

}  // namespace advparams
