#pragma once

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "advparams/tensor.hpp"

namespace advparams {

enum class LayerKind : std::uint8_t { Dense = 0, Conv2d = 1, ReLU = 2, Flatten = 3, MaxPool2d = 4 };

inline const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Dense: return "Dense";
        case LayerKind::Conv2d: return "Conv2d";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::Flatten: return "Flatten";
        case LayerKind::MaxPool2d: return "MaxPool2d";
    }
    return "?";
}

// Only Dense and Conv2d carry weights and are eligible for encryption.
struct Layer {
    LayerKind kind = LayerKind::ReLU;
    int in = 0, out = 0;          // Dense: features; Conv2d: channels
    int kh = 0, kw = 0;           // Conv2d kernel
    int stride = 1;               // Conv2d
    int pool = 0;                 // MaxPool2d window (stride == window)
    Tensor weights;               // Dense: (out,in); Conv2d: (out,in,kh,kw)
    Tensor bias;                  // (out); may be empty

    bool has_params() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }
    bool encryptable() const { return has_params(); }
};

struct Network {
    std::string name;
    int class_count = 0;
    std::vector<int> input_shape;  // without batch dimension
    std::vector<Layer> layers;

    std::vector<int> encryptable_layer_ids() const {
        std::vector<int> ids;
        for (int i = 0; i < static_cast<int>(layers.size()); ++i)
            if (layers[i].encryptable()) ids.push_back(i);
        return ids;
    }

    std::int64_t param_count() const {
        std::int64_t n = 0;
        for (const auto& l : layers)
            if (l.has_params()) n += l.weights.numel() + l.bias.numel();
        return n;
    }

    // Weights of encryptable layers only; what the encryption scheme touches.
    std::int64_t encryptable_weight_count() const {
        std::int64_t n = 0;
        for (const auto& l : layers)
            if (l.encryptable()) n += l.weights.numel();
        return n;
    }
};

inline Layer dense(int in, int out) {
    Layer l;
    l.kind = LayerKind::Dense;
    l.in = in;
    l.out = out;
    l.weights = Tensor::zeros({out, in});
    l.bias = Tensor::zeros({out});
    return l;
}

inline Layer conv2d(int in_ch, int out_ch, int kh, int kw, int stride = 1) {
    Layer l;
    l.kind = LayerKind::Conv2d;
    l.in = in_ch;
    l.out = out_ch;
    l.kh = kh;
    l.kw = kw;
    l.stride = stride;
    l.weights = Tensor::zeros({out_ch, in_ch, kh, kw});
    l.bias = Tensor::zeros({out_ch});
    return l;
}

inline Layer relu() {
    Layer l;
    l.kind = LayerKind::ReLU;
    return l;
}

inline Layer flatten() {
    Layer l;
    l.kind = LayerKind::Flatten;
    return l;
}

inline Layer maxpool2d(int k) {
    Layer l;
    l.kind = LayerKind::MaxPool2d;
    l.pool = k;
    return l;
}

// He-style init, deterministic under seed.
inline void init_params(Network& net, std::uint64_t seed) {
    std::mt19937 rng(static_cast<std::uint32_t>(seed));
    for (auto& l : net.layers) {
        if (!l.has_params()) continue;
        int fan_in = (l.kind == LayerKind::Dense) ? l.in : l.in * l.kh * l.kw;
        float scale = std::sqrt(2.0f / static_cast<float>(fan_in));
        std::normal_distribution<float> dist(0.0f, scale);
        for (auto& w : l.weights.data) w = dist(rng);
        for (auto& b : l.bias.data) b = 0.0f;
    }
}

}  // namespace advparams
