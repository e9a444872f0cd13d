#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "advparams/network.hpp"
#include "advparams/tensor.hpp"

namespace advparams {

struct Batch {
    Tensor inputs;             // (N, input shape...)
    std::vector<int> labels;   // class ids in [0, C)

    int size() const { return inputs.shape.empty() ? 0 : inputs.shape[0]; }
};

// Weight/bias gradients for every parameterized layer, indexed by layer id.
struct GradientSet {
    struct Entry {
        int layer_id = -1;
        Tensor wgrad;
        Tensor bgrad;
    };
    std::vector<Entry> entries;

    const Entry& for_layer(int layer_id) const {
        for (const auto& e : entries)
            if (e.layer_id == layer_id) return e;
        throw std::invalid_argument("GradientSet: no entry for layer " + std::to_string(layer_id));
    }
};

namespace detail {

inline std::vector<int> layer_output_shape(const Layer& l, const std::vector<int>& in) {
    switch (l.kind) {
        case LayerKind::Dense: {
            if (in.size() != 1 || in[0] != l.in)
                throw std::runtime_error("Dense: expected input " + shape_str({l.in}) + ", got " + shape_str(in));
            return {l.out};
        }
        case LayerKind::Conv2d: {
            if (in.size() != 3 || in[0] != l.in)
                throw std::runtime_error("Conv2d: expected (C,H,W) with C=" + std::to_string(l.in) + ", got " + shape_str(in));
            int oh = (in[1] - l.kh) / l.stride + 1;
            int ow = (in[2] - l.kw) / l.stride + 1;
            if (in[1] < l.kh || in[2] < l.kw)
                throw std::runtime_error("Conv2d: input smaller than kernel");
            return {l.out, oh, ow};
        }
        case LayerKind::ReLU: return in;
        case LayerKind::Flatten: {
            int n = 1;
            for (int d : in) n *= d;
            return {n};
        }
        case LayerKind::MaxPool2d: {
            if (in.size() != 3) throw std::runtime_error("MaxPool2d: expected (C,H,W), got " + shape_str(in));
            if (in[1] % l.pool != 0 || in[2] % l.pool != 0)
                throw std::runtime_error("MaxPool2d: dims not divisible by window");
            return {in[0], in[1] / l.pool, in[2] / l.pool};
        }
    }
    throw std::runtime_error("unknown layer kind");
}

// Per-sample activation shapes are identical across the batch; tensors carry
// the batch dimension first.
struct Trace {
    std::vector<Tensor> acts;  // acts[0] = input, acts[i+1] = output of layer i
};

inline void forward_layer(const Layer& l, const Tensor& x, Tensor& y, int batch) {
    const std::int64_t in_per = x.numel() / batch;
    const std::int64_t out_per = y.numel() / batch;
    switch (l.kind) {
        case LayerKind::Dense: {
            for (int n = 0; n < batch; ++n) {
                const float* xi = x.data.data() + n * in_per;
                float* yo = y.data.data() + n * out_per;
                for (int o = 0; o < l.out; ++o) {
                    double acc = l.bias.numel() ? l.bias.data[o] : 0.0;
                    const float* wr = l.weights.data.data() + static_cast<std::size_t>(o) * l.in;
                    for (int i = 0; i < l.in; ++i) acc += static_cast<double>(wr[i]) * xi[i];
                    yo[o] = static_cast<float>(acc);
                }
            }
            break;
        }
        case LayerKind::Conv2d: {
            // x: (N,C,H,W), y: (N,OC,OH,OW)
            int C = l.in, OC = l.out;
            int xs_h = x.shape[2], xs_w = x.shape[3];
            int oh = (xs_h - l.kh) / l.stride + 1;
            int ow = (xs_w - l.kw) / l.stride + 1;
            for (int n = 0; n < batch; ++n) {
                const float* xi = x.data.data() + n * in_per;
                float* yo = y.data.data() + n * out_per;
                for (int oc = 0; oc < OC; ++oc) {
                    for (int r = 0; r < oh; ++r) {
                        for (int c = 0; c < ow; ++c) {
                            double acc = l.bias.numel() ? l.bias.data[oc] : 0.0;
                            for (int ic = 0; ic < C; ++ic) {
                                for (int u = 0; u < l.kh; ++u) {
                                    const float* xrow = xi + (static_cast<std::size_t>(ic) * xs_h + (r * l.stride + u)) * xs_w + c * l.stride;
                                    const float* wrow = l.weights.data.data() +
                                        ((static_cast<std::size_t>(oc) * C + ic) * l.kh + u) * l.kw;
                                    for (int v = 0; v < l.kw; ++v) acc += static_cast<double>(wrow[v]) * xrow[v];
                                }
                            }
                            yo[(static_cast<std::size_t>(oc) * oh + r) * ow + c] = static_cast<float>(acc);
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::ReLU:
            for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > 0.0f ? x.data[i] : 0.0f;
            break;
        case LayerKind::Flatten:
            y.data = x.data;
            break;
        case LayerKind::MaxPool2d: {
            int C = x.shape[1], H = x.shape[2], W = x.shape[3];
            int oh = H / l.pool, ow = W / l.pool;
            for (int n = 0; n < batch; ++n) {
                const float* xi = x.data.data() + n * in_per;
                float* yo = y.data.data() + n * out_per;
                for (int ch = 0; ch < C; ++ch)
                    for (int r = 0; r < oh; ++r)
                        for (int c = 0; c < ow; ++c) {
                            float best = xi[(static_cast<std::size_t>(ch) * H + r * l.pool) * W + c * l.pool];
                            for (int u = 0; u < l.pool; ++u)
                                for (int v = 0; v < l.pool; ++v) {
                                    float cand = xi[(static_cast<std::size_t>(ch) * H + r * l.pool + u) * W + c * l.pool + v];
                                    if (cand > best) best = cand;
                                }
                            yo[(static_cast<std::size_t>(ch) * oh + r) * ow + c] = best;
                        }
            }
            break;
        }
    }
}

inline Trace forward_trace(const Network& net, const Batch& batch) {
    if (batch.size() == 0) throw std::invalid_argument("forward: empty batch");
    if (static_cast<int>(batch.labels.size()) != batch.size())
        throw std::invalid_argument("forward: inputs/labels size mismatch");
    std::vector<int> in_shape(batch.inputs.shape.begin() + 1, batch.inputs.shape.end());
    if (in_shape != net.input_shape)
        throw std::runtime_error("forward: input shape " + shape_str(in_shape) +
                                 " does not match network input " + shape_str(net.input_shape));
    const int N = batch.size();
    Trace t;
    t.acts.reserve(net.layers.size() + 1);
    t.acts.push_back(batch.inputs);
    std::vector<int> cur = in_shape;
    for (const auto& l : net.layers) {
        std::vector<int> next = layer_output_shape(l, cur);
        std::vector<int> full = {N};
        full.insert(full.end(), next.begin(), next.end());
        Tensor y = Tensor::zeros(full);
        forward_layer(l, t.acts.back(), y, N);
        t.acts.push_back(std::move(y));
        cur = next;
    }
    if (cur != std::vector<int>{net.class_count})
        throw std::runtime_error("forward: network output " + shape_str(cur) +
                                 " does not match class count " + std::to_string(net.class_count));
    return t;
}

}  // namespace detail

inline Tensor forward(const Network& net, const Batch& batch) {
    auto trace = detail::forward_trace(net, batch);
    Tensor logits = std::move(trace.acts.back());
    logits.check_finite("forward logits");
    return logits;
}

// Mean over the batch of -log softmax(logits)[label], max-subtraction stabilized.
inline double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.shape.size() != 2) throw std::invalid_argument("cross_entropy: logits must be (N,C)");
    const int N = logits.shape[0], C = logits.shape[1];
    if (static_cast<int>(labels.size()) != N) throw std::invalid_argument("cross_entropy: labels size mismatch");
    double total = 0.0;
    for (int n = 0; n < N; ++n) {
        int y = labels[n];
        if (y < 0 || y >= C) throw std::invalid_argument("cross_entropy: label out of range");
        const float* row = logits.data.data() + static_cast<std::size_t>(n) * C;
        double mx = row[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(row[c]));
        double sum = 0.0;
        for (int c = 0; c < C; ++c) sum += std::exp(static_cast<double>(row[c]) - mx);
        total += std::log(sum) - (static_cast<double>(row[y]) - mx);
    }
    double loss = total / N;
    return loss < 0.0 ? 0.0 : loss;
}

// Exact backprop gradients of mean cross-entropy. Accumulation in double,
// stored as float32. Fixed summation order; fully deterministic.
inline GradientSet param_gradients(const Network& net, const Batch& batch) {
    auto trace = detail::forward_trace(net, batch);
    const int N = batch.size();
    const int C = net.class_count;
    const Tensor& logits = trace.acts.back();

    // dL/dlogits = (softmax - onehot) / N
    Tensor delta = Tensor::zeros(logits.shape);
    for (int n = 0; n < N; ++n) {
        int y = batch.labels[n];
        if (y < 0 || y >= C) throw std::invalid_argument("param_gradients: label out of range");
        const float* row = logits.data.data() + static_cast<std::size_t>(n) * C;
        float* drow = delta.data.data() + static_cast<std::size_t>(n) * C;
        double mx = row[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(row[c]));
        double sum = 0.0;
        for (int c = 0; c < C; ++c) sum += std::exp(static_cast<double>(row[c]) - mx);
        for (int c = 0; c < C; ++c) {
            double p = std::exp(static_cast<double>(row[c]) - mx) / sum;
            drow[c] = static_cast<float>((p - (c == y ? 1.0 : 0.0)) / N);
        }
    }

    GradientSet grads;
    for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
        const Layer& l = net.layers[li];
        const Tensor& x = trace.acts[li];
        const Tensor& y = trace.acts[li + 1];
        Tensor next_delta;
        const std::int64_t in_per = x.numel() / N;
        const std::int64_t out_per = y.numel() / N;

        switch (l.kind) {
            case LayerKind::Dense: {
                GradientSet::Entry e;
                e.layer_id = li;
                std::vector<double> wacc(static_cast<std::size_t>(l.weights.numel()), 0.0);
                std::vector<double> bacc(static_cast<std::size_t>(l.out), 0.0);
                next_delta = Tensor::zeros(x.shape);
                for (int n = 0; n < N; ++n) {
                    const float* xi = x.data.data() + n * in_per;
                    const float* d = delta.data.data() + n * out_per;
                    float* nd = next_delta.data.data() + n * in_per;
                    for (int o = 0; o < l.out; ++o) {
                        double dv = d[o];
                        bacc[o] += dv;
                        double* wr = wacc.data() + static_cast<std::size_t>(o) * l.in;
                        const float* w = l.weights.data.data() + static_cast<std::size_t>(o) * l.in;
                        for (int i = 0; i < l.in; ++i) {
                            wr[i] += dv * xi[i];
                            nd[i] += static_cast<float>(dv * w[i]);
                        }
                    }
                }
                e.wgrad = Tensor::zeros(l.weights.shape);
                e.bgrad = Tensor::zeros(l.bias.shape);
                for (std::size_t i = 0; i < wacc.size(); ++i) e.wgrad.data[i] = static_cast<float>(wacc[i]);
                for (std::size_t i = 0; i < bacc.size(); ++i) e.bgrad.data[i] = static_cast<float>(bacc[i]);
                grads.entries.push_back(std::move(e));
                break;
            }
            case LayerKind::Conv2d: {
                GradientSet::Entry e;
                e.layer_id = li;
                int Ci = l.in, H = x.shape[2], W = x.shape[3];
                int oh = y.shape[2], ow = y.shape[3];
                std::vector<double> wacc(static_cast<std::size_t>(l.weights.numel()), 0.0);
                std::vector<double> bacc(static_cast<std::size_t>(l.out), 0.0);
                next_delta = Tensor::zeros(x.shape);
                for (int n = 0; n < N; ++n) {
                    const float* xi = x.data.data() + n * in_per;
                    const float* d = delta.data.data() + n * out_per;
                    float* nd = next_delta.data.data() + n * in_per;
                    for (int oc = 0; oc < l.out; ++oc)
                        for (int r = 0; r < oh; ++r)
                            for (int c = 0; c < ow; ++c) {
                                double dv = d[(static_cast<std::size_t>(oc) * oh + r) * ow + c];
                                bacc[oc] += dv;
                                for (int ic = 0; ic < Ci; ++ic)
                                    for (int u = 0; u < l.kh; ++u)
                                        for (int v = 0; v < l.kw; ++v) {
                                            std::size_t xidx = (static_cast<std::size_t>(ic) * H + r * l.stride + u) * W + c * l.stride + v;
                                            std::size_t widx = ((static_cast<std::size_t>(oc) * Ci + ic) * l.kh + u) * l.kw + v;
                                            wacc[widx] += dv * xi[xidx];
                                            nd[xidx] += static_cast<float>(dv * l.weights.data[widx]);
                                        }
                            }
                }
                e.wgrad = Tensor::zeros(l.weights.shape);
                e.bgrad = Tensor::zeros(l.bias.shape);
                for (std::size_t i = 0; i < wacc.size(); ++i) e.wgrad.data[i] = static_cast<float>(wacc[i]);
                for (std::size_t i = 0; i < bacc.size(); ++i) e.bgrad.data[i] = static_cast<float>(bacc[i]);
                grads.entries.push_back(std::move(e));
                break;
            }
            case LayerKind::ReLU: {
                next_delta = Tensor::zeros(x.shape);
                for (std::size_t i = 0; i < x.data.size(); ++i)
                    next_delta.data[i] = x.data[i] > 0.0f ? delta.data[i] : 0.0f;
                break;
            }
            case LayerKind::Flatten: {
                next_delta = Tensor(x.shape, delta.data);
                break;
            }
            case LayerKind::MaxPool2d: {
                int Ch = x.shape[1], H = x.shape[2], W = x.shape[3];
                int oh = H / l.pool, ow = W / l.pool;
                next_delta = Tensor::zeros(x.shape);
                for (int n = 0; n < N; ++n) {
                    const float* xi = x.data.data() + n * in_per;
                    const float* d = delta.data.data() + n * out_per;
                    float* nd = next_delta.data.data() + n * in_per;
                    for (int ch = 0; ch < Ch; ++ch)
                        for (int r = 0; r < oh; ++r)
                            for (int c = 0; c < ow; ++c) {
                                // route to the first max (lowest index) in the window
                                std::size_t best = (static_cast<std::size_t>(ch) * H + r * l.pool) * W + c * l.pool;
                                for (int u = 0; u < l.pool; ++u)
                                    for (int v = 0; v < l.pool; ++v) {
                                        std::size_t idx = (static_cast<std::size_t>(ch) * H + r * l.pool + u) * W + c * l.pool + v;
                                        if (xi[idx] > xi[best]) best = idx;
                                    }
                                nd[best] += d[(static_cast<std::size_t>(ch) * oh + r) * ow + c];
                            }
                }
                break;
            }
        }
        delta = std::move(next_delta);
    }
    std::reverse(grads.entries.begin(), grads.entries.end());
    for (auto& e : grads.entries) {
        e.wgrad.check_finite("gradient");
        e.bgrad.check_finite("gradient");
    }
    return grads;
}

// SGD with classic momentum. Velocity state persists across steps.
struct SGD {
    double lr;
    double momentum;
    std::vector<std::vector<double>> vel_w, vel_b;

    SGD(double learning_rate, double mom = 0.0) : lr(learning_rate), momentum(mom) {
        if (lr <= 0.0) throw std::invalid_argument("SGD: lr must be positive");
    }

    void step(Network& net, const GradientSet& grads) {
        if (vel_w.empty()) {
            for (const auto& e : grads.entries) {
                vel_w.emplace_back(e.wgrad.data.size(), 0.0);
                vel_b.emplace_back(e.bgrad.data.size(), 0.0);
            }
        }
        for (std::size_t k = 0; k < grads.entries.size(); ++k) {
            const auto& e = grads.entries[k];
            Layer& l = net.layers[e.layer_id];
            if (!l.weights.same_shape(e.wgrad)) throw std::invalid_argument("SGD: gradient shape mismatch");
            for (std::size_t i = 0; i < l.weights.data.size(); ++i) {
                vel_w[k][i] = momentum * vel_w[k][i] + e.wgrad.data[i];
                l.weights.data[i] = static_cast<float>(l.weights.data[i] - lr * vel_w[k][i]);
            }
            for (std::size_t i = 0; i < l.bias.data.size(); ++i) {
                vel_b[k][i] = momentum * vel_b[k][i] + e.bgrad.data[i];
                l.bias.data[i] = static_cast<float>(l.bias.data[i] - lr * vel_b[k][i]);
            }
        }
    }
};

// Bias-corrected Adam.
struct Adam {
    double lr, beta1, beta2, eps;
    std::int64_t t = 0;
    std::vector<std::vector<double>> m_w, v_w, m_b, v_b;

    Adam(double learning_rate, double b1 = 0.9, double b2 = 0.999, double epsilon = 1e-8)
        : lr(learning_rate), beta1(b1), beta2(b2), eps(epsilon) {
        if (lr <= 0.0) throw std::invalid_argument("Adam: lr must be positive");
        if (b1 < 0.0 || b1 >= 1.0 || b2 < 0.0 || b2 >= 1.0) throw std::invalid_argument("Adam: betas in [0,1)");
    }

    void step(Network& net, const GradientSet& grads) {
        ++t;
        if (m_w.empty()) {
            for (const auto& e : grads.entries) {
                m_w.emplace_back(e.wgrad.data.size(), 0.0);
                v_w.emplace_back(e.wgrad.data.size(), 0.0);
                m_b.emplace_back(e.bgrad.data.size(), 0.0);
                v_b.emplace_back(e.bgrad.data.size(), 0.0);
            }
        }
        double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t k = 0; k < grads.entries.size(); ++k) {
            const auto& e = grads.entries[k];
            Layer& l = net.layers[e.layer_id];
            if (!l.weights.same_shape(e.wgrad)) throw std::invalid_argument("Adam: gradient shape mismatch");
            auto upd = [&](float& w, double g, double& m, double& v) {
                m = beta1 * m + (1.0 - beta1) * g;
                v = beta2 * v + (1.0 - beta2) * g * g;
                w = static_cast<float>(w - lr * (m / c1) / (std::sqrt(v / c2) + eps));
            };
            for (std::size_t i = 0; i < l.weights.data.size(); ++i)
                upd(l.weights.data[i], e.wgrad.data[i], m_w[k][i], v_w[k][i]);
            for (std::size_t i = 0; i < l.bias.data.size(); ++i)
                upd(l.bias.data[i], e.bgrad.data[i], m_b[k][i], v_b[k][i]);
        }
    }
};

// Fraction of samples whose argmax logit matches the label; argmax ties go to
// the lowest class index.
inline double evaluate_accuracy(const Network& net, const Batch& data) {
    Tensor logits = forward(net, data);
    const int N = logits.shape[0], C = logits.shape[1];
    std::int64_t correct = 0;
    for (int n = 0; n < N; ++n) {
        const float* row = logits.data.data() + static_cast<std::size_t>(n) * C;
        int best = 0;
        for (int c = 1; c < C; ++c)
            if (row[c] > row[best]) best = c;
        if (best == data.labels[n]) ++correct;
    }
    return static_cast<double>(correct) / N;
}

}  // namespace advparams
