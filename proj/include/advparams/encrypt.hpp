#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "advparams/nn.hpp"

namespace advparams {

struct EncryptionConfig {
    double theta = 0.07;               // perturbation scale
    double alpha = 0.05;               // clip-band shrink factor, in [0, 0.5)
    double t_loss = 12.0;              // loss threshold that terminates encryption
    int max_iter_per_layer = 18;       // iteration cap per layer
    std::vector<int> layer_ids;        // layers to encrypt, visited in this order
    std::optional<std::int64_t> max_params;  // optional cap on perturbation count
    std::uint64_t seed = 0;

    void validate(const Network& net) const {
        if (theta <= 0.0) throw std::invalid_argument("EncryptionConfig: theta must be positive");
        if (alpha < 0.0 || alpha >= 0.5) throw std::invalid_argument("EncryptionConfig: alpha must be in [0, 0.5)");
        if (t_loss <= 0.0) throw std::invalid_argument("EncryptionConfig: t_loss must be positive");
        if (max_iter_per_layer < 1) throw std::invalid_argument("EncryptionConfig: max_iter_per_layer must be >= 1");
        if (layer_ids.empty()) throw std::invalid_argument("EncryptionConfig: no layers selected");
        if (max_params && *max_params < 1) throw std::invalid_argument("EncryptionConfig: max_params must be >= 1");
        for (int id : layer_ids) {
            if (id < 0 || id >= static_cast<int>(net.layers.size()))
                throw std::invalid_argument("EncryptionConfig: layer id " + std::to_string(id) + " out of range");
            if (!net.layers[id].encryptable())
                throw std::invalid_argument("EncryptionConfig: layer " + std::to_string(id) + " is not encryptable");
        }
    }
};

// Layer weight range captured before the layer's first perturbation; the clip
// thresholds are derived from it and stay frozen for the whole run.
struct LayerSnapshot {
    int layer_id = -1;
    float w_min = 0.0f, w_max = 0.0f;
    float t_lo = 0.0f, t_hi = 0.0f;

    static LayerSnapshot capture(const Network& net, int layer_id, double alpha) {
        const Tensor& w = net.layers[layer_id].weights;
        if (w.data.empty()) throw std::invalid_argument("LayerSnapshot: layer has no weights");
        float mn = w.data[0], mx = w.data[0];
        for (float v : w.data) {
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
        LayerSnapshot s;
        s.layer_id = layer_id;
        s.w_min = mn;
        s.w_max = mx;
        float band = static_cast<float>(alpha * (static_cast<double>(mx) - mn));
        s.t_lo = mn + band;
        s.t_hi = mx - band;
        return s;
    }
};

// One perturbed weight: flat index within the layer's weight tensor and the
// effective (post-clip, cumulative) delta. Subtracting the delta restores the
// original weight bit-exactly.
struct PerturbRecord {
    int layer_id = -1;
    std::int64_t index = -1;
    float delta = 0.0f;
};

struct EncryptionOutcome {
    Network network;                  // the encrypted model
    std::vector<PerturbRecord> records;
    double final_loss = 0.0;
    bool reached_threshold = false;
    std::vector<std::pair<int, int>> iterations_per_layer;  // (layer_id, iterations used)
};

// Flat gradient of the mean loss over the encryption set w.r.t. one layer's
// weights, in index order.
inline std::vector<float> layer_gradient(const Network& net, const Batch& enc_set, int layer_id) {
    if (layer_id < 0 || layer_id >= static_cast<int>(net.layers.size()) || !net.layers[layer_id].encryptable())
        throw std::invalid_argument("layer_gradient: layer " + std::to_string(layer_id) + " is not encryptable");
    GradientSet grads = param_gradients(net, enc_set);
    return grads.for_layer(layer_id).wgrad.data;
}

// Argmax of |grad| over unmasked indices; ties go to the lowest index.
// Returns nullopt when every index is masked ("layer exhausted").
inline std::optional<std::int64_t> select_weight(const std::vector<float>& grad, const std::vector<std::uint8_t>& mask) {
    if (grad.size() != mask.size()) throw std::invalid_argument("select_weight: grad/mask length mismatch");
    std::optional<std::int64_t> best;
    float best_abs = -1.0f;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!mask[i]) continue;
        float a = std::fabs(grad[i]);
        if (a > best_abs) {
            best_abs = a;
            best = static_cast<std::int64_t>(i);
        }
    }
    return best;
}

// eta = theta * sign(dL/dw) * (max(W_l) - min(W_l)); sign(0) -> 0.
inline float perturbation(double theta, float grad_component, const LayerSnapshot& snap) {
    double s = grad_component > 0.0f ? 1.0 : (grad_component < 0.0f ? -1.0 : 0.0);
    return static_cast<float>(theta * s * (static_cast<double>(snap.w_max) - snap.w_min));
}

inline float clip(float w, const LayerSnapshot& snap) {
    if (w < snap.t_lo) return snap.t_lo;
    if (w > snap.t_hi) return snap.t_hi;
    return w;
}

namespace detail {

// Picks the final perturbed value so that float subtraction of the stored
// delta restores the original weight bit-exactly. Nudges by ulps toward the
// original value when the straight rounding would not invert; falls back to
// nudging the other way if that would leave the clip band.
inline bool exact_invertible(float old_w, float& new_w, float& delta, const LayerSnapshot& snap) {
    for (int tries = 0; tries < 8; ++tries) {
        float d = new_w - old_w;
        if (new_w - d == old_w) {
            delta = d;
            return d != 0.0f;
        }
        float toward = std::nextafter(new_w, old_w);
        if (toward >= snap.t_lo && toward <= snap.t_hi)
            new_w = toward;
        else
            new_w = std::nextafter(new_w, old_w < new_w ? snap.t_hi : snap.t_lo);
    }
    return false;
}

}  // namespace detail

// Iterative gradient-guided encryption. Visits layers in cfg.layer_ids order;
// each iteration perturbs exactly one weight and re-evaluates the loss on the
// encryption set, stopping as soon as it exceeds t_loss (or the perturbation
// budget is exhausted). The input network is not mutated.
inline EncryptionOutcome encrypt(const Network& net, const Batch& enc_set, const EncryptionConfig& cfg) {
    cfg.validate(net);
    if (enc_set.size() == 0) throw std::invalid_argument("encrypt: empty encryption set");

    EncryptionOutcome out;
    out.network = net;
    Network& model = out.network;

    // record index by (layer, weight index); cumulative delta per position
    auto find_record = [&](int lid, std::int64_t idx) -> PerturbRecord* {
        for (auto& r : out.records)
            if (r.layer_id == lid && r.index == idx) return &r;
        return nullptr;
    };
    // original weights looked up from the immutable input network
    auto original = [&](int lid, std::int64_t idx) { return net.layers[lid].weights.data[idx]; };

    double loss = cross_entropy(forward(model, enc_set), enc_set.labels);
    out.final_loss = loss;
    if (loss > cfg.t_loss) {
        out.reached_threshold = true;
        return out;
    }

    std::int64_t total_perturbations = 0;
    for (int lid : cfg.layer_ids) {
        LayerSnapshot snap = LayerSnapshot::capture(model, lid, cfg.alpha);
        Tensor& w = model.layers[lid].weights;
        std::vector<std::uint8_t> mask(w.data.size(), 1);
        int iters = 0;

        for (int i = 0; i < cfg.max_iter_per_layer; ++i) {
            if (loss > cfg.t_loss) {
                out.reached_threshold = true;
                break;
            }
            if (cfg.max_params && total_perturbations >= *cfg.max_params) break;

            std::vector<float> grad = layer_gradient(model, enc_set, lid);
            auto pick = select_weight(grad, mask);
            if (!pick) break;  // layer exhausted
            std::int64_t t = *pick;

            if (grad[t] == 0.0f) {  // sign(0): mask and skip
                mask[t] = 0;
                continue;
            }
            float eta = perturbation(cfg.theta, grad[t], snap);
            float raw = w.data[t] + eta;
            if (raw < snap.t_lo || raw > snap.t_hi) mask[t] = 0;

            float old_w = w.data[t];
            float orig_w = original(lid, t);
            float new_w = clip(raw, snap);
            // delta is relative to the *original* weight so one record per
            // position suffices for exact restoration
            float cum_delta = 0.0f;
            if (!detail::exact_invertible(orig_w, new_w, cum_delta, snap)) {
                mask[t] = 0;
                if (new_w == orig_w && old_w != orig_w) {
                    // landed back on the original: undo and drop the record
                    for (std::size_t k = 0; k < out.records.size(); ++k)
                        if (out.records[k].layer_id == lid && out.records[k].index == t) {
                            out.records.erase(out.records.begin() + k);
                            break;
                        }
                    w.data[t] = orig_w;
                    ++iters;
                    loss = cross_entropy(forward(model, enc_set), enc_set.labels);
                    out.final_loss = loss;
                }
                continue;  // no invertible value near the clip result
            }
            if (new_w == old_w) {  // clip saturated onto the current value
                mask[t] = 0;
                continue;
            }
            w.data[t] = new_w;
            if (PerturbRecord* r = find_record(lid, t))
                r->delta = cum_delta;
            else
                out.records.push_back({lid, t, cum_delta});
            ++total_perturbations;
            ++iters;

            loss = cross_entropy(forward(model, enc_set), enc_set.labels);
            out.final_loss = loss;
        }
        if (loss > cfg.t_loss) out.reached_threshold = true;
        out.iterations_per_layer.emplace_back(lid, iters);
        if (out.reached_threshold) break;
        if (cfg.max_params && total_perturbations >= *cfg.max_params) break;
    }
    out.final_loss = loss;
    return out;
}

}  // namespace advparams
