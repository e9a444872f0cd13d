#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "advparams/keystore.hpp"
#include "advparams/network.hpp"

namespace advparams {

// A_d = A_o - A_e. May be negative when encryption failed; reported as-is.
inline double accuracy_drop(double a_original, double a_encrypted) {
    if (a_original < 0.0 || a_original > 1.0 || a_encrypted < 0.0 || a_encrypted > 1.0)
        throw std::invalid_argument("accuracy_drop: accuracies must be in [0,1]");
    return a_original - a_encrypted;
}

struct LayerWeightStats {
    int layer_id = -1;
    float w_min = 0.0f, w_max = 0.0f;
};

struct WeightStats {
    std::vector<LayerWeightStats> per_layer;
    double mean = 0.0;    // over encryptable-layer weights only
    double stddev = 0.0;  // population sigma
};

inline WeightStats weight_stats(const Network& net) {
    WeightStats s;
    double sum = 0.0, sumsq = 0.0;
    std::int64_t count = 0;
    for (int i = 0; i < static_cast<int>(net.layers.size()); ++i) {
        const Layer& l = net.layers[i];
        if (!l.encryptable()) continue;
        LayerWeightStats ls;
        ls.layer_id = i;
        ls.w_min = l.weights.data[0];
        ls.w_max = l.weights.data[0];
        for (float v : l.weights.data) {
            ls.w_min = std::min(ls.w_min, v);
            ls.w_max = std::max(ls.w_max, v);
            sum += v;
            sumsq += static_cast<double>(v) * v;
            ++count;
        }
        s.per_layer.push_back(ls);
    }
    if (count == 0) throw std::invalid_argument("weight_stats: network has no encryptable weights");
    s.mean = sum / count;
    double var = sumsq / count - s.mean * s.mean;
    s.stddev = var > 0.0 ? std::sqrt(var) : 0.0;
    return s;
}

struct StealthReport {
    bool all_in_range = true;                 // every encrypted weight within its layer's original [min,max]
    std::vector<std::pair<int, std::int64_t>> out_of_range;  // (layer, index) offenders
    std::int64_t n_encrypted = 0;             // weights differing between the two networks
    std::int64_t n_all = 0;                   // encryptable weights total
    bool key_matches_diff = true;             // key entry count == direct diff count
    double mu_before = 0.0, mu_after = 0.0;
    double sigma_before = 0.0, sigma_after = 0.0;

    double delta_mu() const { return std::fabs(mu_after - mu_before); }
    double delta_sigma() const { return std::fabs(sigma_after - sigma_before); }
};

// Range and distribution check over the encrypted weights: each must stay
// within its layer's original [min, max], and the global weight distribution
// must be essentially unchanged.
inline StealthReport stealth_report(const Network& original, const Network& encrypted, const SecretKey& key) {
    if (original.layers.size() != encrypted.layers.size())
        throw std::invalid_argument("stealth_report: architecture mismatch");
    for (std::size_t i = 0; i < original.layers.size(); ++i)
        if (original.layers[i].kind != encrypted.layers[i].kind ||
            !original.layers[i].weights.same_shape(encrypted.layers[i].weights))
            throw std::invalid_argument("stealth_report: architecture mismatch at layer " + std::to_string(i));

    StealthReport rep;
    WeightStats before = weight_stats(original);
    WeightStats after = weight_stats(encrypted);
    rep.mu_before = before.mean;
    rep.mu_after = after.mean;
    rep.sigma_before = before.stddev;
    rep.sigma_after = after.stddev;
    rep.n_all = original.encryptable_weight_count();

    for (std::size_t i = 0; i < original.layers.size(); ++i) {
        if (!original.layers[i].encryptable()) continue;
        const auto& wo = original.layers[i].weights.data;
        const auto& we = encrypted.layers[i].weights.data;
        float mn = wo[0], mx = wo[0];
        for (float v : wo) {
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
        for (std::size_t k = 0; k < wo.size(); ++k) {
            if (wo[k] != we[k]) {
                ++rep.n_encrypted;
                if (we[k] < mn || we[k] > mx) {
                    rep.all_in_range = false;
                    rep.out_of_range.emplace_back(static_cast<int>(i), static_cast<std::int64_t>(k));
                }
            }
        }
    }
    rep.key_matches_diff = static_cast<std::int64_t>(key.entries.size()) == rep.n_encrypted;
    return rep;
}

}  // namespace advparams
