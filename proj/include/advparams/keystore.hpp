#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "advparams/checkpoint.hpp"
#include "advparams/encrypt.hpp"
#include "advparams/network.hpp"

namespace advparams {

inline constexpr int kKeyVersion = 1;

// The secret key: perturbation records grouped per layer (encryption order
// preserved), bound to the encrypted model by a digest of its checkpoint
// bytes. Deltas are stored as raw float32 bit patterns.
struct SecretKey {
    int version = kKeyVersion;
    std::string model_digest;
    std::vector<PerturbRecord> entries;

    bool operator==(const SecretKey&) const = default;
};

inline bool operator==(const PerturbRecord& a, const PerturbRecord& b) {
    std::uint32_t ba, bb;
    std::memcpy(&ba, &a.delta, 4);
    std::memcpy(&bb, &b.delta, 4);
    return a.layer_id == b.layer_id && a.index == b.index && ba == bb;
}

inline SecretKey make_key(const EncryptionOutcome& outcome) {
    SecretKey k;
    k.model_digest = network_digest(outcome.network);
    k.entries = outcome.records;
    return k;
}

namespace detail {

inline std::string delta_bits_hex(float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    char buf[9];
    std::snprintf(buf, sizeof(buf), "%08x", bits);
    return buf;
}

inline float delta_from_hex(const std::string& s) {
    if (s.size() != 8 || s.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos)
        throw std::runtime_error("key: malformed delta_bits '" + s + "'");
    std::uint32_t bits = static_cast<std::uint32_t>(std::stoul(s, nullptr, 16));
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace detail

inline void save_key(const SecretKey& key, const std::string& path) {
    nlohmann::json j;
    j["version"] = key.version;
    j["model_digest"] = key.model_digest;
    // group per layer, encryption order preserved within and across groups
    std::vector<int> layer_order;
    for (const auto& e : key.entries)
        if (std::find(layer_order.begin(), layer_order.end(), e.layer_id) == layer_order.end())
            layer_order.push_back(e.layer_id);
    j["layers"] = nlohmann::json::array();
    for (int lid : layer_order) {
        nlohmann::json lj;
        lj["layer_id"] = lid;
        lj["entries"] = nlohmann::json::array();
        for (const auto& e : key.entries)
            if (e.layer_id == lid)
                lj["entries"].push_back({{"index", e.index}, {"delta_bits", detail::delta_bits_hex(e.delta)}});
        j["layers"].push_back(std::move(lj));
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("key: cannot open " + path + " for writing");
    f << j.dump(2) << "\n";
    if (!f) throw std::runtime_error("key: write failed for " + path);
}

inline SecretKey load_key(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("key: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("key: malformed file " + path + ": " + e.what());
    }
    try {
        SecretKey k;
        k.version = j.at("version").get<int>();
        if (k.version != kKeyVersion)
            throw std::runtime_error("key: unsupported version " + std::to_string(k.version) + " in " + path);
        k.model_digest = j.at("model_digest").get<std::string>();
        for (const auto& lj : j.at("layers")) {
            int lid = lj.at("layer_id").get<int>();
            for (const auto& ej : lj.at("entries")) {
                PerturbRecord r;
                r.layer_id = lid;
                r.index = ej.at("index").get<std::int64_t>();
                r.delta = detail::delta_from_hex(ej.at("delta_bits").get<std::string>());
                k.entries.push_back(r);
            }
        }
        // duplicate (layer, index) pairs would make restoration ambiguous
        std::map<std::pair<int, std::int64_t>, int> seen;
        for (const auto& e : k.entries)
            if (++seen[{e.layer_id, e.index}] > 1)
                throw std::runtime_error("key: duplicate entry for layer " + std::to_string(e.layer_id) +
                                         " index " + std::to_string(e.index) + " in " + path);
        return k;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("key: malformed file " + path + ": " + e.what());
    }
}

// Removes each recorded perturbation (w <- w~ - v). Refuses to run against a
// model whose digest does not match the key. Returns a new network; the
// result equals the pre-encryption model bit-exactly.
inline Network decrypt(const Network& encrypted, const SecretKey& key) {
    std::string digest = network_digest(encrypted);
    if (digest != key.model_digest)
        throw std::runtime_error("decrypt: key digest " + key.model_digest.substr(0, 12) +
                                 "... does not match model digest " + digest.substr(0, 12) + "...");
    Network out = encrypted;
    for (const auto& e : key.entries) {
        if (e.layer_id < 0 || e.layer_id >= static_cast<int>(out.layers.size()) ||
            !out.layers[e.layer_id].encryptable())
            throw std::runtime_error("decrypt: key names invalid layer " + std::to_string(e.layer_id));
        Tensor& w = out.layers[e.layer_id].weights;
        if (e.index < 0 || e.index >= w.numel())
            throw std::runtime_error("decrypt: index " + std::to_string(e.index) + " out of range for layer " +
                                     std::to_string(e.layer_id));
        w.data[e.index] = w.data[e.index] - e.delta;
    }
    return out;
}

}  // namespace advparams
