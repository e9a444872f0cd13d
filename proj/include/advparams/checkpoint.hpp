#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "advparams/network.hpp"

namespace advparams {

// Checkpoint layout (all multi-byte integers little-endian):
//   magic "ADVP", u16 version,
//   name (u32 length + bytes), u32 class_count,
//   input shape (u32 rank + u32 dims),
//   layer table (u32 count, then per layer: u8 kind, i32 in,out,kh,kw,stride,pool,
//                u32 weight rank + dims, u32 bias rank + dims),
//   then f32 weight/bias buffers in layer order.
inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
    b.push_back(v & 0xff);
    b.push_back((v >> 8) & 0xff);
}
inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}
inline void put_f32(std::vector<std::uint8_t>& b, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(b, bits);
}

struct Reader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;
    std::string where;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated data in " + where);
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = buf[pos] | (std::uint16_t(buf[pos + 1]) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_network(const Network& net) {
    using namespace detail;
    std::vector<std::uint8_t> b;
    b.insert(b.end(), {'A', 'D', 'V', 'P'});
    put_u16(b, kCheckpointVersion);
    put_u32(b, static_cast<std::uint32_t>(net.name.size()));
    b.insert(b.end(), net.name.begin(), net.name.end());
    put_u32(b, static_cast<std::uint32_t>(net.class_count));
    put_u32(b, static_cast<std::uint32_t>(net.input_shape.size()));
    for (int d : net.input_shape) put_u32(b, static_cast<std::uint32_t>(d));
    put_u32(b, static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& l : net.layers) {
        b.push_back(static_cast<std::uint8_t>(l.kind));
        for (int v : {l.in, l.out, l.kh, l.kw, l.stride, l.pool}) put_u32(b, static_cast<std::uint32_t>(v));
        put_u32(b, static_cast<std::uint32_t>(l.weights.shape.size()));
        for (int d : l.weights.shape) put_u32(b, static_cast<std::uint32_t>(d));
        put_u32(b, static_cast<std::uint32_t>(l.bias.shape.size()));
        for (int d : l.bias.shape) put_u32(b, static_cast<std::uint32_t>(d));
    }
    for (const auto& l : net.layers) {
        for (float f : l.weights.data) put_f32(b, f);
        for (float f : l.bias.data) put_f32(b, f);
    }
    return b;
}

inline Network deserialize_network(const std::vector<std::uint8_t>& bytes, const std::string& where = "<memory>") {
    detail::Reader r{bytes, 0, where};
    r.need(4);
    if (std::memcmp(bytes.data(), "ADVP", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + where);
    r.pos = 4;
    std::uint16_t version = r.u16();
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) + " in " + where);
    Network net;
    std::uint32_t name_len = r.u32();
    r.need(name_len);
    net.name.assign(bytes.begin() + r.pos, bytes.begin() + r.pos + name_len);
    r.pos += name_len;
    net.class_count = static_cast<int>(r.u32());
    std::uint32_t rank = r.u32();
    for (std::uint32_t i = 0; i < rank; ++i) net.input_shape.push_back(static_cast<int>(r.u32()));
    std::uint32_t nlayers = r.u32();
    std::vector<std::pair<std::vector<int>, std::vector<int>>> shapes;
    for (std::uint32_t i = 0; i < nlayers; ++i) {
        r.need(1);
        Layer l;
        l.kind = static_cast<LayerKind>(bytes[r.pos++]);
        if (static_cast<int>(l.kind) > 4) throw std::runtime_error("checkpoint: unknown layer kind in " + where);
        l.in = static_cast<int>(r.u32());
        l.out = static_cast<int>(r.u32());
        l.kh = static_cast<int>(r.u32());
        l.kw = static_cast<int>(r.u32());
        l.stride = static_cast<int>(r.u32());
        l.pool = static_cast<int>(r.u32());
        std::vector<int> wshape, bshape;
        std::uint32_t wr = r.u32();
        for (std::uint32_t k = 0; k < wr; ++k) wshape.push_back(static_cast<int>(r.u32()));
        std::uint32_t br = r.u32();
        for (std::uint32_t k = 0; k < br; ++k) bshape.push_back(static_cast<int>(r.u32()));
        shapes.emplace_back(std::move(wshape), std::move(bshape));
        net.layers.push_back(std::move(l));
    }
    for (std::uint32_t i = 0; i < nlayers; ++i) {
        auto fill = [&](const std::vector<int>& s) {
            if (s.empty()) return Tensor();
            Tensor t = Tensor::zeros(s);
            for (auto& f : t.data) f = r.f32();
            return t;
        };
        net.layers[i].weights = fill(shapes[i].first);
        net.layers[i].bias = fill(shapes[i].second);
    }
    if (r.pos != bytes.size()) throw std::runtime_error("checkpoint: trailing bytes in " + where);
    return net;
}

inline void save_checkpoint(const Network& net, const std::string& path) {
    auto bytes = serialize_network(net);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline Network load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_network(bytes, path);
}

inline std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr))
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

// Digest of the network's canonical checkpoint bytes; binds keys to one model.
inline std::string network_digest(const Network& net) { return sha256_hex(serialize_network(net)); }

}  // namespace advparams
