#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "advparams/nn.hpp"
#include "advparams/tensor.hpp"

namespace advparams {

struct Dataset {
    Tensor inputs;
    std::vector<int> labels;
    int class_count = 0;
    std::string split;  // "train" / "test"

    int size() const { return static_cast<int>(labels.size()); }

    Batch as_batch() const { return Batch{inputs, labels}; }

    Batch subset(const std::vector<int>& idx) const {
        std::int64_t per = inputs.numel() / size();
        std::vector<int> shape = inputs.shape;
        shape[0] = static_cast<int>(idx.size());
        Tensor out = Tensor::zeros(shape);
        std::vector<int> lab(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            std::copy_n(inputs.data.begin() + idx[k] * per, per, out.data.begin() + k * per);
            lab[k] = labels[idx[k]];
        }
        return Batch{std::move(out), std::move(lab)};
    }
};

// The labeled sample set driving gradient computation during encryption.
struct EncryptionSet {
    Batch batch;
    std::vector<int> source_indices;          // into the training set
    std::vector<int> class_histogram;
};

// Gaussian clusters, one per class, deterministic under seed. 80/20 split.
// Cluster centers are standard-normal scaled by center_spread.
inline std::pair<Dataset, Dataset> synth_blobs(int classes, int dim, int per_class, double spread,
                                               std::uint64_t seed, double center_spread = 1.0) {
    if (classes < 2 || per_class < 1 || dim < 1) throw std::invalid_argument("synth_blobs: invalid sizes");
    std::mt19937 rng(static_cast<std::uint32_t>(seed));
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<std::vector<double>> centers(classes, std::vector<double>(dim));
    for (auto& c : centers)
        for (auto& v : c) v = center_spread * gauss(rng);

    int n_train_pc = std::max(1, (per_class * 4) / 5);
    if (per_class >= 2 && n_train_pc == per_class) n_train_pc = per_class - 1;
    int n_test_pc = per_class - n_train_pc;

    auto make = [&](int count_pc, const std::string& tag) {
        Dataset d;
        d.class_count = classes;
        d.split = tag;
        d.inputs = Tensor::zeros({classes * count_pc, dim});
        d.labels.resize(static_cast<std::size_t>(classes) * count_pc);
        std::size_t row = 0;
        for (int c = 0; c < classes; ++c)
            for (int k = 0; k < count_pc; ++k, ++row) {
                float* out = d.inputs.data.data() + row * dim;
                for (int j = 0; j < dim; ++j)
                    out[j] = static_cast<float>(centers[c][j] + spread * gauss(rng));
                d.labels[row] = c;
            }
        return d;
    };
    Dataset train = make(n_train_pc, "train");
    Dataset test = n_test_pc > 0 ? make(n_test_pc, "test") : Dataset{Tensor(), {}, classes, "test"};

    // shuffle train row order
    std::vector<int> perm(train.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Batch shuffled = train.subset(perm);
    train.inputs = std::move(shuffled.inputs);
    train.labels = std::move(shuffled.labels);
    return {std::move(train), std::move(test)};
}

namespace detail {

inline std::uint32_t read_be32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("IDX: truncated header in " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
}

}  // namespace detail

// Fashion-MNIST style IDX pair: u8 images scaled to [0,1], labels as class ids.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream fi(images_path, std::ios::binary);
    if (!fi) throw std::runtime_error("IDX: cannot open " + images_path);
    if (detail::read_be32(fi, images_path) != 0x00000803u)
        throw std::runtime_error("IDX: bad image magic in " + images_path);
    std::uint32_t n = detail::read_be32(fi, images_path);
    std::uint32_t h = detail::read_be32(fi, images_path);
    std::uint32_t w = detail::read_be32(fi, images_path);

    std::ifstream fl(labels_path, std::ios::binary);
    if (!fl) throw std::runtime_error("IDX: cannot open " + labels_path);
    if (detail::read_be32(fl, labels_path) != 0x00000801u)
        throw std::runtime_error("IDX: bad label magic in " + labels_path);
    std::uint32_t nl = detail::read_be32(fl, labels_path);
    if (n != nl)
        throw std::runtime_error("IDX: image count " + std::to_string(n) + " in " + images_path +
                                 " != label count " + std::to_string(nl) + " in " + labels_path);
    if (n == 0) throw std::runtime_error("IDX: empty dataset in " + images_path);

    std::vector<unsigned char> pix(static_cast<std::size_t>(n) * h * w);
    if (!fi.read(reinterpret_cast<char*>(pix.data()), static_cast<std::streamsize>(pix.size())))
        throw std::runtime_error("IDX: truncated pixel data in " + images_path);
    std::vector<unsigned char> lab(n);
    if (!fl.read(reinterpret_cast<char*>(lab.data()), static_cast<std::streamsize>(lab.size())))
        throw std::runtime_error("IDX: truncated label data in " + labels_path);

    Dataset d;
    d.inputs = Tensor::zeros({static_cast<int>(n), 1, static_cast<int>(h), static_cast<int>(w)});
    for (std::size_t i = 0; i < pix.size(); ++i) d.inputs.data[i] = pix[i] / 255.0f;
    d.labels.assign(lab.begin(), lab.end());
    d.class_count = *std::max_element(d.labels.begin(), d.labels.end()) + 1;
    d.split = "train";
    return d;
}

// N samples without replacement. Stratified by class when N >= C, uniform
// otherwise. Deterministic under seed.
inline EncryptionSet sample_encryption_set(const Dataset& train, int n, std::uint64_t seed) {
    if (n < 1 || n > train.size())
        throw std::invalid_argument("sample_encryption_set: N=" + std::to_string(n) +
                                    " out of range for dataset of " + std::to_string(train.size()));
    std::mt19937 rng(static_cast<std::uint32_t>(seed));
    const int C = train.class_count;
    std::vector<int> chosen;

    if (n >= C) {
        std::vector<std::vector<int>> by_class(C);
        for (int i = 0; i < train.size(); ++i) by_class[train.labels[i]].push_back(i);
        for (auto& pool : by_class) std::shuffle(pool.begin(), pool.end(), rng);
        std::vector<std::size_t> cursor(C, 0);
        int c = 0;
        while (static_cast<int>(chosen.size()) < n) {
            if (cursor[c] < by_class[c].size()) chosen.push_back(by_class[c][cursor[c]++]);
            c = (c + 1) % C;
            // all pools exhausted cannot happen: n <= |train|
        }
    } else {
        std::vector<int> idx(train.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        chosen.assign(idx.begin(), idx.begin() + n);
    }
    std::shuffle(chosen.begin(), chosen.end(), rng);

    EncryptionSet es;
    es.batch = train.subset(chosen);
    es.source_indices = std::move(chosen);
    es.class_histogram.assign(C, 0);
    for (int lab : es.batch.labels) es.class_histogram[lab]++;
    return es;
}

}  // namespace advparams
