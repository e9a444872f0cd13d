// advparams command-line driver: train / encrypt / decrypt / attack / sweep /
// report, all driven by a flat key=value config file. Every command is
// deterministic: artifacts are byte-identical across reruns with the same
// config and seeds.
//
// Exit codes: 0 success, 1 config/IO error, 2 encryption threshold not
// reached, 3 integrity (digest) failure.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "advparams/advparams.hpp"

using json = nlohmann::ordered_json;
using namespace advparams;

namespace {

// ---- config file ----------------------------------------------------------

struct Config {
    std::map<std::string, std::string> kv;
    std::string path;

    bool has(const std::string& key) const { return kv.count(key) != 0; }
    std::string str(const std::string& key, const std::string& fallback) const {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    }
    std::string require(const std::string& key) const {
        auto it = kv.find(key);
        if (it == kv.end()) throw std::runtime_error(path + ": missing required key '" + key + "'");
        return it->second;
    }
    double num(const std::string& key, double fallback) const {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : std::stod(it->second);
    }
    std::int64_t integer(const std::string& key, std::int64_t fallback) const {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : std::stoll(it->second);
    }
};

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

Config load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    Config cfg;
    cfg.path = path;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(s.substr(0, eq)), val = trim(s.substr(eq + 1));
        if (key.empty()) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty key");
        cfg.kv[key] = val;
    }
    return cfg;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, sep)) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

// ---- dataset / model construction -----------------------------------------

std::pair<Dataset, Dataset> build_dataset(const Config& cfg) {
    std::string kind = cfg.str("dataset", "synth");
    if (kind == "synth") {
        return synth_blobs(static_cast<int>(cfg.integer("synth.classes", 10)),
                           static_cast<int>(cfg.integer("synth.dim", 2)),
                           static_cast<int>(cfg.integer("synth.per_class", 200)),
                           cfg.num("synth.sigma", 0.35),
                           static_cast<std::uint64_t>(cfg.integer("synth.seed", 10)),
                           cfg.num("synth.center_spread", 3.0));
    }
    if (kind == "idx") {
        Dataset train = load_idx(cfg.require("idx.train_images"), cfg.require("idx.train_labels"));
        Dataset test = load_idx(cfg.require("idx.test_images"), cfg.require("idx.test_labels"));
        return {std::move(train), std::move(test)};
    }
    throw std::runtime_error("dataset must be 'synth' or 'idx', got '" + kind + "'");
}

// Layer list syntax: "dense:2, dense:128, relu, dense:10" — also conv:OC:K[:stride],
// maxpool:K, flatten. Input widths are inferred from the running shape.
Network build_model(const Config& cfg, const Dataset& train) {
    Network net;
    net.name = cfg.str("model.name", "model");
    net.class_count = train.class_count;
    net.input_shape.assign(train.inputs.shape.begin() + 1, train.inputs.shape.end());

    std::vector<int> shape = net.input_shape;
    auto flat = [&shape]() {
        return std::accumulate(shape.begin(), shape.end(), 1, std::multiplies<int>());
    };
    for (const std::string& tok : split(cfg.require("model.layers"), ',')) {
        std::vector<std::string> parts = split(tok, ':');
        const std::string& op = parts[0];
        if (op == "dense") {
            if (parts.size() != 2) throw std::runtime_error("model.layers: dense:OUT, got '" + tok + "'");
            if (shape.size() != 1) throw std::runtime_error("dense after spatial output: add flatten first");
            int out = std::stoi(parts[1]);
            net.layers.push_back(dense(shape[0], out));
            shape = {out};
        } else if (op == "conv") {
            if (parts.size() < 3 || parts.size() > 4 || shape.size() != 3)
                throw std::runtime_error("model.layers: conv:OC:K[:stride] on (C,H,W) input, got '" + tok + "'");
            int oc = std::stoi(parts[1]), k = std::stoi(parts[2]);
            int stride = parts.size() == 4 ? std::stoi(parts[3]) : 1;
            net.layers.push_back(conv2d(shape[0], oc, k, k, stride));
            shape = {oc, (shape[1] - k) / stride + 1, (shape[2] - k) / stride + 1};
        } else if (op == "maxpool") {
            if (parts.size() != 2 || shape.size() != 3)
                throw std::runtime_error("model.layers: maxpool:K on (C,H,W) input, got '" + tok + "'");
            int k = std::stoi(parts[1]);
            net.layers.push_back(maxpool2d(k));
            shape = {shape[0], shape[1] / k, shape[2] / k};
        } else if (op == "relu") {
            net.layers.push_back(relu());
        } else if (op == "flatten") {
            net.layers.push_back(flatten());
            shape = {flat()};
        } else {
            throw std::runtime_error("model.layers: unknown layer '" + op + "'");
        }
    }
    if (shape.size() != 1 || shape[0] != net.class_count)
        throw std::runtime_error("model.layers: final output width " + std::to_string(flat()) +
                                 " != class count " + std::to_string(net.class_count));
    init_params(net, static_cast<std::uint64_t>(cfg.integer("model.seed", 0)));
    return net;
}

EncryptionConfig build_encryption_config(const Config& cfg, const Network& net, std::int64_t seed_override) {
    EncryptionConfig ec;
    ec.theta = cfg.num("encrypt.theta", 0.07);
    ec.alpha = cfg.num("encrypt.alpha", 0.05);
    ec.t_loss = cfg.num("encrypt.t_loss", 12.0);
    ec.max_iter_per_layer = static_cast<int>(cfg.integer("encrypt.max_iter", 18));
    if (cfg.has("encrypt.max_params")) ec.max_params = cfg.integer("encrypt.max_params", 0);

    ec.layer_ids.clear();
    if (cfg.has("encrypt.layers")) {
        for (const std::string& s : split(cfg.str("encrypt.layers", ""), ','))
            ec.layer_ids.push_back(std::stoi(s));
    } else {
        // Seeded shuffle of the encryptable layer ids, take the first k.
        std::vector<int> ids;
        for (int i = 0; i < static_cast<int>(net.layers.size()); ++i)
            if (net.layers[i].encryptable()) ids.push_back(i);
        std::int64_t k = cfg.integer("encrypt.layer_count", static_cast<std::int64_t>(ids.size()));
        if (k < 1 || k > static_cast<std::int64_t>(ids.size()))
            throw std::runtime_error("encrypt.layer_count out of range");
        std::mt19937 rng(static_cast<std::uint32_t>(cfg.integer("encrypt.layer_seed", 0)));
        std::shuffle(ids.begin(), ids.end(), rng);
        ids.resize(static_cast<std::size_t>(k));
        std::sort(ids.begin(), ids.end());
        ec.layer_ids = ids;
    }
    ec.seed = static_cast<std::uint64_t>(seed_override >= 0 ? seed_override : cfg.integer("encrypt.seed", 1));
    return ec;
}

// ---- artifacts ------------------------------------------------------------

std::string join(const std::string& dir, const std::string& name) { return dir + "/" + name; }

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory: " + dir);
}

void write_json(const json& j, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << j.dump(2) << "\n";
}

json attack_report_json(const AttackReport& rep) {
    json j;
    j["kind"] = rep.kind;
    j["params"] = rep.params;
    j["initial_accuracy"] = rep.initial_accuracy;
    j["final_accuracy"] = rep.final_accuracy;
    j["checkpoints"] = json::array();
    for (const auto& [v, a] : rep.checkpoints) j["checkpoints"].push_back({{"value", v}, {"accuracy", a}});
    return j;
}

// ---- subcommands ----------------------------------------------------------

int cmd_train(const Config& cfg, const std::string& out, std::int64_t seed_override) {
    auto [train_set, test_set] = build_dataset(cfg);
    Network net = build_model(cfg, train_set);

    TrainConfig tc;
    tc.optimizer = cfg.str("train.optimizer", "adam");
    tc.lr = cfg.num("train.lr", 0.003);
    tc.momentum = cfg.num("train.momentum", 0.9);
    tc.epochs = static_cast<int>(cfg.integer("train.epochs", 28));
    tc.batch_size = static_cast<int>(cfg.integer("train.batch_size", 128));
    tc.seed = static_cast<std::uint64_t>(seed_override >= 0 ? seed_override : cfg.integer("train.seed", 10));
    train(net, train_set, tc);

    ensure_dir(out);
    save_checkpoint(net, join(out, "model.ckpt"));
    double a_o = evaluate_accuracy(net, test_set.as_batch());
    json j;
    j["checkpoint"] = "model.ckpt";
    j["digest"] = network_digest(net);
    j["baseline_accuracy"] = a_o;
    j["train_samples"] = train_set.size();
    j["test_samples"] = test_set.size();
    write_json(j, join(out, "train_report.json"));
    std::printf("trained %s: A_o=%.4f, checkpoint %s\n", net.name.c_str(), a_o,
                join(out, "model.ckpt").c_str());
    return 0;
}

int cmd_encrypt(const Config& cfg, const std::string& out, std::int64_t seed_override) {
    auto [train_set, test_set] = build_dataset(cfg);
    Network net = load_checkpoint(cfg.str("paths.model", join(out, "model.ckpt")));
    Batch test = test_set.as_batch();

    int de_size = static_cast<int>(cfg.integer("encrypt.enc_set_size", 300));
    EncryptionConfig ec = build_encryption_config(cfg, net, seed_override);
    Batch de = sample_encryption_set(train_set, de_size, ec.seed).batch;

    double a_o = evaluate_accuracy(net, test);
    EncryptionOutcome outcome = encrypt(net, de, ec);
    double a_e = evaluate_accuracy(outcome.network, test);
    SecretKey key = make_key(outcome);

    ensure_dir(out);
    // Written alongside the original; model.ckpt is never overwritten.
    save_checkpoint(outcome.network, join(out, "encrypted.ckpt"));
    save_key(key, join(out, "key.json"));

    std::int64_t n_all = net.encryptable_weight_count();
    StealthReport stealth = stealth_report(net, outcome.network, key);
    json j;
    j["a_o"] = a_o;
    j["a_e"] = a_e;
    j["a_d"] = accuracy_drop(a_o, a_e);
    j["n_e"] = key.entries.size();
    j["n_all"] = n_all;
    j["proportion"] = static_cast<double>(key.entries.size()) / static_cast<double>(n_all);
    j["final_loss"] = outcome.final_loss;
    j["reached_threshold"] = outcome.reached_threshold;
    j["layer_ids"] = ec.layer_ids;
    j["stealth"] = {{"all_in_range", stealth.all_in_range},
                    {"delta_mu", stealth.delta_mu()},
                    {"delta_sigma", stealth.delta_sigma()}};
    write_json(j, join(out, "encrypt_report.json"));

    std::printf("A_o=%.4f A_e=%.4f A_d=%.4f n_e=%zu/%lld (%.4f%%)\n", a_o, a_e, a_o - a_e,
                key.entries.size(), static_cast<long long>(n_all),
                100.0 * static_cast<double>(key.entries.size()) / static_cast<double>(n_all));
    if (!outcome.reached_threshold) {
        std::fprintf(stderr, "warning: loss threshold not reached within budget; partial outputs written\n");
        return 2;
    }
    return 0;
}

int cmd_decrypt(const Config& cfg, const std::string& out) {
    Network enc = load_checkpoint(cfg.str("paths.encrypted", join(out, "encrypted.ckpt")));
    SecretKey key = load_key(cfg.str("paths.key", join(out, "key.json")));
    Network restored;
    try {
        restored = decrypt(enc, key);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "decrypt failed: %s\n", e.what());
        return 3;
    }
    ensure_dir(out);
    save_checkpoint(restored, join(out, "decrypted.ckpt"));
    std::printf("restored checkpoint %s (digest %s)\n", join(out, "decrypted.ckpt").c_str(),
                network_digest(restored).c_str());
    return 0;
}

int cmd_attack(const std::string& kind, const Config& cfg, const std::string& out,
               std::int64_t seed_override) {
    auto [train_set, test_set] = build_dataset(cfg);
    Network enc = load_checkpoint(cfg.str("paths.encrypted", join(out, "encrypted.ckpt")));
    Batch test = test_set.as_batch();

    AttackReport rep;
    if (kind == "finetune") {
        double fraction = cfg.num("attack.finetune.fraction", 0.1);
        std::uint64_t seed = static_cast<std::uint64_t>(
            seed_override >= 0 ? seed_override : cfg.integer("attack.finetune.seed", 1));
        std::vector<int> idx(test.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::mt19937 rng(static_cast<std::uint32_t>(seed));
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(std::max<std::size_t>(1, static_cast<std::size_t>(fraction * test.size())));
        Batch attacker = test_set.subset(idx);

        FineTuneConfig ft;
        ft.optimizer = cfg.str("attack.finetune.optimizer", "adam");
        ft.lr = cfg.num("attack.finetune.lr", 0.003);
        ft.momentum = cfg.num("attack.finetune.momentum", 0.0);
        ft.epochs = static_cast<int>(cfg.integer("attack.finetune.epochs", 100));
        ft.batch_size = static_cast<int>(cfg.integer("attack.finetune.batch_size", 32));
        ft.eval_every = static_cast<int>(cfg.integer("attack.finetune.eval_every", 10));
        ft.seed = seed;
        rep = fine_tune_attack(enc, attacker, ft, test);
    } else if (kind == "prune") {
        rep.kind = "prune";
        rep.initial_accuracy = evaluate_accuracy(enc, test);
        for (const std::string& s : split(cfg.str("attack.prune.rates", "0.1,0.3,0.5,0.7,0.9"), ',')) {
            double rate = std::stod(s);
            double a = evaluate_accuracy(prune_attack(enc, rate), test);
            rep.checkpoints.emplace_back(rate, a);
            rep.final_accuracy = a;
        }
    } else if (kind == "adaptive") {
        std::uint64_t seed = static_cast<std::uint64_t>(
            seed_override >= 0 ? seed_override : cfg.integer("attack.adaptive.seed", 101));
        int de_size = static_cast<int>(cfg.integer("encrypt.enc_set_size", 300));
        Batch guess = sample_encryption_set(train_set, de_size, seed).batch;
        EncryptionConfig guessed = build_encryption_config(cfg, enc, -1);
        guessed.seed = seed;
        rep = adaptive_attack(enc, guess, guessed, test);
    } else {
        throw std::runtime_error("unknown attack kind: " + kind);
    }

    ensure_dir(out);
    write_json(attack_report_json(rep), join(out, "attack_" + kind + ".json"));
    std::printf("%s attack: initial A=%.4f, final A=%.4f\n", kind.c_str(), rep.initial_accuracy,
                rep.final_accuracy);
    return 0;
}

int cmd_sweep(const std::string& axis, const Config& cfg, const std::string& out,
              std::int64_t seed_override) {
    auto [train_set, test_set] = build_dataset(cfg);
    Network net = load_checkpoint(cfg.str("paths.model", join(out, "model.ckpt")));
    Batch test = test_set.as_batch();
    int de_size = static_cast<int>(cfg.integer("encrypt.enc_set_size", 300));
    EncryptionConfig base = build_encryption_config(cfg, net, seed_override);
    Batch de = sample_encryption_set(train_set, de_size, base.seed).batch;

    json rows = json::array();
    auto run = [&](double value, const EncryptionConfig& ec) {
        EncryptionOutcome o = encrypt(net, de, ec);
        double a_e = evaluate_accuracy(o.network, test);
        rows.push_back({{"value", value},
                        {"a_e", a_e},
                        {"n_e", o.records.size()},
                        {"reached_threshold", o.reached_threshold}});
        std::printf("  %-10.4g A_e=%.4f n_e=%zu\n", value, a_e, o.records.size());
        return a_e;
    };

    std::printf("sweep %s:\n", axis.c_str());
    std::string trend;
    if (axis == "t-loss") {
        std::vector<double> values;
        for (const std::string& s : split(cfg.str("sweep.t_loss", "1,2,4,6,8,10,12,15"), ','))
            values.push_back(std::stod(s));
        double prev = 2.0;
        bool monotone = true;
        for (double v : values) {
            EncryptionConfig ec = base;
            ec.t_loss = v;
            double a = run(v, ec);
            if (a > prev + 0.03) monotone = false;
            prev = a;
        }
        trend = monotone ? "A_e non-increasing in T_loss (within 3-point noise)"
                         : "A_e NOT monotone in T_loss";
    } else if (axis == "layer") {
        double best = 1.0;
        int best_layer = -1;
        for (int li = 0; li < static_cast<int>(net.layers.size()); ++li) {
            if (!net.layers[li].encryptable()) continue;
            EncryptionConfig ec = base;
            ec.layer_ids = {li};
            double a = run(li, ec);
            if (a < best) {
                best = a;
                best_layer = li;
            }
        }
        trend = "best single layer " + std::to_string(best_layer) + " alone reaches A_e=" +
                std::to_string(best);
    } else if (axis == "n-e") {
        // Axis values are perturbation-step budgets; each row reports the
        // resulting distinct encrypted-parameter count n_e alongside A_e.
        std::vector<std::int64_t> values;
        for (const std::string& s : split(cfg.str("sweep.n_e", "1,2,4,6,8,12,16,24"), ','))
            values.push_back(std::stoll(s));
        double guess = 2.0 / net.class_count;
        std::int64_t collapse_ne = -1;
        for (std::int64_t v : values) {
            EncryptionConfig ec = base;
            ec.max_params = v;
            ec.t_loss = 1e30;  // budget-limited: expose A_e as a function of the budget alone
            EncryptionOutcome o = encrypt(net, de, ec);
            double a_e = evaluate_accuracy(o.network, test);
            rows.push_back({{"budget", v}, {"n_e", o.records.size()}, {"a_e", a_e}});
            std::printf("  %-10lld A_e=%.4f n_e=%zu\n", static_cast<long long>(v), a_e,
                        o.records.size());
            if (collapse_ne < 0 && a_e <= guess)
                collapse_ne = static_cast<std::int64_t>(o.records.size());
        }
        if (collapse_ne >= 0)
            trend = "A_e <= 2x random guess first reached with n_e=" + std::to_string(collapse_ne) +
                    " of " + std::to_string(net.encryptable_weight_count()) + " parameters";
        else
            trend = "A_e never reached 2x random guess within the swept budgets";
    } else {
        throw std::runtime_error("unknown sweep axis: " + axis);
    }

    ensure_dir(out);
    json j;
    j["axis"] = axis;
    j["rows"] = rows;
    j["trend"] = trend;
    write_json(j, join(out, "sweep_" + axis + ".json"));
    std::printf("  %s\n", trend.c_str());
    return 0;
}

int cmd_report(const Config& cfg, const std::string& out) {
    Network original = load_checkpoint(cfg.str("paths.model", join(out, "model.ckpt")));
    Network enc = load_checkpoint(cfg.str("paths.encrypted", join(out, "encrypted.ckpt")));
    SecretKey key = load_key(cfg.str("paths.key", join(out, "key.json")));
    auto [train_set, test_set] = build_dataset(cfg);
    Batch test = test_set.as_batch();

    StealthReport rep = stealth_report(original, enc, key);
    double a_o = evaluate_accuracy(original, test);
    double a_e = evaluate_accuracy(enc, test);
    json j;
    j["a_o"] = a_o;
    j["a_e"] = a_e;
    j["a_d"] = accuracy_drop(a_o, a_e);
    j["n_encrypted"] = rep.n_encrypted;
    j["n_all"] = rep.n_all;
    j["all_in_range"] = rep.all_in_range;
    j["key_matches_diff"] = rep.key_matches_diff;
    j["mu_before"] = rep.mu_before;
    j["mu_after"] = rep.mu_after;
    j["sigma_before"] = rep.sigma_before;
    j["sigma_after"] = rep.sigma_after;
    write_json(j, join(out, "report.json"));
    std::printf("A_o=%.4f A_e=%.4f A_d=%.4f n_e=%lld/%lld in_range=%s dmu=%.3e dsigma=%.3e\n", a_o,
                a_e, a_o - a_e, static_cast<long long>(rep.n_encrypted),
                static_cast<long long>(rep.n_all), rep.all_in_range ? "yes" : "no", rep.delta_mu(),
                rep.delta_sigma());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial weight encryption: train, encrypt, decrypt, attack, sweep, report"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    std::int64_t seed_override = -1;
    app.add_option("--config", config_path, "Config file (flat key = value)")->required();
    app.add_option("--seed", seed_override, "Override the subcommand's primary seed");
    app.add_option("--out", out_dir, "Output directory");

    auto* sc_train = app.add_subcommand("train", "Train the model and write a checkpoint");
    auto* sc_encrypt = app.add_subcommand("encrypt", "Encrypt a trained checkpoint");
    auto* sc_decrypt = app.add_subcommand("decrypt", "Restore the model from the secret key");
    auto* sc_attack = app.add_subcommand("attack", "Run an attack against the encrypted model");
    std::string attack_kind;
    sc_attack->add_option("kind", attack_kind, "finetune | prune | adaptive")->required();
    auto* sc_sweep = app.add_subcommand("sweep", "Sweep one encryption axis");
    std::string sweep_axis;
    sc_sweep->add_option("axis", sweep_axis, "t-loss | layer | n-e")->required();
    auto* sc_report = app.add_subcommand("report", "Summarize efficacy and stealth of the artifacts");

    CLI11_PARSE(app, argc, argv);

    try {
        Config cfg = load_config(config_path);
        if (sc_train->parsed()) return cmd_train(cfg, out_dir, seed_override);
        if (sc_encrypt->parsed()) return cmd_encrypt(cfg, out_dir, seed_override);
        if (sc_decrypt->parsed()) return cmd_decrypt(cfg, out_dir);
        if (sc_attack->parsed()) return cmd_attack(attack_kind, cfg, out_dir, seed_override);
        if (sc_sweep->parsed()) return cmd_sweep(sweep_axis, cfg, out_dir, seed_override);
        if (sc_report->parsed()) return cmd_report(cfg, out_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
