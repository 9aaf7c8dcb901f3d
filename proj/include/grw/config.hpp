#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "grw/data.hpp"
#include "grw/trainer.hpp"

namespace grw {

// Flat key = value run configuration. The scientifically meaningful keys are
// required so every run file states them explicitly; plumbing keys carry
// defaults. `grw run --print-config` emits a complete template.
struct RunConfig {
    TrainerConfig trainer;

    // dataset source: csv paths or an inline synthetic block
    bool use_synthetic = true;
    SyntheticSpec synthetic;
    std::uint64_t synthetic_seed = 1234; // dataset stays fixed across training seeds
    std::size_t synthetic_tasks = 5;
    std::string features_csv, attributes_csv, schedule_json;

    std::string out_dir = "grw_run";
};

namespace detail {

struct KeyValueFile {
    std::map<std::string, std::string> entries;
    std::string path;

    bool has(const std::string& key) const { return entries.count(key) > 0; }

    const std::string& require(const std::string& key) const {
        auto it = entries.find(key);
        if (it == entries.end())
            throw ConfigError(path + ": missing required key `" + key + "`");
        return it->second;
    }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = entries.find(key);
        return it == entries.end() ? fallback : it->second;
    }
};

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline KeyValueFile parse_key_value_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    KeyValueFile kv;
    kv.path = path;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (std::size_t hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        std::string stripped = trim(line);
        if (stripped.empty()) continue;
        std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + " line " + std::to_string(line_no) +
                              ": expected key = value");
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        if (key.empty())
            throw ConfigError(path + " line " + std::to_string(line_no) + ": empty key");
        kv.entries[key] = value;
    }
    return kv;
}

inline double to_double(const KeyValueFile& kv, const std::string& key,
                        const std::string& raw) {
    char* end = nullptr;
    double v = std::strtod(raw.c_str(), &end);
    if (end == raw.c_str() || *end != '\0')
        throw ConfigError(kv.path + ": key `" + key + "` has bad numeric value '" + raw + "'");
    return v;
}

inline std::uint64_t to_u64(const KeyValueFile& kv, const std::string& key,
                            const std::string& raw) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(raw.c_str(), &end, 10);
    if (end == raw.c_str() || *end != '\0')
        throw ConfigError(kv.path + ": key `" + key + "` has bad integer value '" + raw + "'");
    return static_cast<std::uint64_t>(v);
}

inline bool to_bool(const KeyValueFile& kv, const std::string& key, const std::string& raw) {
    if (raw == "true") return true;
    if (raw == "false") return false;
    throw ConfigError(kv.path + ": key `" + key + "` must be true or false");
}

inline double require_double(const KeyValueFile& kv, const std::string& key) {
    return to_double(kv, key, kv.require(key));
}

inline std::uint64_t require_u64(const KeyValueFile& kv, const std::string& key) {
    return to_u64(kv, key, kv.require(key));
}

inline double optional_double(const KeyValueFile& kv, const std::string& key, double fb) {
    return kv.has(key) ? to_double(kv, key, kv.entries.at(key)) : fb;
}

inline std::uint64_t optional_u64(const KeyValueFile& kv, const std::string& key,
                                  std::uint64_t fb) {
    return kv.has(key) ? to_u64(kv, key, kv.entries.at(key)) : fb;
}

} // namespace detail

inline RunConfig parse_run_config(const std::string& path) {
    using namespace detail;
    KeyValueFile kv = parse_key_value_file(path);
    RunConfig config;
    TrainerConfig& t = config.trainer;

    t.weights.lambda_cls = require_double(kv, "lambda_cls");
    t.weights.lambda_c = require_double(kv, "lambda_c");
    t.weights.lambda_i = require_double(kv, "lambda_i");
    t.weights.lambda_rd = require_double(kv, "lambda_rd");
    t.weights.lambda_rg = require_double(kv, "lambda_rg");
    t.weights.tau = require_double(kv, "tau");
    t.weights.gamma = require_double(kv, "gamma");
    t.weights.walk_steps = static_cast<std::size_t>(require_u64(kv, "walk_steps"));
    t.weights.sal_margin = optional_double(kv, "sal_margin", 0.1);
    t.weights.sal_neighbors =
        static_cast<std::size_t>(optional_u64(kv, "sal_neighbors", 3));

    t.epochs = static_cast<std::size_t>(require_u64(kv, "epochs"));
    t.batch_size = static_cast<std::size_t>(require_u64(kv, "batch_size"));
    t.buffer_capacity = static_cast<std::size_t>(require_u64(kv, "buffer_capacity"));
    t.seed = require_u64(kv, "seed");

    std::string halluc = kv.require("hallucination");
    if (halluc == "interpolation")
        t.hallucination = HallucinationMode::Interpolation;
    else if (halluc == "dictionary")
        t.hallucination = HallucinationMode::Dictionary;
    else
        throw ConfigError(kv.path +
                          ": key `hallucination` must be interpolation or dictionary");

    t.g_hidden = static_cast<std::size_t>(optional_u64(kv, "g_hidden", 128));
    t.d_hidden = static_cast<std::size_t>(optional_u64(kv, "d_hidden", 128));
    t.noise_dim = static_cast<std::size_t>(optional_u64(kv, "noise_dim", 0));
    t.lr = optional_double(kv, "lr", 0.005);
    t.weight_decay = optional_double(kv, "weight_decay", 1e-5);
    t.dict_lr = optional_double(kv, "dict_lr", 0.0);
    t.center_samples = static_cast<std::size_t>(optional_u64(kv, "center_samples", 2));
    t.generative_per_class =
        static_cast<std::size_t>(optional_u64(kv, "generative_per_class", 200));
    if (kv.has("eval_all_classes"))
        t.eval_all_classes = to_bool(kv, "eval_all_classes", kv.entries.at("eval_all_classes"));

    std::string replay = kv.get("replay_mode", "real");
    if (replay == "real")
        t.replay_mode = ReplayBuffer::Mode::Real;
    else if (replay == "generative")
        t.replay_mode = ReplayBuffer::Mode::Generative;
    else
        throw ConfigError(kv.path + ": key `replay_mode` must be real or generative");

    config.use_synthetic = !kv.has("features_csv");
    if (config.use_synthetic) {
        config.synthetic.n_classes =
            static_cast<std::size_t>(optional_u64(kv, "synthetic_classes", 20));
        config.synthetic.attr_dim =
            static_cast<std::size_t>(optional_u64(kv, "synthetic_attr_dim", 16));
        config.synthetic.feature_dim =
            static_cast<std::size_t>(optional_u64(kv, "synthetic_feature_dim", 32));
        config.synthetic.samples_per_class =
            static_cast<std::size_t>(optional_u64(kv, "synthetic_samples_per_class", 100));
        config.synthetic.noise_sigma = optional_double(kv, "synthetic_noise_sigma", 0.3);
        std::string family = kv.get("synthetic_attr_family", "unit_sphere");
        if (family == "unit_sphere")
            config.synthetic.attr_family = AttrFamily::UnitSphere;
        else if (family == "sparse_binary")
            config.synthetic.attr_family = AttrFamily::SparseBinary;
        else
            throw ConfigError(kv.path +
                              ": key `synthetic_attr_family` must be unit_sphere or "
                              "sparse_binary");
        config.synthetic.sparse_p = optional_double(kv, "synthetic_sparse_p", 0.3);
        config.synthetic_tasks =
            static_cast<std::size_t>(optional_u64(kv, "synthetic_tasks", 5));
        config.synthetic_seed = optional_u64(kv, "synthetic_seed", 1234);
    } else {
        config.features_csv = kv.require("features_csv");
        config.attributes_csv = kv.require("attributes_csv");
        config.schedule_json = kv.require("schedule_json");
    }

    config.out_dir = kv.get("out_dir", "grw_run");

    t.weights.validate();
    if (t.batch_size < 2)
        throw ConfigError(kv.path + ": key `batch_size` must be at least 2");
    if (t.epochs == 0) throw ConfigError(kv.path + ": key `epochs` must be positive");
    if (config.use_synthetic) {
        try {
            config.synthetic.validate();
        } catch (const ConfigError& e) {
            throw ConfigError(kv.path + ": " + e.what());
        }
    }
    return config;
}

// Canonical sorted key=value dump of every resolved setting; hashed into the
// summary and persisted in the manifest.
inline std::string resolved_config_text(const RunConfig& config) {
    const TrainerConfig& t = config.trainer;
    std::map<std::string, std::string> out;
    auto put_d = [&](const std::string& k, double v) {
        out[k] = detail::format_double(v);
    };
    auto put_u = [&](const std::string& k, std::uint64_t v) { out[k] = std::to_string(v); };
    put_d("lambda_cls", t.weights.lambda_cls);
    put_d("lambda_c", t.weights.lambda_c);
    put_d("lambda_i", t.weights.lambda_i);
    put_d("lambda_rd", t.weights.lambda_rd);
    put_d("lambda_rg", t.weights.lambda_rg);
    put_d("tau", t.weights.tau);
    put_d("gamma", t.weights.gamma);
    put_u("walk_steps", t.weights.walk_steps);
    put_d("sal_margin", t.weights.sal_margin);
    put_u("sal_neighbors", t.weights.sal_neighbors);
    put_u("epochs", t.epochs);
    put_u("batch_size", t.batch_size);
    put_u("buffer_capacity", t.buffer_capacity);
    put_u("seed", t.seed);
    out["hallucination"] =
        t.hallucination == HallucinationMode::Interpolation ? "interpolation" : "dictionary";
    put_u("g_hidden", t.g_hidden);
    put_u("d_hidden", t.d_hidden);
    put_u("noise_dim", t.noise_dim);
    put_d("lr", t.lr);
    put_d("weight_decay", t.weight_decay);
    put_d("dict_lr", t.dict_lr);
    put_u("center_samples", t.center_samples);
    out["replay_mode"] = t.replay_mode == ReplayBuffer::Mode::Real ? "real" : "generative";
    put_u("generative_per_class", t.generative_per_class);
    out["eval_all_classes"] = t.eval_all_classes ? "true" : "false";
    if (config.use_synthetic) {
        put_u("synthetic_classes", config.synthetic.n_classes);
        put_u("synthetic_attr_dim", config.synthetic.attr_dim);
        put_u("synthetic_feature_dim", config.synthetic.feature_dim);
        put_u("synthetic_samples_per_class", config.synthetic.samples_per_class);
        put_d("synthetic_noise_sigma", config.synthetic.noise_sigma);
        out["synthetic_attr_family"] =
            config.synthetic.attr_family == AttrFamily::UnitSphere ? "unit_sphere"
                                                                   : "sparse_binary";
        put_d("synthetic_sparse_p", config.synthetic.sparse_p);
        put_u("synthetic_tasks", config.synthetic_tasks);
        put_u("synthetic_seed", config.synthetic_seed);
    } else {
        out["features_csv"] = config.features_csv;
        out["attributes_csv"] = config.attributes_csv;
        out["schedule_json"] = config.schedule_json;
    }
    std::string text;
    for (const auto& [k, v] : out) text += k + " = " + v + "\n";
    return text;
}

inline std::uint64_t fnv1a_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string default_config_template() {
    return R"(# grw run configuration
# loss weights
lambda_cls = 1
lambda_c = 1
lambda_i = 1
lambda_rd = 1
lambda_rg = 1
tau = 10
gamma = 0.7
walk_steps = 3
sal_margin = 0.1
sal_neighbors = 3

# training
epochs = 50
batch_size = 64
buffer_capacity = 5000
seed = 2222
hallucination = interpolation   # interpolation | dictionary
lr = 0.005
weight_decay = 0.00001
dict_lr = 0                     # 0 means: use lr
g_hidden = 128
d_hidden = 128
noise_dim = 0                   # 0 means: attribute width
center_samples = 2
replay_mode = real              # real | generative
generative_per_class = 200
eval_all_classes = true

# data: synthetic benchmark (omit and set features_csv/attributes_csv/
# schedule_json to run from CSV exports instead)
synthetic_classes = 20
synthetic_attr_dim = 16
synthetic_feature_dim = 32
synthetic_samples_per_class = 100
synthetic_noise_sigma = 0.3
synthetic_attr_family = unit_sphere
synthetic_sparse_p = 0.3
synthetic_tasks = 5
synthetic_seed = 1234
)";
}

// Synthetic dataset spec file for `grw synth`.
inline SyntheticSpec parse_synth_spec(const std::string& path, std::size_t& tasks,
                                      std::uint64_t& seed) {
    using namespace detail;
    KeyValueFile kv = parse_key_value_file(path);
    SyntheticSpec spec;
    spec.n_classes = static_cast<std::size_t>(optional_u64(kv, "classes", 20));
    spec.attr_dim = static_cast<std::size_t>(optional_u64(kv, "attr_dim", 16));
    spec.feature_dim = static_cast<std::size_t>(optional_u64(kv, "feature_dim", 32));
    spec.samples_per_class =
        static_cast<std::size_t>(optional_u64(kv, "samples_per_class", 100));
    spec.noise_sigma = optional_double(kv, "noise_sigma", 0.3);
    std::string family = kv.get("attr_family", "unit_sphere");
    if (family == "unit_sphere")
        spec.attr_family = AttrFamily::UnitSphere;
    else if (family == "sparse_binary")
        spec.attr_family = AttrFamily::SparseBinary;
    else
        throw ConfigError(path + ": key `attr_family` must be unit_sphere or sparse_binary");
    spec.sparse_p = optional_double(kv, "sparse_p", 0.3);
    tasks = static_cast<std::size_t>(optional_u64(kv, "tasks", 5));
    seed = optional_u64(kv, "seed", 1234);
    spec.validate();
    if (spec.n_classes % tasks != 0)
        throw ConfigError(path + ": classes must be divisible by tasks");
    return spec;
}

} // namespace grw
