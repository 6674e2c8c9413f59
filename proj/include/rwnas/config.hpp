#pragma once

// flat key=value run configuration shared by every cli subcommand.  the same
// field table drives parsing and serialization, so a saved config always
// round-trips and unknown keys are rejected with a line number.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rwnas/dataio.hpp"
#include "rwnas/genome.hpp"
#include "rwnas/moea.hpp"
#include "rwnas/netgraph.hpp"
#include "rwnas/rwe.hpp"

namespace rwnas {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    // dataset
    std::string dataset = "synth";  // synth | cifar10
    std::string data_dir;           // cifar10: directory with data_batch_*.bin
    std::uint64_t dataset_seed = 0;
    int synth_classes = 4;
    int synth_count = 10000;
    int synth_resolution = 32;
    float synth_offset = 0.22f;
    float synth_texture = 0.10f;
    float synth_noise = 0.08f;
    double train_fraction = 0.8;

    // search space and network scale
    std::string space = "micro";  // micro | macro | custom
    bool compat_mode = true;
    int init_channels = 10;
    int layers = 5;
    int phase_channels = 32;
    int custom_genes = 0;  // custom space: gene count with shared bounds
    int custom_lo = 0;
    int custom_hi = 0;

    // random-weight evaluation
    int epochs = 30;
    int batch = 512;
    float lr = 0.25f;
    float momentum = 0.9f;
    int folds = 5;
    int eval_batch = 512;

    // evolutionary search
    int pop_size = 20;
    int max_gen = 30;
    double crossover_prob = 0.9;
    double mutation_prob = -1.0;  // -1: 1/genome_length
    double eta_m = 20.0;
    double hv_ref_error = 1.0;
    double hv_ref_flops = 1000.0;  // millions

    // ablation
    int ablation_generations = 20;
    int ablation_trials = 5;
    std::string estimators = "noise,neg_flops,neg_params";
    std::string table;  // benchmark table csv path

    // run
    std::uint64_t seed = 0;
    int workers = 1;
};

namespace detail {

// the single source of truth for key names and their binding; Cfg is
// RunConfig or const RunConfig
template <class Cfg, class F>
void for_each_config_field(Cfg& c, F&& f) {
    f("dataset", c.dataset);
    f("data_dir", c.data_dir);
    f("dataset_seed", c.dataset_seed);
    f("synth_classes", c.synth_classes);
    f("synth_count", c.synth_count);
    f("synth_resolution", c.synth_resolution);
    f("synth_offset", c.synth_offset);
    f("synth_texture", c.synth_texture);
    f("synth_noise", c.synth_noise);
    f("train_fraction", c.train_fraction);
    f("space", c.space);
    f("compat_mode", c.compat_mode);
    f("init_channels", c.init_channels);
    f("layers", c.layers);
    f("phase_channels", c.phase_channels);
    f("custom_genes", c.custom_genes);
    f("custom_lo", c.custom_lo);
    f("custom_hi", c.custom_hi);
    f("epochs", c.epochs);
    f("batch", c.batch);
    f("lr", c.lr);
    f("momentum", c.momentum);
    f("folds", c.folds);
    f("eval_batch", c.eval_batch);
    f("pop_size", c.pop_size);
    f("max_gen", c.max_gen);
    f("crossover_prob", c.crossover_prob);
    f("mutation_prob", c.mutation_prob);
    f("eta_m", c.eta_m);
    f("hv_ref_error", c.hv_ref_error);
    f("hv_ref_flops", c.hv_ref_flops);
    f("ablation_generations", c.ablation_generations);
    f("ablation_trials", c.ablation_trials);
    f("estimators", c.estimators);
    f("table", c.table);
    f("seed", c.seed);
    f("workers", c.workers);
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline void parse_value(const std::string& s, std::string& out) { out = s; }

inline void parse_value(const std::string& s, bool& out) {
    if (s == "true" || s == "1")
        out = true;
    else if (s == "false" || s == "0")
        out = false;
    else
        throw ConfigError("expected true/false, got '" + s + "'");
}

inline void parse_value(const std::string& s, int& out) {
    std::size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(s, &pos);
    } catch (const std::exception&) {
        throw ConfigError("expected integer, got '" + s + "'");
    }
    if (pos != s.size()) throw ConfigError("expected integer, got '" + s + "'");
    out = static_cast<int>(v);
}

inline void parse_value(const std::string& s, std::uint64_t& out) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &pos);
    } catch (const std::exception&) {
        throw ConfigError("expected unsigned integer, got '" + s + "'");
    }
    if (pos != s.size() || s[0] == '-')
        throw ConfigError("expected unsigned integer, got '" + s + "'");
    out = v;
}

inline void parse_value(const std::string& s, double& out) {
    std::size_t pos = 0;
    try {
        out = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw ConfigError("expected number, got '" + s + "'");
    }
    if (pos != s.size()) throw ConfigError("expected number, got '" + s + "'");
}

inline void parse_value(const std::string& s, float& out) {
    double v = 0.0;
    parse_value(s, v);
    out = static_cast<float>(v);
}

inline std::string format_value(const std::string& v) { return v; }
inline std::string format_value(bool v) { return v ? "true" : "false"; }
inline std::string format_value(int v) { return std::to_string(v); }
inline std::string format_value(std::uint64_t v) { return std::to_string(v); }

inline std::string format_value(float v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

inline std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (!seen.insert(key).second)
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        bool found = false;
        detail::for_each_config_field(cfg, [&](const char* name, auto& field) {
            if (found || key != name) return;
            found = true;
            try {
                detail::parse_value(value, field);
            } catch (const ConfigError& e) {
                throw ConfigError("line " + std::to_string(lineno) + ": key '" + key +
                                  "': " + e.what());
            }
        });
        if (!found)
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        return parse_config(in);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

// every key, declaration order, one per line; reruns emit identical bytes
inline void save_config(const RunConfig& cfg, std::ostream& out) {
    detail::for_each_config_field(cfg, [&](const char* name, const auto& field) {
        out << name << " = " << detail::format_value(field) << "\n";
    });
}

inline void save_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write config file: " + path);
    save_config(cfg, out);
}

inline void validate_config(const RunConfig& c) {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (c.dataset != "synth" && c.dataset != "cifar10")
        fail("dataset must be synth or cifar10, got '" + c.dataset + "'");
    if (c.dataset == "cifar10" && c.data_dir.empty()) fail("cifar10 dataset needs data_dir");
    if (c.synth_classes < 2) fail("synth_classes must be >= 2");
    if (c.synth_count < 2) fail("synth_count must be >= 2");
    if (c.synth_resolution < 1) fail("synth_resolution must be >= 1");
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
        fail("train_fraction must be in (0, 1)");
    if (c.space != "micro" && c.space != "macro" && c.space != "custom")
        fail("space must be micro, macro or custom, got '" + c.space + "'");
    if (c.space == "custom") {
        if (c.custom_genes < 1) fail("custom space needs custom_genes >= 1");
        if (c.custom_hi < c.custom_lo) fail("custom space needs custom_hi >= custom_lo");
    }
    if (c.init_channels < 1) fail("init_channels must be >= 1");
    if (c.layers < 1) fail("layers must be >= 1");
    if (c.phase_channels < 1) fail("phase_channels must be >= 1");
    if (c.epochs < 1) fail("epochs must be >= 1");
    if (c.batch < 1) fail("batch must be >= 1");
    if (c.folds < 1) fail("folds must be >= 1");
    if (c.eval_batch < 1) fail("eval_batch must be >= 1");
    if (c.pop_size < 2) fail("pop_size must be >= 2");
    if (c.max_gen < 0) fail("max_gen must be >= 0");
    if (!(c.crossover_prob >= 0.0 && c.crossover_prob <= 1.0))
        fail("crossover_prob must be in [0, 1]");
    if (c.mutation_prob > 1.0) fail("mutation_prob must be <= 1");
    if (c.eta_m <= 0.0) fail("eta_m must be > 0");
    if (c.ablation_generations < 0) fail("ablation_generations must be >= 0");
    if (c.ablation_trials < 1) fail("ablation_trials must be >= 1");
    if (c.workers < 1) fail("workers must be >= 1");
}

inline SearchSpaceSpec space_from_config(const RunConfig& c) {
    if (c.space == "micro") return micro_space(c.compat_mode);
    if (c.space == "macro") return macro_space();
    return custom_space(
        std::vector<GeneBounds>(c.custom_genes, GeneBounds{c.custom_lo, c.custom_hi}));
}

inline ScaleConfig scale_from_config(const RunConfig& c, int num_classes) {
    ScaleConfig s;
    s.init_channels = c.init_channels;
    s.layers = c.layers;
    s.phase_channels = c.phase_channels;
    s.input_h = s.input_w = c.synth_resolution;
    s.num_classes = num_classes;
    return s;
}

inline RweConfig rwe_from_config(const RunConfig& c) {
    RweConfig r;
    r.epochs = c.epochs;
    r.batch = c.batch;
    r.lr = c.lr;
    r.momentum = c.momentum;
    r.folds = c.folds;
    r.eval_batch = c.eval_batch;
    r.seed = c.seed;
    return r;
}

inline SearchConfig search_from_config(const RunConfig& c) {
    SearchConfig s;
    s.pop_size = c.pop_size;
    s.max_gen = c.max_gen;
    s.crossover_prob = c.crossover_prob;
    s.mutation_prob = c.mutation_prob;
    s.eta_m = c.eta_m;
    s.hv_ref1 = c.hv_ref_error;
    s.hv_ref2 = c.hv_ref_flops;
    s.seed = c.seed;
    s.workers = c.workers;
    return s;
}

// loads (or synthesizes) the dataset and applies the train/valid split
inline ImageDataset dataset_from_config(const RunConfig& c) {
    ImageDataset ds;
    if (c.dataset == "synth") {
        SynthConfig scfg;
        scfg.classes = c.synth_classes;
        scfg.count = c.synth_count;
        scfg.resolution = c.synth_resolution;
        scfg.offset_amp = c.synth_offset;
        scfg.texture_amp = c.synth_texture;
        scfg.noise = c.synth_noise;
        ds = synth_blobs(scfg, c.dataset_seed);
    } else {
        ds = load_cifar10_binary(c.data_dir);
    }
    make_split(ds, c.train_fraction, c.dataset_seed);
    return ds;
}

}  // namespace rwnas
