#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "mlrn/builders.hpp"
#include "mlrn/error.hpp"
#include "mlrn/graph_json.hpp"
#include "mlrn/transform.hpp"

namespace mlrn {

// Architecture selector: a named builder plus its knobs, or a graph-spec
// file. `transform` applies the multi-level rewrite after building.
struct ArchSpec {
    std::string name = "resnet20";  // resnetN | newnet | wrnD-K | spec
    std::string spec_path;
    int classes = 10;
    int width_mult = 1;
    CombineMode combine = CombineMode::add;
    bool transform = false;
    PoolMode pool_mode = PoolMode::channel_mean;
};

inline NetworkGraph build_arch(const ArchSpec& a, int base_width = 0, int input_hw = 32) {
    NetworkGraph g;
    if (a.name == "spec") {
        if (a.spec_path.empty()) throw Error("arch 'spec' needs spec_path");
        g = load_graph_file(a.spec_path);
    } else if (a.name == "newnet") {
        g = build_newnet(a.classes, a.width_mult, a.pool_mode, base_width ? base_width : 32, input_hw);
    } else if (a.name.rfind("resnet", 0) == 0) {
        int layers = 0;
        try {
            layers = std::stoi(a.name.substr(6));
        } catch (...) {
            throw Error("bad arch name '" + a.name + "': expected resnetN");
        }
        if (layers < 8 || (layers - 2) % 6 != 0)
            throw Error("arch '" + a.name + "': layer count must be 6n+2");
        g = build_resnet((layers - 2) / 6, a.classes, a.width_mult, a.combine,
                         base_width ? base_width : 16, input_hw);
    } else if (a.name.rfind("wrn", 0) == 0) {
        const auto dash = a.name.find('-');
        if (dash == std::string::npos)
            throw Error("bad arch name '" + a.name + "': expected wrnD-K");
        int depth = 0, widen = 0;
        try {
            depth = std::stoi(a.name.substr(3, dash - 3));
            widen = std::stoi(a.name.substr(dash + 1));
        } catch (...) {
            throw Error("bad arch name '" + a.name + "': expected wrnD-K");
        }
        g = build_wideresnet(depth, widen, a.classes);
    } else {
        throw Error("unknown arch '" + a.name +
                    "' (valid: resnetN, newnet, wrnD-K, spec)");
    }
    if (a.transform) g = apply_multilevel_transform(g, a.pool_mode);
    return g;
}

// Full experiment description. Mirrors the plain-text config keys one-to-one.
struct TrainConfig {
    ArchSpec arch;
    std::string data = "cifar10";  // cifar10 | cifar100
    std::string data_path;         // falls back to $MLRN_DATA_ROOT
    int epochs = 400;
    int batch_size = 10;
    double lr0 = 0.01;
    double lr_decay_factor = 0.1;
    int lr_step_epochs = 100;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::uint64_t seed = 1;
    std::string out_dir = "run";
    std::string precision = "float";  // float | double
    int eval_every = 0;               // 0: every epoch up to 100 epochs, else every 5
    bool augment = true;
    bool normalize = true;
    int train_subset = 0;  // first-k slice, 0 = full split
    int test_subset = 0;
    bool log_wall_time = true;  // off: wall_seconds column written as 0

    void validate() const {
        if (epochs < 1) throw Error("config: epochs must be >= 1");
        if (batch_size < 1) throw Error("config: batch_size must be >= 1");
        if (lr0 <= 0 || lr_decay_factor <= 0) throw Error("config: rates must be positive");
        if (lr_step_epochs < 1) throw Error("config: lr_step_epochs must be >= 1");
        if (data != "cifar10" && data != "cifar100")
            throw Error("config: data must be cifar10 or cifar100");
        if (precision != "float" && precision != "double")
            throw Error("config: precision must be float or double");
        if (momentum < 0 || weight_decay < 0)
            throw Error("config: momentum and weight_decay must be >= 0");
    }

    int resolved_eval_every() const {
        if (eval_every > 0) return eval_every;
        return epochs > 100 ? 5 : 1;
    }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ParseError("config: bad boolean '" + v + "' for key '" + key + "'");
}

}  // namespace detail

// Applies one key=value setting. Unknown keys are hard errors.
inline void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
    try {
        if (key == "arch") cfg.arch.name = value;
        else if (key == "spec_path") { cfg.arch.name = "spec"; cfg.arch.spec_path = value; }
        else if (key == "classes") cfg.arch.classes = std::stoi(value);
        else if (key == "width_mult") cfg.arch.width_mult = std::stoi(value);
        else if (key == "combine") {
            if (value != "add" && value != "max") throw ParseError("config: combine must be add or max");
            cfg.arch.combine = value == "add" ? CombineMode::add : CombineMode::max;
        } else if (key == "transform") cfg.arch.transform = detail::parse_bool(value, key);
        else if (key == "pool_mode") {
            if (value == "channel_mean") cfg.arch.pool_mode = PoolMode::channel_mean;
            else if (value == "per_channel_gap") cfg.arch.pool_mode = PoolMode::per_channel_gap;
            else throw ParseError("config: pool_mode must be channel_mean or per_channel_gap");
        } else if (key == "data") cfg.data = value;
        else if (key == "data_path") cfg.data_path = value;
        else if (key == "epochs") cfg.epochs = std::stoi(value);
        else if (key == "batch_size") cfg.batch_size = std::stoi(value);
        else if (key == "lr0") cfg.lr0 = std::stod(value);
        else if (key == "lr_decay_factor") cfg.lr_decay_factor = std::stod(value);
        else if (key == "lr_step_epochs") cfg.lr_step_epochs = std::stoi(value);
        else if (key == "momentum") cfg.momentum = std::stod(value);
        else if (key == "weight_decay") cfg.weight_decay = std::stod(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "out_dir") cfg.out_dir = value;
        else if (key == "precision") cfg.precision = value;
        else if (key == "eval_every") cfg.eval_every = std::stoi(value);
        else if (key == "augment") cfg.augment = detail::parse_bool(value, key);
        else if (key == "normalize") cfg.normalize = detail::parse_bool(value, key);
        else if (key == "train_subset") cfg.train_subset = std::stoi(value);
        else if (key == "test_subset") cfg.test_subset = std::stoi(value);
        else if (key == "log_wall_time") cfg.log_wall_time = detail::parse_bool(value, key);
        else throw ParseError("config: unknown key '" + key + "'");
    } catch (const ParseError&) {
        throw;
    } catch (const std::exception&) {
        throw ParseError("config: bad value '" + value + "' for key '" + key + "'");
    }
}

// Plain-text config: one key=value per line, '#' starts a comment.
inline TrainConfig parse_config_text(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(lineno) + ": expected key=value");
        auto strip = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        apply_config_kv(cfg, strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    }
    return cfg;
}

inline TrainConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

}  // namespace mlrn
