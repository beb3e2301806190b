#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vac/attack.hpp"
#include "vac/elbo.hpp"
#include "vac/errors.hpp"
#include "vac/model.hpp"
#include "vac/optim.hpp"

namespace vac {

// ----- INI-style key/value file -----------------------------------------------
//
//   [section]
//   key = value        # trailing comments allowed
//
// Keys are addressed as "section.key". Unknown keys are rejected so typos
// surface immediately.

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline std::map<std::string, std::string> parse_ini(std::istream& is, const std::string& what) {
    std::map<std::string, std::string> kv;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(what + ":" + std::to_string(lineno) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(what + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(what + ":" + std::to_string(lineno) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (kv.count(full))
            throw ConfigError(what + ":" + std::to_string(lineno) + ": duplicate key " + full);
        kv[full] = value;
    }
    return kv;
}

namespace cfgdetail {

inline double to_double(const std::string& v, const std::string& field) {
    std::size_t pos = 0;
    double out = 0;
    try {
        out = std::stod(v, &pos);
    } catch (...) {
        throw ConfigError(field + ": not a number: '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError(field + ": trailing characters in '" + v + "'");
    return out;
}

inline long long to_int(const std::string& v, const std::string& field) {
    std::size_t pos = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &pos);
    } catch (...) {
        throw ConfigError(field + ": not an integer: '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError(field + ": trailing characters in '" + v + "'");
    return out;
}

inline bool to_bool(const std::string& v, const std::string& field) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(field + ": expected true/false, got '" + v + "'");
}

template <class T, class F>
std::vector<T> to_list(const std::string& v, const std::string& field, F&& convert) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError(field + ": empty list element");
        out.push_back(convert(item, field));
    }
    if (out.empty()) throw ConfigError(field + ": empty list");
    return out;
}

} // namespace cfgdetail

// ----- experiment configuration --------------------------------------------------

struct ExperimentConfig {
    // [data]
    std::string dataset = "synthetic-digits"; // mnist | fmnist | synthetic-digits |
                                              // synthetic-fashion | blobs
    std::string train_images, train_labels, test_images, test_labels; // IDX paths
    std::size_t train_count = 10000; // 0 = all available
    std::size_t test_count = 2000;
    std::size_t image_hw = 28; // synthetic fixtures only; IDX files carry their own

    ModelConfig model;
    TrainConfig train;
    OptimizerConfig optimizer;

    // [attack]
    AttackConfig attack; // epsilon field unused; the grid below drives runs
    std::vector<double> epsilon_grid;

    // [detect]
    std::size_t detect_fit_count = 1000; // train-split samples per detector fit

    // [sweep]
    std::string sweep_mode = "l1"; // l1 | capacity
    std::vector<double> sweep_values;

    // [reconstruct]
    double reconstruct_epsilon = 0.3;
    std::size_t reconstruct_count = 24;

    // [run]
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string preset = "desk";

    bool dataset_is_fashion_like() const {
        return dataset == "fmnist" || dataset == "synthetic-fashion";
    }

    void apply_preset(const std::string& name) {
        preset = name;
        if (name == "desk") {
            train_count = 10000;
            test_count = 2000;
            train.epochs = 10;
            // Small batches buy 5x more optimizer steps for the same epoch
            // budget, and a small beta keeps the capacity force from drowning
            // the classifier gradient in the short desk schedule.
            train.batch_size = 20;
            train.beta = 0.5;
            train.l1_strength = 1e-6;
            optimizer.lr_drop_epochs = {4, 8};
            model.conv_widths = {16, 32, 48};
        } else if (name == "full") {
            train_count = 60000;
            test_count = 10000;
            train.epochs = 60;
            train.l1_strength = 1e-6;
            optimizer.lr_drop_epochs = {10, 30};
            model.conv_widths = {96, 96, 192};
        } else {
            throw ConfigError("run.preset: unknown preset '" + name + "' (desk|full)");
        }
    }

    // Dataset-dependent defaults for anything the file left unset.
    void finalize() {
        if (epsilon_grid.empty())
            epsilon_grid = dataset_is_fashion_like()
                               ? std::vector<double>{0.0, 0.025, 0.05, 0.075, 0.1}
                               : std::vector<double>{0.0, 0.075, 0.15, 0.225, 0.3};
        if (sweep_values.empty()) {
            if (sweep_mode == "capacity")
                sweep_values = {0.01, 0.1, 1.0, 10.0};
            else
                sweep_values = dataset_is_fashion_like()
                                   ? std::vector<double>{1e-03, 1e-04, 1e-05, 1e-06}
                                   : std::vector<double>{1e-06, 5e-07, 1e-07, 5e-08};
        }
        if (dataset == "blobs" && image_hw == 28) image_hw = 8;
        model.image_h = model.image_w = image_hw;
        train.seed = seed;
    }

    void validate() const {
        static const std::vector<std::string> known = {"mnist", "fmnist", "synthetic-digits",
                                                       "synthetic-fashion", "blobs"};
        if (std::find(known.begin(), known.end(), dataset) == known.end())
            throw ConfigError("data.dataset: unknown dataset '" + dataset + "'");
        if (dataset == "mnist" || dataset == "fmnist") {
            if (train_images.empty() || train_labels.empty() || test_images.empty() ||
                test_labels.empty())
                throw ConfigError("data: " + dataset +
                                  " requires train_images/train_labels/test_images/test_labels");
        }
        if (sweep_mode != "l1" && sweep_mode != "capacity")
            throw ConfigError("sweep.mode: expected l1|capacity, got '" + sweep_mode + "'");
        for (double e : epsilon_grid)
            if (e < 0 || e > 1)
                throw ConfigError("attack.epsilon_grid: value " + std::to_string(e) +
                                  " outside [0,1]");
        if (reconstruct_epsilon < 0 || reconstruct_epsilon > 1)
            throw ConfigError("reconstruct.epsilon: outside [0,1]");
        if (out_dir.empty()) throw ConfigError("run.out: empty output directory");
        if (epsilon_grid.empty()) throw ConfigError("attack.epsilon_grid: empty");
        model.validate();
        train.validate();
        optimizer.validate();
        AttackConfig probe = attack;
        probe.epsilon = epsilon_grid.back();
        probe.validate();
    }

    // Keys are consumed from the parsed map; anything left over is unknown.
    void apply_keys(std::map<std::string, std::string> kv, const std::string& what) {
        using namespace cfgdetail;
        auto take = [&](const char* key) {
            auto it = kv.find(key);
            if (it == kv.end()) return std::string();
            std::string v = it->second;
            kv.erase(it);
            return v;
        };
        std::string v;

        if (!(v = take("run.preset")).empty()) apply_preset(v);

        if (!(v = take("data.dataset")).empty()) dataset = v;
        if (!(v = take("data.train_images")).empty()) train_images = v;
        if (!(v = take("data.train_labels")).empty()) train_labels = v;
        if (!(v = take("data.test_images")).empty()) test_images = v;
        if (!(v = take("data.test_labels")).empty()) test_labels = v;
        if (!(v = take("data.train_count")).empty())
            train_count = std::size_t(to_int(v, "data.train_count"));
        if (!(v = take("data.test_count")).empty())
            test_count = std::size_t(to_int(v, "data.test_count"));
        if (!(v = take("data.image_hw")).empty())
            image_hw = std::size_t(to_int(v, "data.image_hw"));

        if (!(v = take("model.latent_dim")).empty())
            model.latent_dim = std::size_t(to_int(v, "model.latent_dim"));
        if (!(v = take("model.conv_widths")).empty()) {
            model.conv_widths.clear();
            for (long long w : to_list<long long>(v, "model.conv_widths", to_int))
                model.conv_widths.push_back(std::size_t(w));
        }
        if (!(v = take("model.classifier_hidden")).empty())
            model.classifier_hidden = std::size_t(to_int(v, "model.classifier_hidden"));
        if (!(v = take("model.likelihood")).empty()) {
            if (v == "bernoulli")
                model.likelihood = Likelihood::bernoulli;
            else if (v == "gaussian")
                model.likelihood = Likelihood::gaussian;
            else
                throw ConfigError("model.likelihood: expected bernoulli|gaussian");
        }

        if (!(v = take("train.epochs")).empty())
            train.epochs = std::size_t(to_int(v, "train.epochs"));
        if (!(v = take("train.batch_size")).empty())
            train.batch_size = std::size_t(to_int(v, "train.batch_size"));
        if (!(v = take("train.mc_samples")).empty())
            train.mc_samples = std::size_t(to_int(v, "train.mc_samples"));
        if (!(v = take("train.beta")).empty()) train.beta = to_double(v, "train.beta");
        if (!(v = take("train.capacity")).empty())
            train.capacity_C = to_double(v, "train.capacity");
        if (!(v = take("train.capacity_ramp_iters")).empty())
            train.capacity_ramp_iters = std::size_t(to_int(v, "train.capacity_ramp_iters"));
        if (!(v = take("train.l1")).empty()) train.l1_strength = to_double(v, "train.l1");
        if (!(v = take("train.grad_clip")).empty())
            train.grad_clip = to_double(v, "train.grad_clip");
        if (!(v = take("train.with_classifier")).empty())
            train.with_classifier = to_bool(v, "train.with_classifier");

        if (!(v = take("optimizer.learning_rate")).empty())
            optimizer.learning_rate = to_double(v, "optimizer.learning_rate");
        if (!(v = take("optimizer.momentum")).empty())
            optimizer.momentum = to_double(v, "optimizer.momentum");
        if (!(v = take("optimizer.weight_decay")).empty())
            optimizer.weight_decay = to_double(v, "optimizer.weight_decay");
        if (!(v = take("optimizer.lr_drop_epochs")).empty()) {
            optimizer.lr_drop_epochs.clear();
            for (long long e : to_list<long long>(v, "optimizer.lr_drop_epochs", to_int))
                optimizer.lr_drop_epochs.push_back(int(e));
        }
        if (!(v = take("optimizer.lr_drop_factor")).empty())
            optimizer.lr_drop_factor = to_double(v, "optimizer.lr_drop_factor");

        if (!(v = take("attack.epsilon_grid")).empty())
            epsilon_grid = to_list<double>(v, "attack.epsilon_grid", to_double);
        if (!(v = take("attack.alpha")).empty()) attack.alpha = to_double(v, "attack.alpha");
        if (!(v = take("attack.iterations")).empty())
            attack.k = std::size_t(to_int(v, "attack.iterations"));
        if (!(v = take("attack.norm")).empty()) {
            if (v == "linf")
                attack.norm = AttackNorm::linf;
            else if (v == "l2")
                attack.norm = AttackNorm::l2;
            else
                throw ConfigError("attack.norm: expected linf|l2");
        }
        if (!(v = take("attack.raw_gradient")).empty())
            attack.raw_gradient = to_bool(v, "attack.raw_gradient");

        if (!(v = take("detect.fit_count")).empty())
            detect_fit_count = std::size_t(to_int(v, "detect.fit_count"));

        if (!(v = take("sweep.mode")).empty()) sweep_mode = v;
        if (!(v = take("sweep.values")).empty())
            sweep_values = to_list<double>(v, "sweep.values", to_double);

        if (!(v = take("reconstruct.epsilon")).empty())
            reconstruct_epsilon = to_double(v, "reconstruct.epsilon");
        if (!(v = take("reconstruct.count")).empty())
            reconstruct_count = std::size_t(to_int(v, "reconstruct.count"));

        if (!(v = take("run.out")).empty()) out_dir = v;
        if (!(v = take("run.seed")).empty())
            seed = std::uint64_t(to_int(v, "run.seed"));
        if (!(v = take("run.threads")).empty())
            threads = unsigned(to_int(v, "run.threads"));

        if (!kv.empty()) throw ConfigError(what + ": unknown key '" + kv.begin()->first + "'");
        // Seeds thread through training and the synthetic fixtures.
        train.seed = seed;
    }

    static ExperimentConfig from_file(const std::string& path,
                                      const std::string& preset_override = "") {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open config: " + path);
        auto kv = parse_ini(is, path);
        ExperimentConfig cfg;
        if (!preset_override.empty()) {
            kv.erase("run.preset");
            cfg.apply_preset(preset_override);
        }
        cfg.apply_keys(std::move(kv), path);
        cfg.finalize();
        return cfg;
    }
};

} // namespace vac
