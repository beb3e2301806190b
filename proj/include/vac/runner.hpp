#pragma once

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "vac/attack.hpp"
#include "vac/config.hpp"
#include "vac/detect.hpp"
#include "vac/elbo.hpp"
#include "vac/gradchecks.hpp"
#include "vac/io.hpp"
#include "vac/model.hpp"

namespace vac {

namespace seedtag {
inline constexpr std::uint64_t init = 1;       // model weight init
inline constexpr std::uint64_t train_data = 2; // synthetic train split
inline constexpr std::uint64_t test_data = 3;  // synthetic test split
} // namespace seedtag

// Output file layout for one experiment directory.
struct RunPaths {
    std::filesystem::path out;

    explicit RunPaths(const std::string& dir) : out(dir) {}

    std::filesystem::path checkpoint() const { return out / "checkpoint.vacb"; }
    std::filesystem::path train_log() const { return out / "train_log.csv"; }
    std::filesystem::path accuracy_csv() const { return out / "accuracy.csv"; }
    std::filesystem::path manifest_csv() const { return out / "attack_manifest.csv"; }
    std::filesystem::path detection_csv() const { return out / "detection.csv"; }
    std::filesystem::path recon_error_csv() const { return out / "recon_error.csv"; }
    std::filesystem::path reconstructions_csv() const { return out / "reconstructions.csv"; }
    std::filesystem::path sweep_errors() const { return out / "sweep_errors.txt"; }
    std::filesystem::path shard(double eps) const {
        return out / ("adv_eps_" + fmt_double(eps) + ".vacb");
    }
};

template <class S>
struct ExperimentData {
    Dataset<S> train;
    Dataset<S> test;
};

template <class S>
ExperimentData<S> load_experiment_data(const ExperimentConfig& cfg) {
    ExperimentData<S> d;
    if (cfg.dataset == "synthetic-digits") {
        d.train = synthetic_digits<S>(cfg.train_count, derive_seed(cfg.seed, seedtag::train_data),
                                      cfg.image_hw);
        d.test = synthetic_digits<S>(cfg.test_count, derive_seed(cfg.seed, seedtag::test_data),
                                     cfg.image_hw);
    } else if (cfg.dataset == "synthetic-fashion") {
        d.train = synthetic_fashion<S>(cfg.train_count, derive_seed(cfg.seed, seedtag::train_data),
                                       cfg.image_hw);
        d.test = synthetic_fashion<S>(cfg.test_count, derive_seed(cfg.seed, seedtag::test_data),
                                      cfg.image_hw);
    } else if (cfg.dataset == "blobs") {
        d.train = synthetic_blobs<S>(cfg.train_count, cfg.image_hw,
                                     derive_seed(cfg.seed, seedtag::train_data));
        d.test = synthetic_blobs<S>(cfg.test_count, cfg.image_hw,
                                    derive_seed(cfg.seed, seedtag::test_data));
    } else {
        d.train = load_idx_dataset<S>(cfg.train_images, cfg.train_labels, "train", cfg.dataset);
        d.test = load_idx_dataset<S>(cfg.test_images, cfg.test_labels, "test", cfg.dataset);
        if (cfg.train_count > 0 && cfg.train_count < d.train.size())
            d.train = d.train.head(cfg.train_count);
        if (cfg.test_count > 0 && cfg.test_count < d.test.size())
            d.test = d.test.head(cfg.test_count);
    }
    d.train.split = "train";
    d.test.split = "test";
    if (d.train.images.shape[2] != cfg.model.image_h ||
        d.train.images.shape[3] != cfg.model.image_w)
        throw ConfigError("data: images are " + shape_str(d.train.images.shape) +
                          " but the model expects " + std::to_string(cfg.model.image_h) + "x" +
                          std::to_string(cfg.model.image_w));
    d.train.validate(cfg.model.n_classes);
    d.test.validate(cfg.model.n_classes);
    return d;
}

template <class S>
VacModel<S> load_checkpoint_model(const ExperimentConfig& cfg, const RunPaths& paths) {
    VacModel<S> model(cfg.model);
    model.load_file(paths.checkpoint().string());
    return model;
}

// Argmax accuracy over a raw image tensor (adversarial sets are tensors, not
// Datasets), evaluated in slices.
template <class S>
double accuracy_on_images(VacModel<S>& model, const Tensor<S>& images,
                          const std::vector<int>& labels, std::size_t slice = 200) {
    const std::size_t n = images.shape[0];
    if (n != labels.size()) throw ConfigError("accuracy: images vs labels count");
    const std::size_t px = images.size() / n;
    std::size_t correct = 0;
    for (std::size_t lo = 0; lo < n; lo += slice) {
        const std::size_t hi = std::min(n, lo + slice);
        std::vector<std::size_t> shape = images.shape;
        shape[0] = hi - lo;
        Tensor<S> xs(shape);
        std::copy_n(images.ptr() + lo * px, (hi - lo) * px, xs.ptr());
        const std::vector<int> pred = model.predict(xs);
        for (std::size_t i = 0; i < pred.size(); ++i)
            if (pred[i] == labels[lo + i]) ++correct;
    }
    return double(correct) / double(n);
}

// Reconstruction errors over a raw image tensor, in slices.
template <class S>
std::vector<double> recon_errors_on_images(VacModel<S>& model, const Tensor<S>& images,
                                           std::size_t slice = 200) {
    const std::size_t n = images.shape[0];
    const std::size_t px = images.size() / n;
    std::vector<double> errs;
    errs.reserve(n);
    for (std::size_t lo = 0; lo < n; lo += slice) {
        const std::size_t hi = std::min(n, lo + slice);
        std::vector<std::size_t> shape = images.shape;
        shape[0] = hi - lo;
        Tensor<S> xs(shape);
        std::copy_n(images.ptr() + lo * px, (hi - lo) * px, xs.ptr());
        const std::vector<double> part = reconstruction_errors(model, xs);
        errs.insert(errs.end(), part.begin(), part.end());
    }
    return errs;
}

inline double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / double(v.size());
}

// ----- train ------------------------------------------------------------------

struct TrainOutcome {
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::size_t iterations = 0;
};

template <class S>
TrainOutcome cmd_train(const ExperimentConfig& cfg, std::ostream& log = std::cout) {
    cfg.validate();
    RunPaths paths(cfg.out_dir);
    std::filesystem::create_directories(paths.out);
    ExperimentData<S> data = load_experiment_data<S>(cfg);

    VacModel<S> model(cfg.model);
    Rng init_rng(derive_seed(cfg.seed, seedtag::init));
    model.init(init_rng);

    CsvWriter csv(paths.train_log().string(),
                  {"epoch", "iter", "recon_loglik", "kl", "c", "capacity_penalty",
                   "class_loglik", "l1_penalty", "objective"});
    TrainOutcome out;
    train(model, data.train, cfg.train, cfg.optimizer, [&](const TrainLogRow& r) {
        csv.write_row({std::to_string(r.epoch), std::to_string(r.iter),
                       fmt_double(r.terms.recon_loglik), fmt_double(r.terms.kl),
                       fmt_double(r.terms.c), fmt_double(r.terms.capacity_penalty),
                       fmt_double(r.terms.class_loglik), fmt_double(r.terms.l1_penalty),
                       fmt_double(r.terms.objective)});
        ++out.iterations;
    });
    csv.flush();
    model.save_file(paths.checkpoint().string());

    out.train_accuracy = evaluate_accuracy(model, data.train);
    out.test_accuracy = evaluate_accuracy(model, data.test);
    log << "train accuracy " << fmt_double(out.train_accuracy) << "\n";
    log << "test accuracy " << fmt_double(out.test_accuracy) << "\n";
    return out;
}

// ----- attack ------------------------------------------------------------------

struct AttackOutcome {
    std::vector<double> epsilons;
    std::vector<double> accuracies;
};

template <class S>
AttackOutcome cmd_attack(const ExperimentConfig& cfg, std::ostream& log = std::cout) {
    cfg.validate();
    RunPaths paths(cfg.out_dir);
    std::filesystem::create_directories(paths.out);
    ExperimentData<S> data = load_experiment_data<S>(cfg);
    VacModel<S> model = load_checkpoint_model<S>(cfg, paths);

    std::vector<double> grid = cfg.epsilon_grid;
    std::sort(grid.begin(), grid.end());

    CsvWriter acc_csv(paths.accuracy_csv().string(), {"epsilon", "accuracy"});
    CsvWriter man_csv(paths.manifest_csv().string(),
                      {"epsilon", "shard", "count", "adversarial_accuracy"});
    AttackOutcome out;
    for (double eps : grid) {
        AttackConfig ac = cfg.attack;
        ac.epsilon = eps;
        Tensor<S> adv =
            attack_dataset(model, data.test.images, data.test.labels, ac, 200, cfg.threads);
        const double accuracy = accuracy_on_images(model, adv, data.test.labels);

        TensorMap<S> shard;
        shard.emplace("images", adv);
        Tensor<S> labels({data.test.labels.size()});
        for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = S(data.test.labels[i]);
        shard.emplace("labels", std::move(labels));
        const std::string shard_path = paths.shard(eps).string();
        save_tensors_file(shard_path, shard);

        acc_csv.write_row({fmt_double(eps), fmt_double(accuracy)});
        man_csv.write_row({fmt_double(eps), paths.shard(eps).filename().string(),
                           std::to_string(data.test.labels.size()), fmt_double(accuracy)});
        log << "epsilon " << fmt_double(eps) << " adversarial accuracy "
            << fmt_double(accuracy) << "\n";
        out.epsilons.push_back(eps);
        out.accuracies.push_back(accuracy);
    }
    return out;
}

// Loads one adversarial shard back as (images, labels).
template <class S>
std::pair<Tensor<S>, std::vector<int>> load_shard(const std::string& path) {
    TensorMap<S> m = load_tensors_file<S>(path);
    auto im = m.find("images");
    auto lb = m.find("labels");
    if (im == m.end() || lb == m.end())
        throw IoError("shard " + path + ": missing 'images' or 'labels' tensor");
    std::vector<int> labels(lb->second.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        labels[i] = int(std::lround(double(lb->second[i])));
    return {im->second, labels};
}

// ----- detect ------------------------------------------------------------------

struct DetectOutcome {
    std::vector<DetectionRow> rows;
    std::vector<double> mean_adv_errors; // per grid epsilon, on the test split
};

template <class S>
DetectOutcome cmd_detect(const ExperimentConfig& cfg, std::ostream& log = std::cout) {
    cfg.validate();
    RunPaths paths(cfg.out_dir);
    ExperimentData<S> data = load_experiment_data<S>(cfg);
    VacModel<S> model = load_checkpoint_model<S>(cfg, paths);

    std::vector<double> grid = cfg.epsilon_grid;
    std::sort(grid.begin(), grid.end());
    for (double eps : grid)
        if (!std::filesystem::exists(paths.shard(eps)))
            throw IoError("detect: missing adversarial shard for epsilon " + fmt_double(eps) +
                          " (" + paths.shard(eps).string() + "); run the attack first");

    // Detectors are fitted on the train split and evaluated on the test split,
    // so no sample contributes to both.
    const std::size_t fit_n = std::min(cfg.detect_fit_count, data.train.size());
    Dataset<S> fit_split = data.train.head(fit_n);
    const std::vector<double> clean_fit = recon_errors_on_images(model, fit_split.images);
    const std::vector<double> clean_test = recon_errors_on_images(model, data.test.images);

    CsvWriter det_csv(paths.detection_csv().string(),
                      {"epsilon", "n_clean", "n_adv", "detector_weight", "detector_bias",
                       "detection_rate"});
    CsvWriter err_csv(paths.recon_error_csv().string(), {"epsilon", "mean_recon_error"});
    DetectOutcome out;
    for (double eps : grid) {
        AttackConfig ac = cfg.attack;
        ac.epsilon = eps;
        Tensor<S> adv_fit =
            attack_dataset(model, fit_split.images, fit_split.labels, ac, 200, cfg.threads);
        const std::vector<double> adv_fit_err = recon_errors_on_images(model, adv_fit);
        const DetectorModel det = fit_detector(clean_fit, adv_fit_err);

        auto [adv_test, adv_labels] = load_shard<S>(paths.shard(eps).string());
        (void)adv_labels;
        const std::vector<double> adv_test_err = recon_errors_on_images(model, adv_test);
        const double rate = detection_rate(det, clean_test, adv_test_err);

        const std::size_t m = std::min(clean_test.size(), adv_test_err.size());
        DetectionRow row{eps, m, m, det, rate};
        out.rows.push_back(row);
        out.mean_adv_errors.push_back(mean_of(adv_test_err));
        det_csv.write_row({fmt_double(eps), std::to_string(m), std::to_string(m),
                           fmt_double(det.weight), fmt_double(det.bias), fmt_double(rate)});
        err_csv.write_row({fmt_double(eps), fmt_double(mean_of(adv_test_err))});
        log << "epsilon " << fmt_double(eps) << " detection rate " << fmt_double(rate) << "\n";
    }
    return out;
}

// ----- sweep -------------------------------------------------------------------

template <class S>
void cmd_sweep(const ExperimentConfig& cfg, std::ostream& log = std::cout) {
    cfg.validate();
    if (cfg.sweep_values.empty()) throw ConfigError("sweep: empty value list");
    RunPaths paths(cfg.out_dir);
    std::filesystem::create_directories(paths.out);

    std::vector<double> values = cfg.sweep_values;
    std::sort(values.begin(), values.end());
    std::vector<double> grid = cfg.epsilon_grid;
    std::sort(grid.begin(), grid.end());

    std::vector<std::string> header{cfg.sweep_mode};
    for (double eps : grid) header.push_back(fmt_double(eps));
    CsvWriter acc_csv((paths.out / "sweep_accuracy.csv").string(), header);
    CsvWriter det_csv((paths.out / "sweep_detection_rate.csv").string(), header);
    CsvWriter err_csv((paths.out / "sweep_recon_error.csv").string(), header);
    std::ofstream sidecar(paths.sweep_errors().string(), std::ios::trunc);

    for (double v : values) {
        ExperimentConfig sub = cfg;
        sub.out_dir = (paths.out / ("sweep_" + cfg.sweep_mode + "_" + fmt_double(v))).string();
        if (cfg.sweep_mode == "capacity")
            sub.train.capacity_C = v;
        else
            sub.train.l1_strength = v;

        std::vector<std::string> acc_row{fmt_double(v)}, det_row{fmt_double(v)},
            err_row{fmt_double(v)};
        try {
            log << "sweep " << cfg.sweep_mode << " = " << fmt_double(v) << "\n";
            cmd_train<S>(sub, log);
            AttackOutcome attack = cmd_attack<S>(sub, log);
            DetectOutcome detect = cmd_detect<S>(sub, log);
            for (std::size_t i = 0; i < grid.size(); ++i) {
                acc_row.push_back(fmt_double(attack.accuracies[i]));
                det_row.push_back(fmt_double(detect.rows[i].rate));
                err_row.push_back(fmt_double(detect.mean_adv_errors[i]));
            }
        } catch (const Error& e) {
            // Partial failure: NaN row, note in the sidecar, sweep continues.
            for (std::size_t i = 0; i < grid.size(); ++i) {
                acc_row.push_back("nan");
                det_row.push_back("nan");
                err_row.push_back("nan");
            }
            sidecar << cfg.sweep_mode << " " << fmt_double(v) << ": " << e.what() << "\n";
            sidecar.flush();
            log << "sweep value " << fmt_double(v) << " failed: " << e.what() << "\n";
        }
        acc_csv.write_row(acc_row);
        det_csv.write_row(det_row);
        err_csv.write_row(err_row);
        acc_csv.flush();
        det_csv.flush();
        err_csv.flush();
    }
}

// ----- reconstruct ---------------------------------------------------------------

struct ReconstructOutcome {
    std::size_t rows = 0;
    std::vector<int> true_labels;
    std::vector<int> predicted_labels;
};

// Dumps (clean, adversarial, reconstruction-of-adversarial) PGM triplets for
// misclassified adversarial inputs, plus a sidecar CSV with the labels.
template <class S>
ReconstructOutcome cmd_reconstruct(const ExperimentConfig& cfg, std::ostream& log = std::cout) {
    cfg.validate();
    RunPaths paths(cfg.out_dir);
    std::filesystem::create_directories(paths.out);
    ExperimentData<S> data = load_experiment_data<S>(cfg);
    VacModel<S> model = load_checkpoint_model<S>(cfg, paths);
    const double eps = cfg.reconstruct_epsilon;

    Tensor<S> adv;
    if (std::filesystem::exists(paths.shard(eps))) {
        auto [images, labels] = load_shard<S>(paths.shard(eps).string());
        if (labels != data.test.labels)
            throw ConfigError("reconstruct: shard labels disagree with the test split");
        adv = std::move(images);
    } else {
        AttackConfig ac = cfg.attack;
        ac.epsilon = eps;
        adv = attack_dataset(model, data.test.images, data.test.labels, ac, 200, cfg.threads);
    }

    std::vector<int> pred(data.test.size());
    {
        const std::size_t slice = 200, n = data.test.size(), px = adv.size() / n;
        for (std::size_t lo = 0; lo < n; lo += slice) {
            const std::size_t hi = std::min(n, lo + slice);
            std::vector<std::size_t> shape = adv.shape;
            shape[0] = hi - lo;
            Tensor<S> xs(shape);
            std::copy_n(adv.ptr() + lo * px, (hi - lo) * px, xs.ptr());
            const std::vector<int> p = model.predict(xs);
            std::copy(p.begin(), p.end(), pred.begin() + std::ptrdiff_t(lo));
        }
    }

    std::vector<std::size_t> mis;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] != data.test.labels[i]) mis.push_back(i);
    if (mis.size() > cfg.reconstruct_count) mis.resize(cfg.reconstruct_count);

    CsvWriter sidecar(paths.reconstructions_csv().string(),
                      {"row", "true_label", "predicted_label", "clean", "adversarial",
                       "reconstruction"});
    ReconstructOutcome out;
    if (mis.empty()) {
        log << "no misclassified adversarial samples at epsilon " << fmt_double(eps) << "\n";
        return out;
    }

    const std::size_t C = data.test.images.shape[1], H = data.test.images.shape[2],
                      W = data.test.images.shape[3];
    const std::size_t px = C * H * W;
    for (std::size_t r = 0; r < mis.size(); ++r) {
        const std::size_t i = mis[r];
        Tensor<S> clean({1, C, H, W}), advx({1, C, H, W});
        std::copy_n(data.test.images.ptr() + i * px, px, clean.ptr());
        std::copy_n(adv.ptr() + i * px, px, advx.ptr());
        Tensor<S> rec = reconstruct(model, advx);

        const std::string base = "recon_row" + std::to_string(r);
        const std::string clean_name = base + "_clean.pgm";
        const std::string adv_name = base + "_adversarial.pgm";
        const std::string rec_name = base + "_reconstruction.pgm";
        write_pgm((paths.out / clean_name).string(), clean.reshaped({H, W}));
        write_pgm((paths.out / adv_name).string(), advx.reshaped({H, W}));
        write_pgm((paths.out / rec_name).string(), rec.reshaped({H, W}));
        sidecar.write_row({std::to_string(r), std::to_string(data.test.labels[i]),
                           std::to_string(pred[i]), clean_name, adv_name, rec_name});
        out.true_labels.push_back(data.test.labels[i]);
        out.predicted_labels.push_back(pred[i]);
        ++out.rows;
    }
    out.rows = mis.size();
    log << "wrote " << out.rows << " misclassified triplets at epsilon " << fmt_double(eps)
        << "\n";
    return out;
}

// ----- gradcheck -----------------------------------------------------------------

inline bool cmd_gradcheck(std::size_t cases, double tol, std::ostream& log = std::cout) {
    const auto reports = run_gradcheck_suite(cases);
    bool all_pass = true;
    for (const auto& r : reports) {
        const bool ok = r.pass(tol);
        all_pass = all_pass && ok;
        log << (ok ? "pass" : "FAIL") << "  " << r.op << "  max_rel_err "
            << fmt_double(r.max_rel_err) << " (" << r.cases << " cases)\n";
    }
    return all_pass;
}

} // namespace vac
