// Command-line harness: train / attack / detect / sweep / reconstruct / gradcheck.
#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "vac/runner.hpp"

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out_dir;
    std::string preset;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    bool seed_given = false;
    bool threads_given = false;
};

void add_global_flags(CLI::App* cmd, GlobalArgs& g) {
    cmd->add_option("--config", g.config_path, "INI experiment config");
    cmd->add_option("--out", g.out_dir, "output directory (overrides run.out)");
    cmd->add_option("--seed", g.seed, "master seed (overrides run.seed)")
        ->each([&](const std::string&) { g.seed_given = true; });
    cmd->add_option("--threads", g.threads, "worker threads (overrides run.threads)")
        ->each([&](const std::string&) { g.threads_given = true; });
    cmd->add_option("--preset", g.preset, "config preset: desk | paper");
}

vac::ExperimentConfig build_config(const GlobalArgs& g) {
    vac::ExperimentConfig cfg;
    if (!g.config_path.empty()) {
        cfg = vac::ExperimentConfig::from_file(g.config_path, g.preset);
    } else {
        if (!g.preset.empty()) cfg.apply_preset(g.preset);
        cfg.finalize();
    }
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    if (g.seed_given) {
        cfg.seed = g.seed;
        cfg.train.seed = g.seed;
    }
    if (g.threads_given) cfg.threads = g.threads;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"beta-variational classifier workbench"};
    app.require_subcommand(1);

    GlobalArgs g;
    double recon_eps = -1.0;
    std::size_t gc_cases = 20;
    double gc_tol = 1e-5;

    CLI::App* train = app.add_subcommand("train", "fit a model, write checkpoint + train log");
    CLI::App* attack = app.add_subcommand(
        "attack", "run PGD over the epsilon grid, write shards + accuracy tables");
    CLI::App* detect = app.add_subcommand(
        "detect", "fit per-epsilon reconstruction-error detectors, write detection table");
    CLI::App* sweep =
        app.add_subcommand("sweep", "train/attack/detect across a hyperparameter grid");
    CLI::App* reconstruct = app.add_subcommand(
        "reconstruct", "dump clean/adversarial/reconstruction image triplets");
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference audit of every backward pass");

    for (CLI::App* cmd : {train, attack, detect, sweep, reconstruct}) add_global_flags(cmd, g);
    reconstruct->add_option("--epsilon", recon_eps,
                            "attack strength for the triplets (overrides config)");
    gradcheck->add_option("--cases", gc_cases, "random cases per operator");
    gradcheck->add_option("--tol", gc_tol, "max relative error allowed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gradcheck->parsed()) {
            return vac::cmd_gradcheck(gc_cases, gc_tol) ? 0 : 2;
        }
        vac::ExperimentConfig cfg = build_config(g);
        if (train->parsed()) {
            vac::cmd_train<double>(cfg);
        } else if (attack->parsed()) {
            vac::cmd_attack<double>(cfg);
        } else if (detect->parsed()) {
            vac::cmd_detect<double>(cfg);
        } else if (sweep->parsed()) {
            vac::cmd_sweep<double>(cfg);
        } else if (reconstruct->parsed()) {
            if (recon_eps >= 0) cfg.reconstruct_epsilon = recon_eps;
            vac::cmd_reconstruct<double>(cfg);
        }
        return 0;
    } catch (const vac::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return vac::exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
