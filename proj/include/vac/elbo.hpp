#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vac/data.hpp"
#include "vac/distributions.hpp"
#include "vac/model.hpp"
#include "vac/optim.hpp"

namespace vac {

// Decomposed objective for one batch, all terms batch means. The identity
//   objective = recon_loglik + class_loglik - capacity_penalty - l1_penalty
// holds by construction; training ascends `objective`.
struct ElboTerms {
    double recon_loglik = 0.0;
    double kl = 0.0;
    double c = 0.0;
    double capacity_penalty = 0.0; // beta * |kl_i - c|, averaged over the batch
    double class_loglik = 0.0;     // 0 for the unsupervised model
    double l1_penalty = 0.0;       // 0 unless configured
    double objective = 0.0;
};

struct TrainConfig {
    std::size_t batch_size = 100;
    std::size_t mc_samples = 1;
    double beta = 1000.0;
    double capacity_C = 1.0;
    std::size_t capacity_ramp_iters = 0; // 0 = resolve to half the total iterations
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    double l1_strength = 0.0; // classifier weights only
    Likelihood likelihood = Likelihood::bernoulli;
    bool with_classifier = true;
    // Global-l2-norm gradient clip applied between the backward pass and the
    // optimizer step; 0 disables. Bounds the transient updates SGD-with-
    // momentum otherwise amplifies (saturated-pixel reconstruction gradients
    // can run the log-variance head off to -inf before the capacity term's
    // constant restoring force can react).
    double grad_clip = 50.0;

    void validate() const {
        if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
        if (mc_samples == 0) throw ConfigError("train: mc_samples must be positive");
        if (beta < 0) throw ConfigError("train: beta must be non-negative");
        if (capacity_C < 0) throw ConfigError("train: capacity_C must be non-negative");
        if (l1_strength < 0) throw ConfigError("train: l1_strength must be non-negative");
        if (grad_clip < 0) throw ConfigError("train: grad_clip must be non-negative");
    }

    std::size_t resolve_ramp(std::size_t n_samples) const {
        if (capacity_ramp_iters > 0) return capacity_ramp_iters;
        const std::size_t per_epoch = (n_samples + batch_size - 1) / batch_size;
        return std::max<std::size_t>(1, epochs * per_epoch / 2);
    }
};

// c = C * min(1, j/ramp): 0 at j=0, C from j=ramp onward.
inline double linear_schedule(double C, std::size_t j, std::size_t ramp) {
    if (ramp < 1) throw ConfigError("capacity ramp must be at least 1 iteration");
    return C * std::min(1.0, double(j) / double(ramp));
}

// One frozen-noise tensor [B, latent] per Monte-Carlo draw; the draw for
// (sample, m) is keyed by the dataset index, never the batch position.
template <class S>
std::vector<Tensor<S>> draw_noise(std::uint64_t seed, const std::vector<std::size_t>& sample_idx,
                                  std::size_t M, std::uint64_t iter, std::size_t latent_dim) {
    std::vector<Tensor<S>> noise;
    noise.reserve(M);
    for (std::size_t m = 0; m < M; ++m) {
        Tensor<S> xi({sample_idx.size(), latent_dim});
        for (std::size_t b = 0; b < sample_idx.size(); ++b) {
            Tensor<S> row = make_noise<S>(seed, sample_idx[b], iter * M + m, {latent_dim});
            std::copy_n(row.ptr(), latent_dim, xi.ptr() + b * latent_dim);
        }
        noise.push_back(std::move(xi));
    }
    return noise;
}

// Objective and (optionally) gradients for one batch with the supplied frozen
// noise. Pass labels == nullptr for the unsupervised objective: the classifier
// term and the l1 penalty drop out. Gradients of the *descended* loss -J
// accumulate into the model's parameter buffers; the input gradient is
// discarded here (the attack path has its own loss).
template <class S>
ElboTerms elbo_step(VacModel<S>& model, const Tensor<S>& x, const std::vector<int>* labels,
                    const TrainConfig& cfg, double c, const std::vector<Tensor<S>>& noise,
                    bool do_backward = true) {
    cfg.validate();
    const std::size_t B = x.shape[0];
    const std::size_t M = cfg.mc_samples;
    if (noise.size() != M)
        throw ConfigError("elbo: expected " + std::to_string(M) + " noise draws, got " +
                          std::to_string(noise.size()));
    const bool supervised = cfg.with_classifier && labels != nullptr;
    if (cfg.with_classifier && labels == nullptr && cfg.l1_strength > 0)
        throw ConfigError("elbo: l1 penalty configured but no labels supplied");

    auto post = model.encode(x);
    const std::vector<S> kl = kl_standard_normal(post.mu, post.logvar);

    Tensor<S> gmu = Tensor<S>::zeros_like(post.mu);
    Tensor<S> glogvar = Tensor<S>::zeros_like(post.logvar);

    const S rec_w = S(-1.0 / double(B * M)); // d(-J)/d recon_loglik_bm
    std::vector<S> recon_sum(B, S(0)), class_sum(B, S(0));

    for (std::size_t m = 0; m < M; ++m) {
        ensure_shape(noise[m], post.mu.shape, "noise draw");
        Tensor<S> z = reparam_sample(post.mu, post.logvar, noise[m]);
        Tensor<S> gz({B, z.shape[1]});

        Tensor<S> dec = model.decode(z);
        ensure_shape(dec, x.shape, "decoder output");
        std::vector<S> ll = cfg.likelihood == Likelihood::bernoulli
                                ? bernoulli_loglik(x, dec)
                                : gaussian_unit_loglik(x, dec);
        for (std::size_t b = 0; b < B; ++b) recon_sum[b] += ll[b];
        if (do_backward) {
            Tensor<S> gdec = Tensor<S>::zeros_like(dec);
            const std::vector<S> w(B, rec_w);
            if (cfg.likelihood == Likelihood::bernoulli)
                bernoulli_loglik_backward(x, dec, w, gdec);
            else
                gaussian_unit_loglik_backward(x, dec, w, gdec);
            gz = model.decode_backward(gdec, /*param_grads=*/true);
        }

        if (supervised) {
            Tensor<S> logits = model.classify(z);
            Tensor<S> probs = softmax_rows(logits);
            std::vector<S> cll = softmax_loglik(probs, *labels);
            for (std::size_t b = 0; b < B; ++b) class_sum[b] += cll[b];
            if (do_backward) {
                const std::vector<S> w(B, S(1.0 / double(B * M))); // weights on -loglik
                Tensor<S> glogits = softmax_loglik_backward(probs, *labels, w);
                Tensor<S> gz_cls = model.classify_backward(glogits, /*param_grads=*/true);
                for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += gz_cls[i];
            }
        }

        if (do_backward) reparam_sample_backward(post.logvar, noise[m], gz, gmu, glogvar);
    }

    ElboTerms t;
    t.c = c;
    const double Minv = 1.0 / double(M);
    std::vector<S> kl_w(B, S(0));
    for (std::size_t b = 0; b < B; ++b) {
        t.recon_loglik += double(recon_sum[b]) * Minv;
        t.class_loglik += double(class_sum[b]) * Minv;
        t.kl += double(kl[b]);
        const double dev = double(kl[b]) - c;
        t.capacity_penalty += cfg.beta * std::abs(dev);
        // subgradient of |kl - c| at 0 taken as 0
        kl_w[b] = S(cfg.beta / double(B) * (dev > 0 ? 1.0 : dev < 0 ? -1.0 : 0.0));
    }
    t.recon_loglik /= double(B);
    t.class_loglik /= double(B);
    t.kl /= double(B);
    t.capacity_penalty /= double(B);

    if (do_backward) {
        kl_standard_normal_backward(post.mu, post.logvar, kl_w, gmu, glogvar);
        model.encode_backward(gmu, glogvar, /*param_grads=*/true);
    }

    if (supervised && cfg.l1_strength > 0) {
        double l1 = 0.0;
        for (auto& ref : model.params().items) {
            if (ref.group != ParamGroup::classifier || ref.is_bias) continue;
            for (std::size_t i = 0; i < ref.param->value.size(); ++i) {
                const double w = double(ref.param->value[i]);
                l1 += std::abs(w);
                // subgradient of |w| at 0 taken as 0
                if (do_backward && w != 0.0)
                    ref.param->grad[i] += S(cfg.l1_strength * (w > 0 ? 1.0 : -1.0));
            }
        }
        t.l1_penalty = cfg.l1_strength * l1;
    }

    t.objective = t.recon_loglik + t.class_loglik - t.capacity_penalty - t.l1_penalty;
    if (!std::isfinite(t.objective))
        throw NumericError("elbo: non-finite objective (recon " + std::to_string(t.recon_loglik) +
                           ", kl " + std::to_string(t.kl) + ")");
    return t;
}

// ----- training loop -----------------------------------------------------------

// Scales all gradients down to global l2 norm `clip` when they exceed it; a
// no-op otherwise or when clip is 0. Returns the pre-clip norm.
template <class S>
double clip_gradients(ParamSet<S>& params, double clip) {
    double n2 = 0.0;
    for (const auto& ref : params.items)
        for (const S& g : ref.param->grad.data) n2 += double(g) * double(g);
    const double norm = std::sqrt(n2);
    if (clip > 0.0 && norm > clip) {
        const S scale = S(clip / norm);
        for (auto& ref : params.items)
            for (S& g : ref.param->grad.data) g *= scale;
    }
    return norm;
}

struct TrainLogRow {
    int epoch = 0;
    std::size_t iter = 0;
    ElboTerms terms;
};

// Runs epochs * ceil(N/B) iterations of batched ascent; deterministic for a
// fixed seed in single-threaded mode. `on_iteration`, when set, observes each
// logged row as it is produced (CSV streaming, progress display).
template <class S>
std::vector<TrainLogRow> train(VacModel<S>& model, const Dataset<S>& data,
                               const TrainConfig& cfg, const OptimizerConfig& opt_cfg,
                               const std::function<void(const TrainLogRow&)>& on_iteration = {}) {
    cfg.validate();
    opt_cfg.validate();
    if (data.size() == 0) throw ConfigError("train: empty dataset");
    data.validate(model.config().n_classes);

    const std::size_t ramp = cfg.resolve_ramp(data.size());
    const LrSchedule lr = opt_cfg.schedule();
    SgdMomentum<S> opt(opt_cfg.momentum, opt_cfg.weight_decay);
    const BatchPlan plan{cfg.seed, cfg.batch_size};

    std::vector<TrainLogRow> log;
    std::size_t iter = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& idx : batch_indices(data.size(), plan, int(epoch))) {
            LabeledBatch<S> batch = gather_batch(data, idx);
            const double c = linear_schedule(cfg.capacity_C, iter, ramp);
            const auto noise = draw_noise<S>(cfg.seed, batch.indices, cfg.mc_samples, iter,
                                             model.config().latent_dim);
            ElboTerms terms;
            try {
                terms = elbo_step(model, batch.images,
                                  cfg.with_classifier ? &batch.labels : nullptr, cfg, c, noise,
                                  /*do_backward=*/true);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " (iteration " +
                                   std::to_string(iter) + ")");
            }
            clip_gradients(model.params(), cfg.grad_clip);
            opt.step(model.params(), lr.at(int(epoch)));
            TrainLogRow row{int(epoch), iter, terms};
            if (on_iteration) on_iteration(row);
            log.push_back(row);
            ++iter;
        }
    }
    return log;
}

// ----- reconstruction and its error metric ---------------------------------------

enum class ReconMode { mean_path, sampled };

// Mean-path mode decodes z = mu(x); sampled mode uses one reparametrized draw.
// Output is clamped into [0,1] (a no-op for the sigmoid Bernoulli head).
template <class S>
Tensor<S> reconstruct(VacModel<S>& model, const Tensor<S>& x, ReconMode mode = ReconMode::mean_path,
                      std::uint64_t seed = 0, std::uint64_t draw_index = 0) {
    auto post = model.encode(x);
    Tensor<S> z = post.mu;
    if (mode == ReconMode::sampled) {
        Tensor<S> xi({x.shape[0], model.config().latent_dim});
        for (std::size_t b = 0; b < x.shape[0]; ++b) {
            Tensor<S> row =
                make_noise<S>(seed, b, draw_index, {model.config().latent_dim});
            std::copy_n(row.ptr(), row.size(), xi.ptr() + b * row.size());
        }
        z = reparam_sample(post.mu, post.logvar, xi);
    }
    Tensor<S> out = model.decode(z);
    for (S& v : out.data) v = std::clamp(v, S(0), S(1));
    return out;
}

// Per-sample mean squared error per pixel between x and its mean-path
// reconstruction — the detector's sole feature.
template <class S>
std::vector<double> reconstruction_errors(VacModel<S>& model, const Tensor<S>& x) {
    Tensor<S> rec = reconstruct(model, x, ReconMode::mean_path);
    const std::size_t B = x.shape[0], N = x.size() / B;
    std::vector<double> err(B, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        double acc = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            const double r = double(x[b * N + j]) - double(rec[b * N + j]);
            acc += r * r;
        }
        err[b] = acc / double(N);
    }
    return err;
}

// ----- batched evaluation ---------------------------------------------------------

// Fraction of argmax-correct mean-path predictions, evaluated in slices to
// bound peak memory.
template <class S>
double evaluate_accuracy(VacModel<S>& model, const Dataset<S>& data,
                         std::size_t eval_batch = 200) {
    if (data.size() == 0) throw ConfigError("evaluate_accuracy: empty dataset");
    std::size_t correct = 0;
    for (std::size_t start = 0; start < data.size(); start += eval_batch) {
        const std::size_t stop = std::min(data.size(), start + eval_batch);
        std::vector<std::size_t> idx(stop - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
        Dataset<S> sub = data.subset(idx);
        const std::vector<int> pred = model.predict(sub.images);
        for (std::size_t i = 0; i < pred.size(); ++i)
            if (pred[i] == sub.labels[i]) ++correct;
    }
    return double(correct) / double(data.size());
}

} // namespace vac
