#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "vac/layers.hpp"
#include "vac/model.hpp"
#include "vac/tensor.hpp"
#include "vac/threadpool.hpp"

namespace vac {

enum class AttackNorm { linf, l2 };

inline const char* norm_name(AttackNorm n) { return n == AttackNorm::linf ? "linf" : "l2"; }

struct AttackConfig {
    double epsilon = 0.0; // fraction of the pixel range
    double alpha = 0.01;
    std::size_t k = 40;
    AttackNorm norm = AttackNorm::linf;
    double pixel_lo = 0.0;
    double pixel_hi = 1.0;
    // Literal raw-gradient ascent step instead of the sign / normalized step.
    bool raw_gradient = false;

    void validate() const {
        if (epsilon < 0 || epsilon > 1) throw ConfigError("attack: epsilon must be in [0,1]");
        if (alpha <= 0) throw ConfigError("attack: alpha must be positive");
        if (pixel_lo >= pixel_hi) throw ConfigError("attack: empty pixel bounds");
    }
};

// Projection of one sample onto the ε-ball around origin, then the pixel box.
// Clamping to the box afterwards cannot re-violate the ball: the box clamp
// only moves coordinates toward origin's box, and origin itself is in the box,
// so each coordinate's distance to origin never grows.
template <class S>
Tensor<S> project(const Tensor<S>& candidate, const Tensor<S>& origin, const AttackConfig& cfg) {
    ensure_same_shape(candidate, origin, "project(candidate, origin)");
    Tensor<S> out = candidate;
    const S eps = S(cfg.epsilon);
    if (cfg.norm == AttackNorm::linf) {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = std::clamp(out[i], origin[i] - eps, origin[i] + eps);
    } else {
        double norm2 = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = double(out[i]) - double(origin[i]);
            norm2 += d * d;
        }
        const double norm = std::sqrt(norm2);
        if (norm > cfg.epsilon && norm > 0.0) {
            const S scale = S(cfg.epsilon / norm);
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = origin[i] + (out[i] - origin[i]) * scale;
        }
    }
    for (S& v : out.data) v = std::clamp(v, S(cfg.pixel_lo), S(cfg.pixel_hi));
    return out;
}

// Loss callback for the attack: per-sample losses plus the input gradient of
// their sum (samples are independent, so slices of gx are per-sample grads).
template <class S>
using AttackLoss =
    std::function<std::vector<double>(const Tensor<S>&, const std::vector<int>&, Tensor<S>&)>;

// Softmax cross-entropy of the mean-path classification graph — the attacked
// loss. Parameter gradients are left untouched.
template <class S>
std::vector<double> classifier_ce_with_grad(VacModel<S>& model, const Tensor<S>& x,
                                            const std::vector<int>& y, Tensor<S>& gx) {
    Tensor<S> logits = model.mean_logits(x);
    Tensor<S> probs = softmax_rows(logits);
    const std::vector<S> ll = softmax_loglik(probs, y);
    std::vector<double> loss(ll.size());
    for (std::size_t b = 0; b < ll.size(); ++b) loss[b] = -double(ll[b]);
    const std::vector<S> w(ll.size(), S(1));
    Tensor<S> glogits = softmax_loglik_backward(probs, y, w);
    Tensor<S> gz = model.classify_backward(glogits, /*param_grads=*/false);
    gx = model.encode_mean_backward(gz, /*param_grads=*/false);
    return loss;
}

template <class S>
AttackLoss<S> classifier_attack_loss(VacModel<S>& model) {
    return [&model](const Tensor<S>& x, const std::vector<int>& y, Tensor<S>& gx) {
        return classifier_ce_with_grad(model, x, y, gx);
    };
}

// PGD over a batch: k ascent-project iterations from x itself (no random
// start). ℓ∞ steps along sign(grad), ℓ2 along the per-sample normalized
// gradient; raw_gradient uses the gradient as-is. A zero gradient leaves the
// iterate unchanged for that step; the attack involves no randomness.
template <class S>
Tensor<S> pgd(const Tensor<S>& x, const std::vector<int>& y, const AttackLoss<S>& loss,
              const AttackConfig& cfg) {
    cfg.validate();
    if (x.shape[0] != y.size()) throw ConfigError("pgd: batch size mismatch images vs labels");
    if (cfg.epsilon == 0.0 || cfg.k == 0) return x;
    const std::size_t B = x.shape[0], N = x.size() / B;
    Tensor<S> adv = x;
    Tensor<S> gx;
    for (std::size_t j = 0; j < cfg.k; ++j) {
        loss(adv, y, gx);
        ensure_shape(gx, x.shape, "attack input gradient");
        if (!gx.finite()) throw NumericError("pgd: non-finite input gradient at step " +
                                             std::to_string(j));
        for (std::size_t b = 0; b < B; ++b) {
            S* a = adv.ptr() + b * N;
            const S* g = gx.ptr() + b * N;
            if (cfg.raw_gradient) {
                for (std::size_t i = 0; i < N; ++i) a[i] += S(cfg.alpha) * g[i];
            } else if (cfg.norm == AttackNorm::linf) {
                for (std::size_t i = 0; i < N; ++i) {
                    const S s = g[i] > S(0) ? S(1) : g[i] < S(0) ? S(-1) : S(0);
                    a[i] += S(cfg.alpha) * s;
                }
            } else {
                double norm2 = 0.0;
                for (std::size_t i = 0; i < N; ++i) norm2 += double(g[i]) * double(g[i]);
                const double norm = std::sqrt(norm2);
                if (norm == 0.0) continue;
                for (std::size_t i = 0; i < N; ++i) a[i] += S(cfg.alpha / norm) * g[i];
            }
        }
        // project each sample: ball, then pixel box
        for (std::size_t b = 0; b < B; ++b) {
            Tensor<S> cand({N});
            Tensor<S> orig({N});
            std::copy_n(adv.ptr() + b * N, N, cand.ptr());
            std::copy_n(x.ptr() + b * N, N, orig.ptr());
            Tensor<S> proj = project(cand, orig, cfg);
            std::copy_n(proj.ptr(), N, adv.ptr() + b * N);
        }
    }
    return adv;
}

// PGD over a whole dataset in slices, optionally in parallel across sample
// ranges (each worker attacks with its own model clone; results are written to
// disjoint slices, so the output does not depend on the thread count).
template <class S>
Tensor<S> attack_dataset(const VacModel<S>& model, const Tensor<S>& images,
                         const std::vector<int>& labels, const AttackConfig& cfg,
                         std::size_t slice = 200, unsigned threads = 1) {
    cfg.validate();
    const std::size_t n = images.shape[0];
    if (n != labels.size()) throw ConfigError("attack_dataset: images vs labels count");
    Tensor<S> adv = Tensor<S>::zeros_like(images);
    const std::size_t px = images.size() / n;
    const std::size_t n_slices = (n + slice - 1) / slice;
    parallel_for(n_slices, threads, [&](std::size_t s0, std::size_t s1, unsigned) {
        VacModel<S> local = model.clone();
        AttackLoss<S> loss = classifier_attack_loss(local);
        for (std::size_t s = s0; s < s1; ++s) {
            const std::size_t lo = s * slice, hi = std::min(n, lo + slice);
            std::vector<std::size_t> shape = images.shape;
            shape[0] = hi - lo;
            Tensor<S> xs(shape);
            std::copy_n(images.ptr() + lo * px, (hi - lo) * px, xs.ptr());
            std::vector<int> ys(labels.begin() + std::ptrdiff_t(lo),
                                labels.begin() + std::ptrdiff_t(hi));
            Tensor<S> as = pgd(xs, ys, loss, cfg);
            std::copy_n(as.ptr(), as.size(), adv.ptr() + lo * px);
        }
    });
    return adv;
}

} // namespace vac
