#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "vac/rng.hpp"
#include "vac/tensor.hpp"

namespace vac {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

// Probabilities are clamped into [kProbFloor, 1-kProbFloor] before any log, so
// saturated sigmoids cannot produce infinities.
inline constexpr double kProbFloor = 1e-6;

// ----- KL( N(mu, diag e^logvar) || N(0, I) ), closed form --------------------
//
// Per sample b:  0.5 * sum_d (mu^2 + e^logvar - 1 - logvar).
// Zero exactly when mu=0, logvar=0.

template <class S>
std::vector<S> kl_standard_normal(const Tensor<S>& mu, const Tensor<S>& logvar) {
    ensure_same_shape(mu, logvar, "kl(mu, logvar)");
    const std::size_t B = mu.shape[0], D = mu.size() / B;
    std::vector<S> kl(B, S(0));
    for (std::size_t b = 0; b < B; ++b) {
        S acc = S(0);
        for (std::size_t d = 0; d < D; ++d) {
            const S m = mu[b * D + d], lv = logvar[b * D + d];
            acc += m * m + std::exp(lv) - S(1) - lv;
        }
        kl[b] = S(0.5) * acc;
    }
    return kl;
}

// Accumulates d(sum_b w_b * KL_b) into gmu, glogvar.
template <class S>
void kl_standard_normal_backward(const Tensor<S>& mu, const Tensor<S>& logvar,
                                 const std::vector<S>& w, Tensor<S>& gmu, Tensor<S>& glogvar) {
    const std::size_t B = mu.shape[0], D = mu.size() / B;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t d = 0; d < D; ++d) {
            const std::size_t i = b * D + d;
            gmu[i] += w[b] * mu[i];
            glogvar[i] += w[b] * S(0.5) * (std::exp(logvar[i]) - S(1));
        }
}

// ----- reparametrized sampling ----------------------------------------------
//
// z = mu + xi * exp(0.5 * logvar), xi ~ N(0, I). The standard-deviation form:
// exp(0.5*logvar) is sigma, so z has variance e^logvar as intended.

template <class S>
Tensor<S> reparam_sample(const Tensor<S>& mu, const Tensor<S>& logvar, const Tensor<S>& xi) {
    ensure_same_shape(mu, logvar, "reparam(mu, logvar)");
    ensure_same_shape(mu, xi, "reparam(mu, xi)");
    Tensor<S> z = Tensor<S>::zeros_like(mu);
    for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = mu[i] + xi[i] * std::exp(S(0.5) * logvar[i]);
    return z;
}

// Accumulates dz into gmu, glogvar given upstream gz.
template <class S>
void reparam_sample_backward(const Tensor<S>& logvar, const Tensor<S>& xi, const Tensor<S>& gz,
                             Tensor<S>& gmu, Tensor<S>& glogvar) {
    for (std::size_t i = 0; i < gz.size(); ++i) {
        gmu[i] += gz[i];
        glogvar[i] += gz[i] * xi[i] * S(0.5) * std::exp(S(0.5) * logvar[i]);
    }
}

// Deterministic noise: the draw for (sample s, monte-carlo draw m) depends only
// on the run seed and those indices, so any evaluation order and any thread
// count reproduce the same xi.
template <class S>
Tensor<S> make_noise(std::uint64_t seed, std::uint64_t sample_index, std::uint64_t draw_index,
                     const std::vector<std::size_t>& shape) {
    Rng rng(derive_seed(seed, 0x6e6f697365u /*'noise'*/, sample_index, draw_index));
    Tensor<S> xi(shape);
    for (S& v : xi.data) v = S(rng.normal());
    return xi;
}

// ----- Bernoulli log-likelihood ----------------------------------------------
//
// Per sample: sum_j x_j log p_j + (1-x_j) log(1-p_j), p clamped away from
// {0,1}. Targets may be grayscale in [0,1] (the usual continuous relaxation).

template <class S>
std::vector<S> bernoulli_loglik(const Tensor<S>& x, const Tensor<S>& probs) {
    ensure_same_shape(x, probs, "bernoulli(x, probs)");
    const std::size_t B = x.shape[0], N = x.size() / B;
    std::vector<S> ll(B, S(0));
    for (std::size_t b = 0; b < B; ++b) {
        S acc = S(0);
        for (std::size_t j = 0; j < N; ++j) {
            const std::size_t i = b * N + j;
            const S p = std::min(std::max(probs[i], S(kProbFloor)), S(1 - kProbFloor));
            acc += x[i] * std::log(p) + (S(1) - x[i]) * std::log(S(1) - p);
        }
        ll[b] = acc;
    }
    return ll;
}

// Accumulates d(sum_b w_b * ll_b)/dprobs. Where the clamp is active the
// function is flat in probs, so the gradient there is zero.
template <class S>
void bernoulli_loglik_backward(const Tensor<S>& x, const Tensor<S>& probs,
                               const std::vector<S>& w, Tensor<S>& gprobs) {
    const std::size_t B = x.shape[0], N = x.size() / B;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < N; ++j) {
            const std::size_t i = b * N + j;
            if (probs[i] < S(kProbFloor) || probs[i] > S(1 - kProbFloor)) continue;
            gprobs[i] += w[b] * (x[i] / probs[i] - (S(1) - x[i]) / (S(1) - probs[i]));
        }
}

// ----- unit-variance Gaussian log-likelihood ----------------------------------
//
// Per sample: -0.5 * sum_j (x_j - d_j)^2 - (n/2) log(2 pi).

template <class S>
std::vector<S> gaussian_unit_loglik(const Tensor<S>& x, const Tensor<S>& d) {
    ensure_same_shape(x, d, "gaussian(x, d)");
    const std::size_t B = x.shape[0], N = x.size() / B;
    std::vector<S> ll(B, S(0));
    for (std::size_t b = 0; b < B; ++b) {
        S acc = S(0);
        for (std::size_t j = 0; j < N; ++j) {
            const S r = x[b * N + j] - d[b * N + j];
            acc += r * r;
        }
        ll[b] = S(-0.5) * acc - S(0.5) * S(N) * S(kLog2Pi);
    }
    return ll;
}

template <class S>
void gaussian_unit_loglik_backward(const Tensor<S>& x, const Tensor<S>& d,
                                   const std::vector<S>& w, Tensor<S>& gd) {
    const std::size_t B = x.shape[0], N = x.size() / B;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < N; ++j) {
            const std::size_t i = b * N + j;
            gd[i] += w[b] * (x[i] - d[i]);
        }
}

} // namespace vac
