#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "vac/errors.hpp"

namespace vac {

// 1-D logistic regression on the scalar reconstruction error.
// p(adversarial | e) = sigmoid(weight * e + bias); decision threshold 0.5.
struct DetectorModel {
    double weight = 0.0;
    double bias = 0.0;
    bool degenerate = false; // all inputs equal across both classes

    bool flags_adversarial(double error) const { return weight * error + bias > 0.0; }
    double threshold() const { return weight != 0.0 ? -bias / weight : 0.0; }
};

inline constexpr double kDetectorWeightCap = 1e3;

// Fits by gradient ascent on the mean log-likelihood (clean=0, adversarial=1)
// to tolerance 1e-8 or 1e5 iterations. Internally the feature is standardized
// — making the fitted decisions invariant to common positive affine rescaling
// of both error populations — and the weight is capped so separable inputs
// terminate at a margin-attaining solution instead of diverging. The returned
// parameters are de-standardized, then jointly rescaled onto |weight| ≤ 1e3 if
// needed (a common positive scaling of (weight, bias) never changes decisions).
inline DetectorModel fit_detector(const std::vector<double>& clean_errors,
                                  const std::vector<double>& adv_errors) {
    if (clean_errors.empty() || adv_errors.empty())
        throw ConfigError("fit_detector: both error lists must be non-empty");
    const std::size_t n = clean_errors.size() + adv_errors.size();

    bool all_equal = true;
    for (double e : clean_errors) all_equal = all_equal && e == clean_errors[0];
    for (double e : adv_errors) all_equal = all_equal && e == clean_errors[0];

    double mean = 0.0;
    for (double e : clean_errors) mean += e;
    for (double e : adv_errors) mean += e;
    mean /= double(n);
    double var = 0.0;
    for (double e : clean_errors) var += (e - mean) * (e - mean);
    for (double e : adv_errors) var += (e - mean) * (e - mean);
    var /= double(n);
    // var == 0.0 alone would miss the all-equal case: accumulating the mean
    // can round it off the common value, leaving a subnormal-scale variance.
    if (all_equal || var == 0.0) {
        DetectorModel d;
        d.degenerate = true;
        return d;
    }
    const double sd = std::sqrt(var);

    std::vector<double> x;
    std::vector<int> y;
    x.reserve(n);
    y.reserve(n);
    for (double e : clean_errors) {
        x.push_back((e - mean) / sd);
        y.push_back(0);
    }
    for (double e : adv_errors) {
        x.push_back((e - mean) / sd);
        y.push_back(1);
    }

    // Mean-loglik Hessian is bounded by 0.25 * mean(x^2 + 1) = 0.5 on
    // standardized features, so a fixed step of 2.0 = 1/L is stable.
    double w = 0.0, b = 0.0;
    const double lr = 2.0;
    const double tol = 1e-8;
    for (int it = 0; it < 100000; ++it) {
        double gw = 0.0, gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = w * x[i] + b;
            const double p = t >= 0 ? 1.0 / (1.0 + std::exp(-t))
                                    : std::exp(t) / (1.0 + std::exp(t));
            const double r = double(y[i]) - p;
            gw += r * x[i];
            gb += r;
        }
        gw /= double(n);
        gb /= double(n);
        w += lr * gw;
        b += lr * gb;
        const bool capped = std::abs(w) >= kDetectorWeightCap;
        if (capped) w = std::copysign(kDetectorWeightCap, w);
        if ((capped ? std::abs(gb) : std::max(std::abs(gw), std::abs(gb))) < tol) break;
    }

    DetectorModel d;
    d.weight = w / sd;
    d.bias = b - w * mean / sd;
    if (std::abs(d.weight) > kDetectorWeightCap) {
        const double scale = kDetectorWeightCap / std::abs(d.weight);
        d.weight *= scale;
        d.bias *= scale;
    }
    if (!std::isfinite(d.weight) || !std::isfinite(d.bias))
        throw NumericError("fit_detector: non-finite parameters");
    return d;
}

// Balanced classification rate at probability threshold 0.5. The larger error
// list is truncated to the smaller's size (deterministic head truncation), so
// both classes weigh equally. The zero detector scores p = 0.5 everywhere,
// which is not > 0.5: every input is called clean, giving exactly 0.5.
inline double detection_rate(const DetectorModel& model, const std::vector<double>& clean_errors,
                             const std::vector<double>& adv_errors) {
    if (clean_errors.empty() || adv_errors.empty())
        throw ConfigError("detection_rate: both error lists must be non-empty");
    const std::size_t m = std::min(clean_errors.size(), adv_errors.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (!model.flags_adversarial(clean_errors[i])) ++correct;
        if (model.flags_adversarial(adv_errors[i])) ++correct;
    }
    return double(correct) / double(2 * m);
}

struct DetectionRow {
    double epsilon = 0.0;
    std::size_t n_clean = 0;
    std::size_t n_adv = 0;
    DetectorModel detector;
    double rate = 0.0;
};

} // namespace vac
