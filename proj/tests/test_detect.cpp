#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "vac/detect.hpp"
#include "vac/rng.hpp"

using namespace vac;

TEST_CASE("separable error populations are classified perfectly") {
    const std::vector<double> clean{0.1, 0.2};
    const std::vector<double> adv{0.8, 0.9};
    const DetectorModel d = fit_detector(clean, adv);

    CHECK(d.weight > 0.0);
    CHECK_FALSE(d.degenerate);
    const double thr = d.threshold();
    CHECK(thr > 0.2);
    CHECK(thr < 0.8);
    CHECK(detection_rate(d, clean, adv) == 1.0);
}

TEST_CASE("noisy but separated populations reach high training rate") {
    Rng rng(600);
    std::vector<double> clean, adv;
    for (int i = 0; i < 200; ++i) {
        clean.push_back(std::abs(0.010 + 0.002 * rng.normal()));
        adv.push_back(std::abs(0.090 + 0.010 * rng.normal()));
    }
    const DetectorModel d = fit_detector(clean, adv);
    CHECK(detection_rate(d, clean, adv) > 0.99);
}

TEST_CASE("identical distributions give chance-level detection") {
    double mean_rate = 0.0;
    const int seeds = 10;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(700 + std::uint64_t(s));
        auto draw = [&](std::size_t n) {
            std::vector<double> v(n);
            for (auto& e : v) e = std::exp(-3.0 + 0.5 * rng.normal());
            return v;
        };
        const auto fit_a = draw(1000), fit_b = draw(1000);
        const DetectorModel d = fit_detector(fit_a, fit_b);
        const double rate = detection_rate(d, draw(1000), draw(1000));
        CHECK(rate > 0.45);
        CHECK(rate < 0.55);
        mean_rate += rate / seeds;
    }
    CHECK(mean_rate == Catch::Approx(0.5).margin(0.02));
}

TEST_CASE("the zero detector scores exactly one half") {
    const DetectorModel zero{};
    // sigmoid(0) = 0.5 is not > 0.5: everything is called clean.
    CHECK_FALSE(zero.flags_adversarial(123.0));
    const std::vector<double> clean{0.1, 0.2, 0.3};
    const std::vector<double> adv{0.7, 0.8, 0.9};
    CHECK(detection_rate(zero, clean, adv) == 0.5);
}

TEST_CASE("fitting identical lists converges to the zero detector") {
    const std::vector<double> e{0.2, 0.4, 0.6, 0.8};
    const DetectorModel d = fit_detector(e, e);
    CHECK(d.weight == 0.0);
    CHECK(d.bias == 0.0);
    CHECK(detection_rate(d, e, e) == 0.5);
}

TEST_CASE("decisions are invariant to common positive rescaling of the errors") {
    Rng rng(601);
    std::vector<double> clean, adv, clean_eval, adv_eval;
    for (int i = 0; i < 150; ++i) {
        clean.push_back(std::abs(0.02 + 0.01 * rng.normal()));
        adv.push_back(std::abs(0.05 + 0.02 * rng.normal()));
        clean_eval.push_back(std::abs(0.02 + 0.01 * rng.normal()));
        adv_eval.push_back(std::abs(0.05 + 0.02 * rng.normal()));
    }
    const double s = 37.5, t = 4.0;
    auto rescale = [&](std::vector<double> v) {
        for (auto& e : v) e = s * e + t;
        return v;
    };

    const DetectorModel d1 = fit_detector(clean, adv);
    const DetectorModel d2 = fit_detector(rescale(clean), rescale(adv));

    // Same decisions on correspondingly transformed evaluation points.
    for (std::size_t i = 0; i < clean_eval.size(); ++i) {
        CHECK(d1.flags_adversarial(clean_eval[i]) ==
              d2.flags_adversarial(s * clean_eval[i] + t));
        CHECK(d1.flags_adversarial(adv_eval[i]) ==
              d2.flags_adversarial(s * adv_eval[i] + t));
    }
    CHECK(detection_rate(d1, clean_eval, adv_eval) ==
          detection_rate(d2, rescale(clean_eval), rescale(adv_eval)));
}

TEST_CASE("degenerate all-equal inputs are flagged, not fitted") {
    const std::vector<double> flat(5, 0.3);
    const DetectorModel d = fit_detector(flat, flat);
    CHECK(d.degenerate);
    CHECK(d.weight == 0.0);
    CHECK(detection_rate(d, flat, flat) == 0.5);
}

TEST_CASE("unbalanced lists are truncated to the shorter head") {
    // The clean tail would be misclassified, but truncation drops it; a full
    // sweep over all ten clean points would score 0.75 instead.
    DetectorModel d;
    d.weight = 1.0;
    d.bias = -0.5;
    const std::vector<double> clean{0.1, 0.1, 0.1, 0.1, 0.1, 0.9, 0.9, 0.9, 0.9, 0.9};
    const std::vector<double> adv{0.9, 0.9, 0.9, 0.9, 0.9};
    CHECK(detection_rate(d, clean, adv) == 1.0);
}

TEST_CASE("detector weights stay bounded on separable inputs") {
    // Perfectly separable data drives unregularized logistic regression to
    // infinity; the cap must terminate the fit with finite parameters.
    const std::vector<double> clean{0.01, 0.011, 0.012};
    const std::vector<double> adv{0.02, 0.021, 0.022};
    const DetectorModel d = fit_detector(clean, adv);
    CHECK(std::isfinite(d.weight));
    CHECK(std::isfinite(d.bias));
    CHECK(std::abs(d.weight) <= kDetectorWeightCap + 1e-9);
    CHECK(detection_rate(d, clean, adv) == 1.0);
}

TEST_CASE("empty error lists are rejected") {
    const std::vector<double> some{0.1};
    CHECK_THROWS_AS(fit_detector({}, some), ConfigError);
    CHECK_THROWS_AS(fit_detector(some, {}), ConfigError);
    CHECK_THROWS_AS(detection_rate(DetectorModel{}, {}, some), ConfigError);
}
