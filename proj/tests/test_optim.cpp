#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "vac/optim.hpp"

using namespace vac;

namespace {

struct Scalar {
    Param<double> p;
    ParamSet<double> set;

    explicit Scalar(double v) : p({1}) {
        p.value[0] = v;
        set.add("w", ParamGroup::classifier, false, p);
    }
};

} // namespace

TEST_CASE("plain sgd step moves against the gradient and clears it") {
    Scalar s(1.0);
    s.p.grad[0] = 0.5;
    SgdMomentum<double> opt(0.0, 0.0);
    opt.step(s.set, 0.1);
    CHECK(s.p.value[0] == Catch::Approx(0.95).epsilon(1e-15));
    CHECK(s.p.grad[0] == 0.0);
}

TEST_CASE("momentum accumulates across steps") {
    // v1 = 1, v2 = 0.9*1 + 1 = 1.9; total displacement lr*(1 + 1.9).
    Scalar s(0.0);
    SgdMomentum<double> opt(0.9, 0.0);
    s.p.grad[0] = 1.0;
    opt.step(s.set, 0.01);
    CHECK(s.p.value[0] == Catch::Approx(-0.01).epsilon(1e-15));
    CHECK(s.p.momentum[0] == Catch::Approx(1.0).epsilon(1e-15));
    s.p.grad[0] = 1.0;
    opt.step(s.set, 0.01);
    CHECK(s.p.momentum[0] == Catch::Approx(1.9).epsilon(1e-15));
    CHECK(s.p.value[0] == Catch::Approx(-0.01 * (1.0 + 1.9)).epsilon(1e-15));
}

TEST_CASE("weight decay couples into the gradient") {
    Scalar s(2.0);
    s.p.grad[0] = 0.0;
    SgdMomentum<double> opt(0.0, 0.1);
    opt.step(s.set, 0.5);
    // effective gradient 0 + 0.1*2 = 0.2, step -0.5*0.2
    CHECK(s.p.value[0] == Catch::Approx(1.9).epsilon(1e-15));
}

TEST_CASE("step rejects non-finite parameter updates") {
    Scalar s(1.0);
    s.p.grad[0] = std::numeric_limits<double>::infinity();
    SgdMomentum<double> opt(0.9, 0.0);
    CHECK_THROWS_AS(opt.step(s.set, 0.01), NumericError);
}

TEST_CASE("step decay schedule divides at each reached drop") {
    LrSchedule lr{0.01, {10, 30}, 10.0};
    CHECK(lr.at(0) == 0.01);
    CHECK(lr.at(9) == 0.01);
    CHECK(lr.at(10) == Catch::Approx(0.001).epsilon(1e-15));
    CHECK(lr.at(29) == Catch::Approx(0.001).epsilon(1e-15));
    CHECK(lr.at(30) == Catch::Approx(0.0001).epsilon(1e-15));
    CHECK(lr.at(100) == Catch::Approx(0.0001).epsilon(1e-15));
}

TEST_CASE("optimizer config validation") {
    OptimizerConfig good;
    CHECK_NOTHROW(good.validate());

    OptimizerConfig bad = good;
    bad.lr_drop_epochs = {10, 10};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.lr_drop_epochs = {30, 10};
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = good;
    bad.momentum = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.momentum = -0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = good;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = good;
    bad.weight_decay = -1e-9;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    CHECK(good.schedule().at(10) == Catch::Approx(0.001));
}

TEST_CASE("momentum sgd minimizes a convex quadratic") {
    // loss = 0.5 * sum (p - t)^2, analytic gradient p - t.
    const std::vector<double> target{3.0, -1.5, 0.25};
    Param<double> p({3});
    p.value = Tensor<double>({3}, std::vector<double>{0.0, 0.0, 0.0});
    ParamSet<double> set;
    set.add("w", ParamGroup::classifier, false, p);

    auto loss = [&] {
        double acc = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            const double d = p.value[i] - target[i];
            acc += 0.5 * d * d;
        }
        return acc;
    };

    SgdMomentum<double> opt(0.9, 0.0);
    const double initial = loss();
    for (int it = 0; it < 200; ++it) {
        for (std::size_t i = 0; i < 3; ++i) p.grad[i] = p.value[i] - target[i];
        opt.step(set, 0.05);
    }
    CHECK(loss() < initial * 1e-6);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(p.value[i] == Catch::Approx(target[i]).margin(1e-3));
}

TEST_CASE("param set rejects duplicate names and finds by name") {
    Param<double> a({2}), b({2});
    ParamSet<double> set;
    set.add("x", ParamGroup::encoder, false, a);
    CHECK_THROWS_AS(set.add("x", ParamGroup::decoder, false, b), ConfigError);
    set.add("y", ParamGroup::decoder, true, b);
    CHECK(set.size() == 2);
    CHECK(set.value_count() == 4);
    REQUIRE(set.find("y") != nullptr);
    CHECK(set.find("y")->is_bias);
    CHECK(set.find("missing") == nullptr);

    a.grad.fill(3.0);
    set.zero_grads();
    CHECK(a.grad[0] == 0.0);
}
