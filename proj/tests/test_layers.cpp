#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "vac/gradcheck.hpp"
#include "vac/layers.hpp"
#include "vac/rng.hpp"

using namespace vac;

namespace {

// Scalar readout used to turn a layer output into a loss: fixed random
// weights make every output entry matter.
std::vector<double> readout_weights(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> w(n);
    for (double& v : w) v = rng.uniform(-1.0, 1.0);
    return w;
}

double weighted_sum(const Tensor<double>& y, const std::vector<double>& w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += w[i] * y[i];
    return acc;
}

} // namespace

TEST_CASE("identity linear layer: loss sum(y) has unit input gradient") {
    Linear<double> lin(2, 2);
    lin.weight.value = Tensor<double>({2, 2}, std::vector<double>{1, 0, 0, 1});
    lin.bias.value.fill(0.0);

    Tensor<double> x({1, 2}, std::vector<double>{1.0, 2.0});
    Tensor<double> y = lin.forward(x);
    CHECK(y.at(0, 0) == 1.0);
    CHECK(y.at(0, 1) == 2.0);
    const double loss = y.at(0, 0) + y.at(0, 1);
    CHECK(loss == 3.0);

    Tensor<double> gy({1, 2}, 1.0);
    Tensor<double> gx = lin.backward(gy);
    CHECK(gx.at(0, 0) == 1.0);
    CHECK(gx.at(0, 1) == 1.0);
    // dL/dW = gy^T x, dL/db = gy
    CHECK(lin.weight.grad.at(0, 0) == 1.0);
    CHECK(lin.weight.grad.at(0, 1) == 2.0);
    CHECK(lin.weight.grad.at(1, 0) == 1.0);
    CHECK(lin.weight.grad.at(1, 1) == 2.0);
    CHECK(lin.bias.grad[0] == 1.0);
    CHECK(lin.bias.grad[1] == 1.0);
}

TEST_CASE("linear layer rejects wrong input width") {
    Linear<double> lin(3, 2);
    Tensor<double> bad({1, 4}, 0.5);
    CHECK_THROWS_AS(lin.forward(bad), ConfigError);
}

TEST_CASE("relu zeroes dead units and their gradients") {
    ReLU<double> relu;
    Tensor<double> x({1, 2}, std::vector<double>{-1.0, 2.0});
    Tensor<double> y = relu.forward(x);
    CHECK(y.at(0, 0) == 0.0);
    CHECK(y.at(0, 1) == 2.0);

    Tensor<double> gy({1, 2}, std::vector<double>{5.0, 7.0});
    Tensor<double> gx = relu.backward(gy);
    CHECK(gx.at(0, 0) == 0.0);
    CHECK(gx.at(0, 1) == 7.0);

    // Away from the kink the derivative is exact: central differences at x=2
    // give (2+h - (2-h)) / 2h = 1 up to rounding.
    const double h = 1e-5;
    const double numeric = ((2.0 + h) - (2.0 - h)) / (2.0 * h);
    CHECK(std::abs(numeric - 1.0) < 1e-9);

    // The layer tracks how close any activation came to the kink.
    CHECK(relu.kink_margin() == Catch::Approx(1.0));
    relu.reset_kink_margin();
    CHECK(std::isinf(relu.kink_margin()));
}

TEST_CASE("conv2d output extent and finite-difference gradients") {
    CHECK(conv_out_extent(28, 3, 2, 1) == 14);
    CHECK(conv_out_extent(14, 3, 2, 1) == 7);
    CHECK(conv_out_extent(8, 3, 2, 1) == 4);

    Conv2d<double> conv(2, 3, 3, 2, 1);
    Rng rng(7);
    conv.weight.value = Tensor<double>::randn({3, 2, 3, 3}, rng, 0.3);
    conv.bias.value = Tensor<double>::randn({3}, rng, 0.1);

    Tensor<double> x = Tensor<double>::randn({1, 2, 8, 8}, rng, 0.5);
    Tensor<double> y = conv.forward(x);
    REQUIRE(y.shape == std::vector<std::size_t>{1, 3, 4, 4});

    const auto w = readout_weights(y.size(), 11);
    Tensor<double> gy({1, 3, 4, 4}, std::vector<double>(w.begin(), w.end()));
    conv.weight.grad.fill(0.0);
    conv.bias.grad.fill(0.0);
    Tensor<double> gx = conv.backward(gy);

    auto loss_of_x = [&](const std::vector<double>& flat) {
        Conv2d<double> c2(2, 3, 3, 2, 1);
        c2.weight.value = conv.weight.value;
        c2.bias.value = conv.bias.value;
        Tensor<double> xi({1, 2, 8, 8}, flat);
        return weighted_sum(c2.forward(xi), w);
    };
    auto rx = grad_check<double>(loss_of_x, x.data, gx.data, 1e-5);
    CHECK(rx.max_rel_err < 1e-6);

    auto loss_of_w = [&](const std::vector<double>& flat) {
        Conv2d<double> c2(2, 3, 3, 2, 1);
        c2.weight.value = Tensor<double>({3, 2, 3, 3}, flat);
        c2.bias.value = conv.bias.value;
        return weighted_sum(c2.forward(x), w);
    };
    auto rw = grad_check<double>(loss_of_w, conv.weight.value.data, conv.weight.grad.data, 1e-5);
    CHECK(rw.max_rel_err < 1e-6);

    auto loss_of_b = [&](const std::vector<double>& flat) {
        Conv2d<double> c2(2, 3, 3, 2, 1);
        c2.weight.value = conv.weight.value;
        c2.bias.value = Tensor<double>({3}, flat);
        return weighted_sum(c2.forward(x), w);
    };
    auto rb = grad_check<double>(loss_of_b, conv.bias.value.data, conv.bias.grad.data, 1e-5);
    CHECK(rb.max_rel_err < 1e-6);
}

TEST_CASE("conv_transpose2d inverts the conv extent map and passes gradcheck") {
    // 14 -> 28 with k=3, s=2, p=1 needs output padding 1.
    ConvTranspose2d<double> up(2, 1, 3, 2, 1, 1);
    Rng rng(13);
    up.weight.value = Tensor<double>::randn({2, 1, 3, 3}, rng, 0.3);
    up.bias.value = Tensor<double>::randn({1}, rng, 0.1);

    Tensor<double> z = Tensor<double>::randn({1, 2, 14, 14}, rng, 0.5);
    Tensor<double> y = up.forward(z);
    REQUIRE(y.shape == std::vector<std::size_t>{1, 1, 28, 28});

    CHECK_THROWS_AS(ConvTranspose2d<double>(2, 1, 3, 2, 1, 2), ConfigError);

    const auto w = readout_weights(y.size(), 17);
    Tensor<double> gy({1, 1, 28, 28}, std::vector<double>(w.begin(), w.end()));
    up.weight.grad.fill(0.0);
    up.bias.grad.fill(0.0);
    Tensor<double> gz = up.backward(gy);

    auto loss_of_z = [&](const std::vector<double>& flat) {
        ConvTranspose2d<double> u2(2, 1, 3, 2, 1, 1);
        u2.weight.value = up.weight.value;
        u2.bias.value = up.bias.value;
        Tensor<double> zi({1, 2, 14, 14}, flat);
        return weighted_sum(u2.forward(zi), w);
    };
    auto rz = grad_check<double>(loss_of_z, z.data, gz.data, 1e-5);
    CHECK(rz.max_rel_err < 1e-6);

    auto loss_of_w = [&](const std::vector<double>& flat) {
        ConvTranspose2d<double> u2(2, 1, 3, 2, 1, 1);
        u2.weight.value = Tensor<double>({2, 1, 3, 3}, flat);
        u2.bias.value = up.bias.value;
        return weighted_sum(u2.forward(z), w);
    };
    auto rw = grad_check<double>(loss_of_w, up.weight.value.data, up.weight.grad.data, 1e-5);
    CHECK(rw.max_rel_err < 1e-6);
}

TEST_CASE("sigmoid is stable at extremes and has the textbook derivative") {
    Sigmoid<double> sig;
    Tensor<double> x({1, 3}, std::vector<double>{0.0, -1000.0, 1000.0});
    Tensor<double> y = sig.forward(x);
    CHECK(y.at(0, 0) == 0.5);
    CHECK(y.at(0, 1) >= 0.0);
    CHECK(y.at(0, 1) < 1e-300);
    CHECK(y.at(0, 2) == 1.0);
    CHECK(y.finite());

    Tensor<double> gy({1, 3}, 1.0);
    Tensor<double> gx = sig.backward(gy);
    CHECK(gx.at(0, 0) == 0.25); // y(1-y) at y=0.5
}

TEST_CASE("global average pool averages forward and spreads gradients") {
    GlobalAvgPool<double> pool;
    Tensor<double> x({1, 2, 2, 2});
    for (std::size_t i = 0; i < 4; ++i) x[i] = double(i);      // channel 0: 0..3
    for (std::size_t i = 4; i < 8; ++i) x[i] = 10.0;           // channel 1: flat
    Tensor<double> y = pool.forward(x);
    CHECK(y.at(0, 0) == 1.5);
    CHECK(y.at(0, 1) == 10.0);

    Tensor<double> gy({1, 2}, std::vector<double>{4.0, 8.0});
    Tensor<double> gx = pool.backward(gy);
    for (std::size_t i = 0; i < 4; ++i) CHECK(gx[i] == 1.0);
    for (std::size_t i = 4; i < 8; ++i) CHECK(gx[i] == 2.0);
}

TEST_CASE("sequential conv stack matches finite differences end to end") {
    // conv -> relu -> conv -> pool -> linear, the encoder trunk in miniature.
    auto build = [](Sequential<double>& net) {
        net.add(Conv2d<double>(1, 3, 3, 2, 1), "conv0");
        net.add(ReLU<double>(), "relu0");
        net.add(Conv2d<double>(3, 4, 3, 2, 1), "conv1");
        net.add(GlobalAvgPool<double>(), "pool");
        net.add(Linear<double>(4, 2), "head");
    };

    Sequential<double> net;
    build(net);
    ParamSet<double> ps;
    net.collect(ps, "enc", ParamGroup::encoder);
    Rng rng(23);
    for (auto& ref : ps.items)
        for (auto& v : ref.param->value.data) v = rng.normal() * 0.4;

    Tensor<double> x = Tensor<double>::randn({2, 1, 8, 8}, rng, 0.5);
    net.reset_kink_margin();
    Tensor<double> y = net.forward(x);
    REQUIRE(y.shape == std::vector<std::size_t>{2, 2});
    // A pre-activation sitting on a ReLU kink would poison the comparison;
    // this seed keeps a wide margin.
    REQUIRE(net.kink_margin() > 1e-3);

    const auto w = readout_weights(y.size(), 29);
    ps.zero_grads();
    Tensor<double> gy({2, 2}, std::vector<double>(w.begin(), w.end()));
    Tensor<double> gx = net.backward(gy);

    auto loss_of_x = [&](const std::vector<double>& flat) {
        Sequential<double> n2;
        build(n2);
        ParamSet<double> p2;
        n2.collect(p2, "enc", ParamGroup::encoder);
        for (std::size_t i = 0; i < p2.items.size(); ++i)
            p2.items[i].param->value = ps.items[i].param->value;
        Tensor<double> xi({2, 1, 8, 8}, flat);
        return weighted_sum(n2.forward(xi), w);
    };
    auto rx = grad_check<double>(loss_of_x, x.data, gx.data, 1e-5);
    CHECK(rx.max_rel_err < 1e-5);

    // Parameter gradients of the whole stack, one tensor at a time.
    for (std::size_t pi = 0; pi < ps.items.size(); ++pi) {
        auto loss_of_p = [&](const std::vector<double>& flat) {
            Sequential<double> n2;
            build(n2);
            ParamSet<double> p2;
            n2.collect(p2, "enc", ParamGroup::encoder);
            for (std::size_t i = 0; i < p2.items.size(); ++i)
                p2.items[i].param->value = ps.items[i].param->value;
            p2.items[pi].param->value =
                Tensor<double>(ps.items[pi].param->value.shape, flat);
            return weighted_sum(n2.forward(x), w);
        };
        auto rp = grad_check<double>(loss_of_p, ps.items[pi].param->value.data,
                                     ps.items[pi].param->grad.data, 1e-5);
        INFO("parameter " << ps.items[pi].name);
        CHECK(rp.max_rel_err < 1e-5);
    }
}

TEST_CASE("softmax cross-entropy on symmetric logits") {
    Tensor<double> logits({1, 2}, std::vector<double>{0.0, 0.0});
    Tensor<double> probs = softmax_rows(logits);
    CHECK(probs.at(0, 0) == 0.5);
    CHECK(probs.at(0, 1) == 0.5);

    std::vector<int> labels{0};
    auto ll = softmax_loglik(probs, labels);
    CHECK(ll[0] == Catch::Approx(std::log(0.5)).epsilon(1e-12));

    // gradient of -loglik wrt logits is p - onehot
    Tensor<double> g = softmax_loglik_backward(probs, labels, std::vector<double>{1.0});
    CHECK(g.at(0, 0) == Catch::Approx(-0.5).epsilon(1e-12));
    CHECK(g.at(0, 1) == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax is shift invariant and rows sum to one") {
    Rng rng(31);
    Tensor<double> logits = Tensor<double>::randn({4, 10}, rng, 3.0);
    Tensor<double> shifted = logits;
    for (std::size_t b = 0; b < 4; ++b)
        for (std::size_t k = 0; k < 10; ++k) shifted.at(b, k) += 7.25;

    Tensor<double> p = softmax_rows(logits);
    Tensor<double> q = softmax_rows(shifted);
    for (std::size_t b = 0; b < 4; ++b) {
        double sum = 0.0;
        for (std::size_t k = 0; k < 10; ++k) {
            sum += p.at(b, k);
            CHECK(p.at(b, k) == Catch::Approx(q.at(b, k)).epsilon(1e-12));
        }
        CHECK(sum == Catch::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("softmax loglik rejects out-of-range labels") {
    Tensor<double> probs({1, 3}, std::vector<double>{0.2, 0.3, 0.5});
    CHECK_THROWS_AS(softmax_loglik(probs, std::vector<int>{3}), ConfigError);
    CHECK_THROWS_AS(softmax_loglik(probs, std::vector<int>{-1}), ConfigError);
}
