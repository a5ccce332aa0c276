#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "djf/layers.hpp"
#include "djf/network.hpp"
#include "test_support.hpp"

using namespace djf;
using namespace djf::testing;

namespace {

Tensor<double> random_input(const std::vector<int>& shape, Rng& rng, double lo = -1,
                            double hi = 1) {
    Tensor<double> t(shape);
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("pool output arithmetic uses ceil with border windows") {
    // windows shrink at the border, so a leftover strip still yields a row
    CHECK(pool_out_extent(9, 2, 2) == 5);
    CHECK(pool_out_extent(8, 2, 2) == 4);
    CHECK(pool_out_extent(5, 2, 2) == 3);
    CHECK(pool_out_extent(2, 2, 2) == 1);
    CHECK(conv_out_extent(64, 5, 1) == 60);
    CHECK(conv_out_extent(100, 3, 1) == 98);
    CHECK_THROWS_AS(pool_out_extent(1, 2, 2), std::invalid_argument);
    CHECK_THROWS_AS(conv_out_extent(2, 3, 1), std::invalid_argument);
}

TEST_CASE("gradient checks for every layer kind") {
    Rng rng(7);
    const double tol = 1e-4;

    SUBCASE("Conv2d") {
        Conv2d<double> layer(3, 2, 4, 1);
        layer.init_weights(rng);
        auto x = random_input({7, 7, 2}, rng);
        CHECK(fd_check_layer(layer, x, rng) < tol);
    }
    SUBCASE("Conv2d strided") {
        Conv2d<double> layer(3, 1, 2, 2);
        layer.init_weights(rng);
        auto x = random_input({9, 9, 1}, rng);
        CHECK(fd_check_layer(layer, x, rng) < tol);
    }
    SUBCASE("MaxPool") {
        MaxPool<double> layer(2, 2);
        auto x = random_input({7, 7, 3}, rng);  // odd extent: border windows
        CHECK(fd_check_layer(layer, x, rng) < tol);
    }
    SUBCASE("AvgPool") {
        AvgPool<double> layer(3, 2);
        auto x = random_input({8, 8, 2}, rng);
        CHECK(fd_check_layer(layer, x, rng) < tol);
    }
    SUBCASE("ReLU") {
        ReLU<double> layer;
        auto x = random_input({5, 5, 2}, rng);
        for (auto& v : x.data)  // keep coordinates away from the kink at 0
            if (std::abs(v) < 0.01) v = 0.05;
        CHECK(fd_check_layer(layer, x, rng) < tol);
    }
    SUBCASE("Sigmoid") {
        Sigmoid<double> layer(2.5);
        auto x = random_input({4, 4, 2}, rng);
        CHECK(fd_check_layer(layer, x, rng) < tol);
    }
    SUBCASE("Bias") {
        Bias<double> layer(3);
        auto x = random_input({4, 4, 3}, rng);
        CHECK(fd_check_layer(layer, x, rng) < tol);
    }
    SUBCASE("Scale") {
        Scale<double> layer(1.7, true);
        auto x = random_input({4, 4, 2}, rng);
        CHECK(fd_check_layer(layer, x, rng) < tol);
    }
    SUBCASE("InnerProduct") {
        InnerProduct<double> layer(24, 10);
        layer.init_weights(rng);
        auto x = random_input({24}, rng);
        CHECK(fd_check_layer(layer, x, rng) < tol);
    }
    SUBCASE("SoftMax") {
        SoftMax<double> layer;
        auto x = random_input({6}, rng);
        CHECK(fd_check_layer(layer, x, rng) < tol);
    }
    SUBCASE("DctFilterbank") {
        DctFilterbank<double> layer({{0, 1}, {1, 0}, {2, 3}});
        auto x = random_input({16, 16, 1}, rng, 0.0, 255.0);
        CHECK(fd_check_layer(layer, x, rng) < tol);
    }
    SUBCASE("SoftCount with finite-difference-friendly gain") {
        // The production gain 1e6 makes the sigmoid too sharp for h = 1e-5;
        // the chain rule is gain-independent, so check at gain 10.
        SoftCount<double> layer({-1.0, -0.25, 0.25, 1.0}, 10.0, true);
        auto x = random_input({4, 4, 2}, rng);
        CHECK(fd_check_layer(layer, x, rng) < tol);
    }
    SUBCASE("DiffConv") {
        DiffConv<double> layer;
        auto x = random_input({6, 3, 1}, rng);
        CHECK(fd_check_layer(layer, x, rng) < tol);
    }
}

TEST_CASE("end-to-end gradients through a full classifier graph") {
    // The complete detector layer sequence (conv-pool x3, two inner products,
    // softmax) at toy sizes that admit an 8x8 input.
    Rng rng(11);
    Network<double> net;
    auto* c1 = net.add<Conv2d<double>>(3, 1, 4, 1);  // 8 -> 6
    c1->init_weights(rng);
    net.add<MaxPool<double>>(2, 2);                  // 6 -> 3
    auto* c2 = net.add<Conv2d<double>>(2, 4, 4, 1);  // 3 -> 2
    c2->init_weights(rng);
    net.add<MaxPool<double>>(2, 2);                  // 2 -> 1
    auto* c3 = net.add<Conv2d<double>>(1, 4, 4, 1);  // 1 -> 1
    c3->init_weights(rng);
    net.add<MaxPool<double>>(1, 1);
    auto* ip1 = net.add<InnerProduct<double>>(4, 5);
    ip1->init_weights(rng);
    net.add<ReLU<double>>();
    auto* ip2 = net.add<InnerProduct<double>>(5, 2);
    ip2->init_weights(rng);
    net.add<SoftMax<double>>();

    Tensor<double> x({8, 8, 1});
    for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
    CHECK(fd_check_network(net, x, 1) < 1e-4);
    CHECK(fd_check_network(net, x, 0) < 1e-4);
}

TEST_CASE("softmax cross-entropy matches direct computation") {
    Tensor<double> logits({3});
    logits.data = {1.0, -2.0, 0.5};
    auto [probs, loss] = softmax_xent(logits, 2);
    double denom = std::exp(1.0) + std::exp(-2.0) + std::exp(0.5);
    CHECK(probs.data[0] == doctest::Approx(std::exp(1.0) / denom));
    CHECK(loss == doctest::Approx(-std::log(std::exp(0.5) / denom)));
    double sum = probs.data[0] + probs.data[1] + probs.data[2];
    CHECK(sum == doctest::Approx(1.0));
    CHECK_THROWS_AS(softmax_xent(logits, 3), std::invalid_argument);
}

TEST_CASE("backward before forward is rejected") {
    ReLU<double> layer;
    Tensor<double> g({2, 2, 1});
    CHECK_THROWS_AS(layer.backward(g), std::logic_error);
}

TEST_CASE("SGD matches the hand-computed momentum recurrence") {
    Tensor<float> p({2}, true);
    p.data = {1.0f, -2.0f};
    p.ensure_grad();

    SgdConfig cfg;
    cfg.momentum = 0.5;
    cfg.lr0 = 0.1;
    cfg.decay_per_iteration = 0.9;
    SgdOptimizer<float> opt({&p}, cfg);

    p.grad = {1.0f, 2.0f};
    opt.step(0);
    // v = -0.1*g; p += v
    CHECK(p.data[0] == doctest::Approx(0.9f));
    CHECK(p.data[1] == doctest::Approx(-2.2f));

    p.grad = {1.0f, 2.0f};
    opt.step(1);
    // lr = 0.09; v = 0.5*v - 0.09*g
    CHECK(p.data[0] == doctest::Approx(0.9f + (0.5 * -0.1 - 0.09)));
    CHECK(p.data[1] == doctest::Approx(-2.2f + (0.5 * -0.2 - 0.18)));
}

TEST_CASE("SGD rejects non-finite gradients with the layer named") {
    Tensor<float> p({1}, true);
    p.ensure_grad();
    p.grad[0] = std::numeric_limits<float>::quiet_NaN();
    SgdOptimizer<float> opt({&p}, SgdConfig{});
    CHECK_THROWS_AS(opt.step(0), std::runtime_error);
}

TEST_CASE("network learns a linearly separable toy problem") {
    // Two Gaussian blobs; a small dense net should become near-perfect fast.
    Rng rng(3);
    Network<float> net;
    auto* ip1 = net.add<InnerProduct<float>>(2, 8);
    ip1->init_weights(rng);
    net.add<ReLU<float>>();
    auto* ip2 = net.add<InnerProduct<float>>(8, 2);
    ip2->init_weights(rng);
    net.add<SoftMax<float>>();

    std::vector<Tensor<float>> xs;
    std::vector<int> ys;
    for (int i = 0; i < 200; ++i) {
        const int label = i % 2;
        Tensor<float> x({2});
        const double cx = label ? 2.0 : -2.0;
        x.data[0] = static_cast<float>(cx + rng.normal(0, 0.5));
        x.data[1] = static_cast<float>(-cx + rng.normal(0, 0.5));
        xs.push_back(std::move(x));
        ys.push_back(label);
    }

    SgdConfig cfg;
    cfg.lr0 = 0.1;
    SgdOptimizer<float> opt(net.trainable_params(), cfg);
    for (int epoch = 0; epoch < 5; ++epoch) {
        for (std::size_t b = 0; b < xs.size(); b += 20) {
            net.zero_grads();
            for (std::size_t i = b; i < b + 20; ++i) forward_backward(net, xs[i], ys[i]);
            for (auto* p : net.trainable_params())
                for (auto& g : p->grad) g *= 1.0f / 20.0f;
            opt.step(static_cast<long>(epoch * 10 + b / 20));
        }
    }
    int correct = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        Tensor<float> probs = net.forward(xs[i]);
        if ((probs.data[1] > probs.data[0] ? 1 : 0) == ys[i]) ++correct;
    }
    CHECK(correct >= 198);
}

TEST_CASE("rng determinism and split independence") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng parent(1);
    Rng c1 = parent.split(0);
    Rng parent2(1);
    Rng c2 = parent2.split(0);
    CHECK(c1.next_u64() == c2.next_u64());
}
