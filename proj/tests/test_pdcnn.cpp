#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "qppwg/kernels.hpp"
#include "qppwg/pdcnn.hpp"

using namespace qppwg;

namespace {

std::vector<double> random_vec(size_t n, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

template <typename S>
PdcnnLayer<S> random_layer(int c_in, int c_out, int base_dilation, std::mt19937_64& rng,
                           bool requires_grad = false) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    auto tensor = [&](std::vector<int> shape) {
        int64_t n = 1;
        for (int d : shape) n *= d;
        std::vector<S> data(static_cast<size_t>(n));
        for (auto& v : data) v = static_cast<S>(dist(rng));
        return Tensor<S>::from_data(std::move(shape), std::move(data), requires_grad);
    };
    PdcnnLayer<S> layer;
    layer.w_current = {"wc", tensor({c_out, c_in})};
    layer.w_past = {"wp", tensor({c_out, c_in})};
    layer.w_future = {"wf", tensor({c_out, c_in})};
    layer.bias = {"b", tensor({c_out})};
    layer.base_dilation = base_dilation;
    return layer;
}

std::vector<int32_t> random_dilations(int time, int max_d, std::mt19937_64& rng) {
    std::vector<int32_t> d(static_cast<size_t>(time));
    for (auto& v : d) v = 1 + static_cast<int32_t>(rng() % max_d);
    return d;
}

}  // namespace

TEST_CASE("adaptive forward matches the naive per-sample loop oracle bit-exactly") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const int c_in = 1 + static_cast<int>(rng() % 3);
        const int c_out = 1 + static_cast<int>(rng() % 3);
        const int time = 4 + static_cast<int>(rng() % 61);  // T <= 64
        PdcnnLayer<double> layer = random_layer<double>(c_in, c_out, 1, rng);
        const auto dil = random_dilations(time, 8, rng);
        const auto xv = random_vec(static_cast<size_t>(c_in) * time, rng);

        Tensor<double> y =
            pdcnn_forward(Tensor<double>::from_data({1, c_in, time}, xv), layer, dil);

        std::vector<double> oracle(static_cast<size_t>(c_out) * time);
        kernels::serial::pdcnn_forward(oracle.data(), xv.data(),
                                       layer.w_current.tensor.values().data(),
                                       layer.w_past.tensor.values().data(),
                                       layer.w_future.tensor.values().data(),
                                       layer.bias.tensor.values().data(), dil.data(), 1, c_in,
                                       c_out, time);
        REQUIRE(std::vector<double>(y.values().begin(), y.values().end()) == oracle);
    }
}

TEST_CASE("constant dilation matches a standard kernel-3 dilated convolution bit-exactly") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const int c_in = 1 + static_cast<int>(rng() % 3);
        const int c_out = 1 + static_cast<int>(rng() % 3);
        const int time = 8 + static_cast<int>(rng() % 57);
        const int d = 1 << (rng() % 4);
        PdcnnLayer<double> layer = random_layer<double>(c_in, c_out, d, rng);
        const auto xv = random_vec(static_cast<size_t>(c_in) * time, rng);

        Tensor<double> y = pdcnn_forward(Tensor<double>::from_data({1, c_in, time}, xv), layer);

        std::vector<double> ref(static_cast<size_t>(c_out) * time);
        kernels::serial::dilated_conv3_forward(ref.data(), xv.data(),
                                               layer.w_current.tensor.values().data(),
                                               layer.w_past.tensor.values().data(),
                                               layer.w_future.tensor.values().data(),
                                               layer.bias.tensor.values().data(), d, 1, c_in,
                                               c_out, time);
        REQUIRE(std::vector<double>(y.values().begin(), y.values().end()) == ref);
    }
}

TEST_CASE("DCNN equivalence: constant schedule equals fixed mode exactly") {
    std::mt19937_64 rng(7);
    const int time = 48;
    PdcnnLayer<double> layer = random_layer<double>(2, 3, 4, rng);
    const auto xv = random_vec(static_cast<size_t>(2) * time, rng);
    Tensor<double> x = Tensor<double>::from_data({1, 2, time}, xv);
    const std::vector<int32_t> constant(time, 4);
    Tensor<double> adaptive = pdcnn_forward(x, layer, constant);
    Tensor<double> fixed = pdcnn_forward(x, layer);
    REQUIRE(std::vector<double>(adaptive.values().begin(), adaptive.values().end()) ==
            std::vector<double>(fixed.values().begin(), fixed.values().end()));
}

TEST_CASE("identity current tap with zero past/future taps is the identity") {
    std::mt19937_64 rng(9);
    const int time = 20;
    PdcnnLayer<double> layer;
    layer.w_current = {"wc", Tensor<double>::from_data({2, 2}, {1, 0, 0, 1})};
    layer.w_past = {"wp", Tensor<double>::zeros({2, 2})};
    layer.w_future = {"wf", Tensor<double>::zeros({2, 2})};
    layer.bias = {"b", Tensor<double>::zeros({2})};
    const auto xv = random_vec(static_cast<size_t>(2) * time, rng);
    Tensor<double> x = Tensor<double>::from_data({1, 2, time}, xv);
    const auto dil = random_dilations(time, 7, rng);
    Tensor<double> y = pdcnn_forward(x, layer, dil);
    REQUIRE(std::vector<double>(y.values().begin(), y.values().end()) == xv);
}

TEST_CASE("gradients match central differences for input and all four parameters") {
    std::mt19937_64 rng(11);
    const int c_in = 2, c_out = 2, time = 32;
    PdcnnLayer<double> layer = random_layer<double>(c_in, c_out, 1, rng, true);
    const auto dil = random_dilations(time, 8, rng);
    Tensor<double> x =
        Tensor<double>::from_data({1, c_in, time}, random_vec(static_cast<size_t>(c_in) * time, rng), true);
    const auto proj = random_vec(static_cast<size_t>(c_out) * time, rng);

    auto loss = [&] {
        Tensor<double> y = pdcnn_forward(x, layer, dil);
        Tensor<double> p = Tensor<double>::from_data({1, c_out, time}, proj);
        return sum(mul(y, p));
    };
    auto check = [&](Tensor<double>& t) {
        t.zero_grad();
        Tensor<double> l = loss();
        backward(l);
        std::vector<double> analytic(t.grad().begin(), t.grad().end());
        auto vals = t.values_mut();
        for (int64_t i = 0; i < t.numel(); ++i) {
            const double orig = vals[i];
            const double h = 1e-5 * std::max(1.0, std::abs(orig));
            vals[i] = orig + h;
            const double up = loss().item();
            vals[i] = orig - h;
            const double down = loss().item();
            vals[i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double denom =
                std::max({std::abs(analytic[static_cast<size_t>(i)]), std::abs(numeric), 1e-6});
            REQUIRE(std::abs(analytic[static_cast<size_t>(i)] - numeric) / denom < 1e-4);
        }
    };
    check(x);
    check(layer.w_current.tensor);
    check(layer.w_past.tensor);
    check(layer.w_future.tensor);
    check(layer.bias.tensor);
}

TEST_CASE("gradient completeness: every parameter gets a nonzero gradient") {
    std::mt19937_64 rng(13);
    const int time = 40;
    PdcnnLayer<double> layer = random_layer<double>(3, 2, 2, rng, true);
    Tensor<double> x = Tensor<double>::from_data({1, 3, time}, random_vec(3 * time, rng), true);
    backward(sum(mul(pdcnn_forward(x, layer), pdcnn_forward(x, layer))));
    for (auto* p : {&layer.w_current, &layer.w_past, &layer.w_future, &layer.bias}) {
        bool any = false;
        for (double g : p->tensor.grad()) any = any || g != 0.0;
        REQUIRE(any);
    }
}

TEST_CASE("locality: perturbing sample s only changes outputs at distance 0 or d'") {
    std::mt19937_64 rng(17);
    const int time = 64;
    PdcnnLayer<double> layer = random_layer<double>(1, 1, 1, rng);
    const auto dil = random_dilations(time, 6, rng);
    const auto xv = random_vec(static_cast<size_t>(time), rng);

    Tensor<double> base = pdcnn_forward(Tensor<double>::from_data({1, 1, time}, xv), layer, dil);
    const int s = 31;
    auto bumped = xv;
    bumped[static_cast<size_t>(s)] += 1.0;
    Tensor<double> moved =
        pdcnn_forward(Tensor<double>::from_data({1, 1, time}, bumped), layer, dil);
    for (int t = 0; t < time; ++t) {
        const bool changed = base.values()[static_cast<size_t>(t)] !=
                             moved.values()[static_cast<size_t>(t)];
        const int d = dil[static_cast<size_t>(t)];
        const bool reachable = t == s || t - d == s || t + d == s;
        if (changed) REQUIRE(reachable);
    }
}

TEST_CASE("linearity in the input for zero bias") {
    std::mt19937_64 rng(19);
    const int time = 24;
    PdcnnLayer<double> layer = random_layer<double>(2, 2, 3, rng);
    layer.bias = {"b", Tensor<double>::zeros({2})};
    const auto dil = random_dilations(time, 5, rng);
    const auto xv = random_vec(static_cast<size_t>(2) * time, rng);
    const auto yv = random_vec(static_cast<size_t>(2) * time, rng);
    const double a = 1.7, b = -0.6;

    std::vector<double> combo(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) combo[i] = a * xv[i] + b * yv[i];
    Tensor<double> lhs =
        pdcnn_forward(Tensor<double>::from_data({1, 2, time}, combo), layer, dil);
    Tensor<double> fx = pdcnn_forward(Tensor<double>::from_data({1, 2, time}, xv), layer, dil);
    Tensor<double> fy = pdcnn_forward(Tensor<double>::from_data({1, 2, time}, yv), layer, dil);
    for (int64_t i = 0; i < lhs.numel(); ++i)
        REQUIRE(lhs.values()[static_cast<size_t>(i)] ==
                doctest::Approx(a * fx.values()[static_cast<size_t>(i)] +
                                b * fy.values()[static_cast<size_t>(i)])
                    .epsilon(1e-12));
}

TEST_CASE("receptive extent arithmetic") {
    REQUIRE(receptive_extent(false, 512, 1.0) == 1024);
    REQUIRE(receptive_extent(true, 16, 50.0) == 1600);
    REQUIRE(receptive_extent(true, 1, 0.3) == 2);  // clamp to d' = 1
}

TEST_CASE("invalid dilations are rejected") {
    std::mt19937_64 rng(23);
    PdcnnLayer<double> layer = random_layer<double>(1, 1, 1, rng);
    Tensor<double> x = Tensor<double>::zeros({1, 1, 4});
    REQUIRE_THROWS_AS(pdcnn_forward(x, layer, std::vector<int32_t>{1, 1, 1}), ConfigError);
    REQUIRE_THROWS_AS(pdcnn_forward(x, layer, std::vector<int32_t>{1, 0, 1, 1}), ConfigError);
}
