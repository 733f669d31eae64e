#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "qppwg/kernels.hpp"
#include "qppwg/tensor.hpp"

using namespace qppwg;

namespace {

std::vector<double> random_vec(size_t n, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

// Central-difference check of d(loss)/d(x) for every coordinate of x.
// loss_fn must rebuild the graph from the leaf values on each call.
template <class LossFn>
void check_gradient(LossFn loss_fn, Tensor<double>& x, double tol, double h = 1e-5) {
    x.zero_grad();
    Tensor<double> loss = loss_fn();
    backward(loss);
    REQUIRE(x.grad().size() == static_cast<size_t>(x.numel()));
    std::vector<double> analytic(x.grad().begin(), x.grad().end());

    auto values = x.values_mut();
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double orig = values[i];
        const double step = h * std::max(1.0, std::abs(orig));
        values[i] = orig + step;
        const double up = loss_fn().item();
        values[i] = orig - step;
        const double down = loss_fn().item();
        values[i] = orig;
        const double numeric = (up - down) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[static_cast<size_t>(i)]),
                                       std::abs(numeric), 1e-6});
        REQUIRE(std::abs(analytic[static_cast<size_t>(i)] - numeric) / denom < tol);
    }
}

}  // namespace

TEST_CASE("conv1x1 identity and constant cases") {
    // identity weight, zero bias -> output equals input
    Tensor<double> x = Tensor<double>::from_data({1, 2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor<double> eye = Tensor<double>::from_data({2, 2}, {1, 0, 0, 1});
    Tensor<double> zero_b = Tensor<double>::zeros({2});
    Tensor<double> y = conv1x1(x, eye, zero_b);
    REQUIRE(std::vector<double>(y.values().begin(), y.values().end()) ==
            std::vector<double>{1, 2, 3, 4, 5, 6});

    // zero weight, bias c -> constant c everywhere
    Tensor<double> zero_w = Tensor<double>::zeros({3, 2});
    Tensor<double> c = Tensor<double>::from_data({3}, {7, 8, 9});
    Tensor<double> yc = conv1x1(x, zero_w, c);
    for (int o = 0; o < 3; ++o)
        for (int t = 0; t < 3; ++t) REQUIRE(yc.values()[static_cast<size_t>(o * 3 + t)] == 7.0 + o);
}

TEST_CASE("conv1x1 matches the naive triple-loop oracle bit-exactly") {
    std::mt19937_64 rng(3);
    const int batch = 1, c_in = 2, c_out = 3, time = 4;
    const auto xv = random_vec(static_cast<size_t>(batch) * c_in * time, rng);
    const auto wv = random_vec(static_cast<size_t>(c_out) * c_in, rng);
    const auto bv = random_vec(static_cast<size_t>(c_out), rng);
    Tensor<double> y = conv1x1(Tensor<double>::from_data({batch, c_in, time}, xv),
                               Tensor<double>::from_data({c_out, c_in}, wv),
                               Tensor<double>::from_data({c_out}, bv));
    std::vector<double> oracle(static_cast<size_t>(batch) * c_out * time);
    kernels::serial::conv1x1_forward(oracle.data(), xv.data(), wv.data(), bv.data(), batch, c_in,
                                     c_out, time);
    REQUIRE(std::vector<double>(y.values().begin(), y.values().end()) == oracle);
}

TEST_CASE("conv1x1 gradients match central differences") {
    std::mt19937_64 rng(5);
    Tensor<double> x =
        Tensor<double>::from_data({1, 3, 6}, random_vec(18, rng), true);
    Tensor<double> w = Tensor<double>::from_data({2, 3}, random_vec(6, rng), true);
    Tensor<double> b = Tensor<double>::from_data({2}, random_vec(2, rng), true);
    const auto weights = random_vec(12, rng);  // fixed projection to a scalar
    auto loss = [&] {
        Tensor<double> y = conv1x1(x, w, b);
        Tensor<double> proj = Tensor<double>::from_data({1, 2, 6}, weights);
        return sum(mul(y, proj));
    };
    check_gradient(loss, x, 1e-4);
    check_gradient(loss, w, 1e-4);
    check_gradient(loss, b, 1e-4);
}

TEST_CASE("shift basics and zero padding") {
    Tensor<double> x = Tensor<double>::from_data({1, 1, 3}, {1, 2, 3});
    SUBCASE("zero offsets are the identity") {
        Tensor<double> y = shift(x, {0, 0, 0});
        REQUIRE(std::vector<double>(y.values().begin(), y.values().end()) ==
                std::vector<double>{1, 2, 3});
    }
    SUBCASE("offset +1 pulls the future sample in, padding with zero") {
        Tensor<double> y = shift(x, {1, 1, 1});
        REQUIRE(std::vector<double>(y.values().begin(), y.values().end()) ==
                std::vector<double>{2, 3, 0});
    }
}

TEST_CASE("shift matches a per-sample loop oracle and its gradient checks out") {
    std::mt19937_64 rng(9);
    const int time = 16;
    std::vector<int32_t> offsets(time);
    for (auto& o : offsets) o = static_cast<int32_t>(rng() % (2 * time + 1)) - time;
    Tensor<double> x = Tensor<double>::from_data({1, 2, time}, random_vec(32, rng), true);

    Tensor<double> y = shift(x, std::vector<int32_t>(offsets));
    for (int c = 0; c < 2; ++c)
        for (int t = 0; t < time; ++t) {
            const int src = t + offsets[static_cast<size_t>(t)];
            const double expect =
                src >= 0 && src < time ? x.values()[static_cast<size_t>(c * time + src)] : 0.0;
            REQUIRE(y.values()[static_cast<size_t>(c * time + t)] == expect);
        }

    const auto proj = random_vec(32, rng);
    auto loss = [&] {
        Tensor<double> p = Tensor<double>::from_data({1, 2, time}, proj);
        return sum(mul(shift(x, std::vector<int32_t>(offsets)), p));
    };
    check_gradient(loss, x, 1e-4);
}

TEST_CASE("shift round trip conserves gradient mass for in-range samples") {
    // forward with offsets, backward scatters with negated offsets: total grad
    // mass equals the count of output samples whose source was in range
    std::mt19937_64 rng(31);
    const int time = 40;
    std::vector<int32_t> offsets(time);
    for (auto& o : offsets) o = static_cast<int32_t>(rng() % 21) - 10;
    Tensor<double> x = Tensor<double>::from_data({1, 1, time}, random_vec(40, rng), true);
    Tensor<double> y = shift(x, std::vector<int32_t>(offsets));
    backward(sum(y));
    int in_range = 0;
    for (int t = 0; t < time; ++t) {
        const int src = t + offsets[static_cast<size_t>(t)];
        if (src >= 0 && src < time) ++in_range;
    }
    double mass = 0.0;
    for (double gv : x.grad()) mass += gv;
    REQUIRE(mass == doctest::Approx(static_cast<double>(in_range)).epsilon(1e-12));
}

TEST_CASE("pointwise trivial values") {
    Tensor<double> x = Tensor<double>::from_data({1, 1, 3}, {-1.0, 0.0, 2.0});
    Tensor<double> lr = leaky_relu(x, 0.2);
    REQUIRE(lr.values()[0] == doctest::Approx(-0.2));
    REQUIRE(lr.values()[1] == 0.0);
    REQUIRE(lr.values()[2] == 2.0);
    REQUIRE(tanh(Tensor<double>::scalar(0.0)).item() == 0.0);
    REQUIRE(sigmoid(Tensor<double>::scalar(0.0)).item() == 0.5);
}

TEST_CASE("pointwise gradients match central differences at 20+ random points") {
    std::mt19937_64 rng(15);
    // keep leaky_relu inputs away from the kink
    std::vector<double> vals = random_vec(24, rng, 2.0);
    for (auto& v : vals)
        if (std::abs(v) < 1e-2) v = v < 0 ? v - 0.5 : v + 0.5;
    Tensor<double> x = Tensor<double>::from_data({1, 2, 12}, vals, true);
    const auto proj = random_vec(24, rng);
    auto with_proj = [&](auto op) {
        return [&, op] {
            Tensor<double> p = Tensor<double>::from_data({1, 2, 12}, proj);
            return sum(mul(op(x), p));
        };
    };
    check_gradient(with_proj([](const Tensor<double>& t) { return tanh(t); }), x, 1e-4);
    check_gradient(with_proj([](const Tensor<double>& t) { return sigmoid(t); }), x, 1e-4);
    check_gradient(with_proj([](const Tensor<double>& t) { return leaky_relu(t, 0.2); }), x, 1e-4);
    check_gradient(with_proj([](const Tensor<double>& t) { return affine(t, 1.7, -0.3); }), x,
                   1e-4);
    check_gradient(with_proj([](const Tensor<double>& t) { return mul(t, t); }), x, 1e-4);
    check_gradient(with_proj([](const Tensor<double>& t) { return add(t, mul(t, t)); }), x, 1e-4);
}

TEST_CASE("reductions: trivial values and gradients") {
    REQUIRE(frobenius_norm(Tensor<double>::from_data({2}, {3.0, 4.0})).item() == doctest::Approx(5.0));
    Tensor<double> ones = Tensor<double>::full({1, 1, 17}, 1.0);
    REQUIRE(mean(ones).item() == doctest::Approx(1.0));

    std::mt19937_64 rng(21);
    Tensor<double> x = Tensor<double>::from_data({1, 3, 7}, random_vec(21, rng), true);
    check_gradient([&] { return sum(x); }, x, 1e-4);
    check_gradient([&] { return mean(x); }, x, 1e-4);
    check_gradient([&] { return frobenius_norm(x); }, x, 1e-4);
    check_gradient([&] { return l1_norm(x); }, x, 1e-4);
    check_gradient([&] { return mean(mul(x, x)); }, x, 1e-4);
}

TEST_CASE("backward on sum gives ones; mean of squares gives 2x/n") {
    std::mt19937_64 rng(27);
    Tensor<double> x = Tensor<double>::from_data({1, 2, 5}, random_vec(10, rng), true);
    backward(sum(x));
    for (double g : x.grad()) REQUIRE(g == 1.0);

    x.zero_grad();
    backward(mean(mul(x, x)));
    for (int64_t i = 0; i < x.numel(); ++i)
        REQUIRE(x.grad()[static_cast<size_t>(i)] ==
                doctest::Approx(2.0 * x.values()[static_cast<size_t>(i)] / 10.0).epsilon(1e-12));
}

TEST_CASE("repeated backward accumulates gradients") {
    Tensor<double> x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
    Tensor<double> loss = sum(x);
    backward(loss);
    backward(loss);
    REQUIRE(x.grad()[0] == 2.0);
    REQUIRE(x.grad()[1] == 2.0);
}

TEST_CASE("backward rejects non-scalar losses") {
    Tensor<double> x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
    REQUIRE_THROWS_AS(backward(add(x, x)), UsageError);
}

TEST_CASE("slices and reshape route gradients to the right places") {
    std::mt19937_64 rng(33);
    Tensor<double> x = Tensor<double>::from_data({1, 4, 6}, random_vec(24, rng), true);
    const auto proj = random_vec(6, rng);
    auto loss = [&] {
        Tensor<double> upper = channel_slice(x, 1, 3);
        Tensor<double> clipped = time_slice(upper, 1, 4);
        Tensor<double> flat = reshape(clipped, {1, 6});
        Tensor<double> p = Tensor<double>::from_data({1, 6}, proj);
        return sum(mul(flat, p));
    };
    check_gradient(loss, x, 1e-4);
}

TEST_CASE("stft magnitude: zero signal, bin selectivity, dft oracle, gradient") {
    SUBCASE("zero signal -> zero magnitudes") {
        Tensor<double> x = Tensor<double>::zeros({1, 256});
        Tensor<double> m = stft_magnitude(x, {64, 16, 32});
        for (double v : m.values()) REQUIRE(v == 0.0);
    }
    SUBCASE("on-bin sinusoid peaks at its own bin in every frame") {
        const int fft = 128, bin = 9;
        std::vector<double> sig(512);
        for (size_t t = 0; t < sig.size(); ++t)
            sig[t] = std::sin(2.0 * 3.14159265358979 * bin * static_cast<double>(t) / fft);
        Tensor<double> m =
            stft_magnitude(Tensor<double>::from_data({1, 512}, sig), {fft, 32, 128});
        const int bins = fft / 2 + 1;
        const int frames = m.shape()[2];
        for (int j = 0; j < frames; ++j) {
            int argmax = 0;
            for (int k = 1; k < bins; ++k)
                if (m.values()[static_cast<size_t>(k * frames + j)] >
                    m.values()[static_cast<size_t>(argmax * frames + j)])
                    argmax = k;
            REQUIRE(argmax == bin);
        }
    }
    SUBCASE("random signal matches the naive dft oracle within 1e-5 relative") {
        std::mt19937_64 rng(37);
        const auto sig = random_vec(512, rng);
        const StftResolution res{128, 32, 128};
        Tensor<double> m = stft_magnitude(Tensor<double>::from_data({1, 512}, sig), res);
        const auto window = hann_window(res.win_length);
        const int frames = m.shape()[2];
        const int bins = res.fft_size / 2 + 1;
        for (int j = 0; j < frames; ++j) {
            std::vector<double> frame(static_cast<size_t>(res.fft_size), 0.0);
            for (int n = 0; n < res.win_length; ++n)
                frame[static_cast<size_t>(n)] =
                    sig[static_cast<size_t>(j * res.hop + n)] * window[static_cast<size_t>(n)];
            std::vector<double> mags(static_cast<size_t>(bins));
            kernels::serial::dft_magnitude(frame.data(), res.fft_size, mags.data());
            for (int k = 0; k < bins; ++k) {
                const double got = m.values()[static_cast<size_t>(k * frames + j)];
                const double want = mags[static_cast<size_t>(k)];
                REQUIRE(std::abs(got - want) <= 1e-5 * std::max(1.0, std::abs(want)));
            }
        }
    }
    SUBCASE("gradient through the stft matches central differences") {
        std::mt19937_64 rng(41);
        Tensor<double> x = Tensor<double>::from_data({1, 96}, random_vec(96, rng), true);
        const auto proj = random_vec(17 * 5, rng);
        auto loss = [&] {
            Tensor<double> m = stft_magnitude(x, {32, 16, 32});
            Tensor<double> p = Tensor<double>::from_data(m.shape(), proj);
            return sum(mul(m, p));
        };
        check_gradient(loss, x, 1e-4);
    }
    SUBCASE("batch permutation invariance") {
        std::mt19937_64 rng(43);
        const auto a = random_vec(128, rng);
        const auto b = random_vec(128, rng);
        std::vector<double> ab(a);
        ab.insert(ab.end(), b.begin(), b.end());
        std::vector<double> ba(b);
        ba.insert(ba.end(), a.begin(), a.end());
        const StftResolution res{64, 16, 64};
        Tensor<double> mab = stft_magnitude(Tensor<double>::from_data({2, 128}, ab), res);
        Tensor<double> mba = stft_magnitude(Tensor<double>::from_data({2, 128}, ba), res);
        const int64_t half = mab.numel() / 2;
        for (int64_t i = 0; i < half; ++i) {
            REQUIRE(mab.values()[static_cast<size_t>(i)] ==
                    mba.values()[static_cast<size_t>(half + i)]);
            REQUIRE(mab.values()[static_cast<size_t>(half + i)] ==
                    mba.values()[static_cast<size_t>(i)]);
        }
    }
    SUBCASE("signal shorter than one frame is rejected") {
        Tensor<double> x = Tensor<double>::zeros({1, 31});
        REQUIRE_THROWS_AS(stft_magnitude(x, {64, 16, 32}), ConfigError);
    }
}

TEST_CASE("shape mismatches raise configuration errors with extents") {
    Tensor<double> a = Tensor<double>::zeros({1, 2, 3});
    Tensor<double> b = Tensor<double>::zeros({1, 2, 4});
    REQUIRE_THROWS_WITH_AS(add(a, b), doctest::Contains("[1,2,3]"), ConfigError);
    Tensor<double> w = Tensor<double>::zeros({4, 3});
    REQUIRE_THROWS_AS(conv1x1(a, w), ConfigError);
}

TEST_CASE("no-grad mode builds detached graphs") {
    Tensor<double> x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
    Tensor<double> y;
    {
        NoGradGuard guard;
        y = scale(x, 2.0);
    }
    REQUIRE_FALSE(y.needs_grad());
    backward(sum(mul(x, x)));  // unrelated graph still works afterwards
    REQUIRE(x.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("determinism: identical inputs give bit-identical results") {
    std::mt19937_64 rng(49);
    const auto xv = random_vec(2 * 64, rng);
    const auto wv = random_vec(8, rng);
    auto run = [&] {
        Tensor<double> x = Tensor<double>::from_data({1, 2, 64}, xv);
        Tensor<double> w = Tensor<double>::from_data({4, 2}, wv);
        Tensor<double> m = stft_magnitude(reshape(conv1x1(x, w), {4, 64}), {32, 8, 32});
        return sum(m).item();
    };
    REQUIRE(run() == run());
}
