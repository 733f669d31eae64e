#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "qppwg/conditioning.hpp"

using namespace qppwg;

namespace {

std::vector<float> random_voiced_f0(int frames, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> hz(60.0, 450.0);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::vector<float> f0(static_cast<size_t>(frames), 0.0f);
    bool any = false;
    for (int i = 0; i < frames; ++i)
        if (coin(rng) < 0.7) {
            f0[static_cast<size_t>(i)] = static_cast<float>(hz(rng));
            any = true;
        }
    if (!any) f0[static_cast<size_t>(frames / 2)] = 180.0f;
    return f0;
}

AuxFeatures tiny_features(std::vector<float> f0) {
    AuxFeatures f;
    const size_t n = f0.size();
    f.uv.resize(n);
    for (size_t i = 0; i < n; ++i) f.uv[i] = f0[i] > 0.0f ? 1.0f : 0.0f;
    f.f0 = std::move(f0);
    f.mcep.resize(n * kMcepDim);
    f.codeap.resize(n * kCodeapDim);
    for (size_t i = 0; i < f.mcep.size(); ++i) f.mcep[i] = static_cast<float>(i % 13) * 0.1f;
    for (size_t i = 0; i < f.codeap.size(); ++i) f.codeap[i] = -1.0f - static_cast<float>(i % 3);
    return f;
}

}  // namespace

TEST_CASE("interpolate_f0 handles voiced, gap and edge cases") {
    SUBCASE("all voiced is the identity") {
        ContinuousF0 c = interpolate_f0(std::vector<float>{100, 100, 100});
        REQUIRE(c.hz == std::vector<double>{100, 100, 100});
    }
    SUBCASE("single gap interpolates linearly") {
        ContinuousF0 c = interpolate_f0(std::vector<float>{100, 0, 200});
        REQUIRE(c.hz == std::vector<double>{100, 150, 200});
    }
    SUBCASE("leading and trailing unvoiced frames hold the nearest voiced value") {
        ContinuousF0 c = interpolate_f0(std::vector<float>{0, 0, 100, 0, 300, 0});
        REQUIRE(c.hz == std::vector<double>{100, 100, 100, 200, 300, 300});
    }
    SUBCASE("all unvoiced input is an error") {
        REQUIRE_THROWS_AS(interpolate_f0(std::vector<float>{0, 0, 0}), ConfigError);
    }
    SUBCASE("idempotent on already-continuous inputs") {
        std::mt19937_64 rng(3);
        std::vector<float> raw = random_voiced_f0(40, rng);
        ContinuousF0 once = interpolate_f0(raw);
        std::vector<float> as_float(once.hz.begin(), once.hz.end());
        ContinuousF0 twice = interpolate_f0(as_float);
        for (size_t i = 0; i < once.hz.size(); ++i)
            REQUIRE(twice.hz[i] == static_cast<double>(as_float[i]));
    }
}

TEST_CASE("scale_f0 is pointwise and validates the ratio") {
    ContinuousF0 f{{100.0, 150.0}};
    REQUIRE(scale_f0(f, 1.0).hz == f.hz);
    REQUIRE(scale_f0(f, 2.0).hz == std::vector<double>{200.0, 300.0});
    REQUIRE(scale_f0(ContinuousF0{{220.0}}, 0.5).hz == std::vector<double>{110.0});
    REQUIRE_THROWS_AS(scale_f0(f, 0.0), UsageError);
    REQUIRE_THROWS_AS(scale_f0(f, -1.0), UsageError);
}

TEST_CASE("dilation factors reproduce the 11.025 .. 110.25 span") {
    const std::vector<double> f0 = {50.0, 500.0, 110.25};
    const auto e = dilation_factors(f0, 22050.0, 4.0);
    REQUIRE(e[0] == doctest::Approx(110.25).epsilon(1e-12));
    REQUIRE(e[1] == doctest::Approx(11.025).epsilon(1e-12));
    REQUIRE(e[2] == 50.0);  // exact arithmetic: 22050 / (110.25 * 4)

    // a * F0 = Fs collapses the PDCNN to a plain DCNN
    const auto unit = dilation_factors(std::vector<double>{22050.0 / 4.0}, 22050.0, 4.0);
    REQUIRE(unit[0] == 1.0);
}

TEST_CASE("round_dilation rounds half away from zero and clamps at one") {
    REQUIRE(round_dilation(11.025, 4) == 44);
    REQUIRE(round_dilation(1.0, 8) == 8);
    REQUIRE(round_dilation(2.5, 1) == 3);
    REQUIRE(round_dilation(0.3, 1) == 1);  // clamp
    REQUIRE(round_dilation(0.1, 2) == 1);
}

TEST_CASE("scaling F0 by r divides e_t by r (E_t proportional to 1/F0)") {
    std::mt19937_64 rng(7);
    std::vector<float> raw = random_voiced_f0(30, rng);
    ContinuousF0 base = interpolate_f0(raw);
    for (double r : {0.5, 2.0, 1.25}) {
        const auto e_scaled = dilation_factors(scale_f0(base, r).hz, 22050.0, 4.0);
        const auto e_base = dilation_factors(base.hz, 22050.0, 4.0);
        for (size_t i = 0; i < e_base.size(); ++i)
            REQUIRE(e_scaled[i] == doctest::Approx(e_base[i] / r).epsilon(1e-12));
    }
}

TEST_CASE("d_prime is non-increasing in F0 for a fixed base dilation") {
    for (int d : {1, 2, 4, 8, 16}) {
        int32_t prev = INT32_MAX;
        for (double f0 = 50.0; f0 <= 500.0; f0 += 2.5) {
            const double e = 22050.0 / (f0 * 4.0);
            const int32_t cur = round_dilation(e, d);
            REQUIRE(cur <= prev);
            prev = cur;
        }
    }
}

TEST_CASE("upsample_to_samples repeats frames and keeps per-frame values") {
    AuxFeatures f = tiny_features({120.0f, 240.0f});
    ContinuousF0 c = interpolate_f0(f.f0);
    Tensor<float> aux = upsample_to_samples<float>(f, c, 3);
    REQUIRE(aux.shape() == std::vector<int>{1, kAuxChannels, 6});
    // channel 0 = continuous F0: [a,a,a,b,b,b]
    const float* v = aux.values().data();
    REQUIRE(std::vector<float>(v, v + 6) == std::vector<float>{120, 120, 120, 240, 240, 240});
    // frame values constant within each hop for every channel
    for (int ch = 0; ch < kAuxChannels; ++ch)
        for (int n = 0; n < 2; ++n) {
            const float* row = v + ch * 6 + n * 3;
            REQUIRE(row[0] == row[1]);
            REQUIRE(row[1] == row[2]);
        }

    // hop 1 is the identity in time
    Tensor<float> one = upsample_to_samples<float>(f, c, 1);
    REQUIRE(one.shape()[2] == 2);
}

TEST_CASE("batch geometry: 25520 samples consume exactly 232 frames at hop 110") {
    REQUIRE(25520 % kDefaultHop == 0);
    REQUIRE(25520 / kDefaultHop == 232);
}

TEST_CASE("schedule rows follow the adaptive base dilations") {
    std::vector<double> e = {2.0, 0.4, 10.0};
    const int bases[] = {1, 2};
    DilationSchedule s = make_dilation_schedule(e, std::span<const int>(bases, 2));
    REQUIRE(s.d_prime.size() == 2);
    REQUIRE(s.d_prime[0] == std::vector<int32_t>{2, 1, 10});
    REQUIRE(s.d_prime[1] == std::vector<int32_t>{4, 1, 20});
    REQUIRE(s.e_t == e);
}

TEST_CASE("normalization keeps constant channels finite") {
    std::mt19937_64 rng(11);
    AuxFeatures f = tiny_features(random_voiced_f0(50, rng));
    ContinuousF0 c = interpolate_f0(f.f0);
    NormStats stats = compute_norm_stats({&f}, {&c});
    REQUIRE(stats.mean.size() == static_cast<size_t>(kAuxChannels));

    Tensor<float> aux = upsample_to_samples<float>(f, c, 2);
    normalize_aux(aux, stats);
    for (float v : aux.values()) REQUIRE(std::isfinite(v));
}

TEST_CASE("feature files survive a write/read round trip") {
    std::mt19937_64 rng(13);
    AuxFeatures f = tiny_features(random_voiced_f0(25, rng));
    const auto dir = std::filesystem::temp_directory_path() / "qppwg_feat_test";
    std::filesystem::create_directories(dir);
    write_feature_files(dir / "utt", f, 22050, 110);
    FeatureFile back = read_feature_files(dir / "utt.json");
    REQUIRE(back.sample_rate == 22050);
    REQUIRE(back.hop == 110);
    REQUIRE(back.features.f0 == f.f0);
    REQUIRE(back.features.uv == f.uv);
    REQUIRE(back.features.mcep == f.mcep);
    REQUIRE(back.features.codeap == f.codeap);
    std::filesystem::remove_all(dir);
}

TEST_CASE("aux feature validation catches inconsistent streams") {
    AuxFeatures bad = tiny_features({100.0f, 200.0f});
    bad.uv[0] = 0.0f;  // voiced f0 but uv says unvoiced
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    AuxFeatures shorter = tiny_features({100.0f, 200.0f});
    shorter.mcep.pop_back();
    REQUIRE_THROWS_AS(shorter.validate(), ConfigError);
}
