#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "qppwg/signal.hpp"

using namespace qppwg;

TEST_CASE("synthetic generation: silence, determinism, pitch accuracy") {
    SUBCASE("zero harmonics and zero noise floor give silence") {
        SyntheticUtteranceSpec spec;
        spec.harmonics = 0;
        spec.noise_floor = 0.0;
        SyntheticUtterance utt = synthesize_utterance(spec, 22050, 110);
        for (float v : utt.audio) REQUIRE(v == 0.0f);
    }
    SUBCASE("same seed gives a byte-identical utterance") {
        SyntheticUtteranceSpec spec;
        spec.noise_floor = 0.05;
        spec.seed = 99;
        SyntheticUtterance a = synthesize_utterance(spec, 22050, 110);
        SyntheticUtterance b = synthesize_utterance(spec, 22050, 110);
        REQUIRE(a.audio == b.audio);
        REQUIRE(a.features.mcep == b.features.mcep);
    }
    SUBCASE("constant 100 Hz single harmonic is tracked within 1%") {
        SyntheticUtteranceSpec spec;
        spec.f0_points = {{0.0, 100.0}};
        spec.harmonics = 1;
        spec.noise_floor = 0.0;
        SyntheticUtterance utt = synthesize_utterance(spec, 22050, 110);
        const auto est = estimate_f0(utt.audio, 22050, 60.0, 400.0);
        int voiced = 0;
        for (size_t i = 4; i + 4 < est.size(); ++i) {  // interior frames
            if (est[i] > 0.0f) {
                REQUIRE(std::abs(est[i] - 100.0f) < 1.0f);
                ++voiced;
            }
        }
        REQUIRE(voiced > 0);
    }
    SUBCASE("feature frames carry the exact contour F0 and all-voiced uv") {
        SyntheticUtteranceSpec spec;
        spec.f0_points = {{0.0, 150.0}, {1.0, 300.0}};
        SyntheticUtterance utt = synthesize_utterance(spec, 22050, 110);
        REQUIRE(utt.features.frame_count() * 110 == static_cast<int>(utt.audio.size()));
        for (float uv : utt.features.uv) REQUIRE(uv == 1.0f);
        REQUIRE(utt.features.f0.front() == doctest::Approx(150.0f).epsilon(1e-3));
    }
}

TEST_CASE("estimate_f0 behavior on canonical inputs") {
    const int fs = 22050;
    SUBCASE("pure 220 Hz sine within 1% on interior frames") {
        std::vector<float> sine(fs);
        for (size_t t = 0; t < sine.size(); ++t)
            sine[t] = 0.5f * static_cast<float>(
                                 std::sin(2.0 * std::numbers::pi * 220.0 * t / fs));
        const auto est = estimate_f0(sine, fs, 60.0, 500.0);
        REQUIRE(est.size() > 20);
        for (size_t i = 4; i + 4 < est.size(); ++i) {
            REQUIRE(est[i] > 0.0f);
            REQUIRE(std::abs(est[i] - 220.0f) <= 2.2f);
        }
    }
    SUBCASE("white noise is at least 90% unvoiced") {
        std::mt19937_64 rng(5);
        std::normal_distribution<float> dist(0.0f, 0.3f);
        std::vector<float> noise(fs);
        for (auto& v : noise) v = dist(rng);
        const auto est = estimate_f0(noise, fs, 60.0, 500.0);
        int unvoiced = 0;
        for (float v : est) unvoiced += v == 0.0f;
        REQUIRE(static_cast<double>(unvoiced) >= 0.9 * static_cast<double>(est.size()));
    }
    SUBCASE("silence is entirely unvoiced") {
        std::vector<float> silence(fs, 0.0f);
        for (float v : estimate_f0(silence, fs, 60.0, 500.0)) REQUIRE(v == 0.0f);
    }
    SUBCASE("invalid ranges are rejected") {
        std::vector<float> x(1000, 0.0f);
        REQUIRE_THROWS_AS(estimate_f0(x, fs, 500.0, 100.0), UsageError);
        REQUIRE_THROWS_AS(estimate_f0(x, fs, 100.0, 20000.0), UsageError);
    }
}

TEST_CASE("log_f0_rmse closed forms") {
    REQUIRE(log_f0_rmse(std::vector<float>{100, 200, 300}, std::vector<float>{100, 200, 300}) ==
            0.0);
    REQUIRE(log_f0_rmse(std::vector<float>{100, 200}, std::vector<float>{200, 400}) ==
            doctest::Approx(std::log(2.0)).epsilon(1e-12));
    REQUIRE(log_f0_rmse(std::vector<float>{100, 200}, std::vector<float>{100, 100}) ==
            doctest::Approx(std::sqrt(std::log(2.0) * std::log(2.0) / 2.0)).epsilon(1e-12));
    SUBCASE("only mutually voiced frames count") {
        REQUIRE(log_f0_rmse(std::vector<float>{100, 0, 300}, std::vector<float>{100, 150, 0}) ==
                0.0);
    }
    SUBCASE("errors") {
        REQUIRE_THROWS_AS(log_f0_rmse(std::vector<float>{100}, std::vector<float>{100, 100}),
                          UsageError);
        REQUIRE_THROWS_AS(log_f0_rmse(std::vector<float>{0, 0}, std::vector<float>{100, 100}),
                          UsageError);
    }
}

TEST_CASE("wav files round trip within quantization error") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<float> dist(-0.9f, 0.9f);
    std::vector<float> samples(4096);
    for (auto& v : samples) v = dist(rng);
    const auto path = std::filesystem::temp_directory_path() / "qppwg_wav_test.wav";
    write_wav(path, samples, 22050);
    int rate = 0;
    const auto back = read_wav(path, &rate);
    REQUIRE(rate == 22050);
    REQUIRE(back.size() == samples.size());
    for (size_t i = 0; i < samples.size(); ++i)
        REQUIRE(std::abs(back[i] - samples[i]) <= 1.0f / 32768.0f + 1e-6f);
    std::filesystem::remove(path);
}

TEST_CASE("wav writer clips out-of-range floats instead of wrapping") {
    const auto path = std::filesystem::temp_directory_path() / "qppwg_wav_clip.wav";
    write_wav(path, std::vector<float>{1.5f, -1.5f, 0.0f}, 22050);
    int rate = 0;
    const auto back = read_wav(path, &rate);
    REQUIRE(back[0] == doctest::Approx(32767.0f / 32768.0f));
    REQUIRE(back[1] == doctest::Approx(-1.0f));
    REQUIRE(back[2] == 0.0f);
    std::filesystem::remove(path);
}

TEST_CASE("gen_synthetic_dataset writes loadable wav + feature triples") {
    const auto dir = std::filesystem::temp_directory_path() / "qppwg_dataset_test";
    std::filesystem::remove_all(dir);
    std::vector<SyntheticUtteranceSpec> specs(2);
    specs[0].f0_points = {{0.0, 120.0}, {0.5, 180.0}};
    specs[0].duration_s = 0.5;
    specs[0].seed = 1;
    specs[1].f0_points = {{0.0, 250.0}};
    specs[1].duration_s = 0.5;
    specs[1].noise_floor = 0.02;
    specs[1].seed = 2;
    gen_synthetic_dataset(specs, dir, 22050, 110);

    for (const char* name : {"utt_000", "utt_001"}) {
        int rate = 0;
        const auto audio = read_wav(dir / (std::string(name) + ".wav"), &rate);
        REQUIRE(rate == 22050);
        FeatureFile ff = read_feature_files(dir / (std::string(name) + ".json"));
        REQUIRE(static_cast<int>(audio.size()) == ff.features.frame_count() * ff.hop);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("spec validation bounds the contour and parameters") {
    SyntheticUtteranceSpec spec;
    spec.f0_points = {{0.0, 30.0}};
    REQUIRE_THROWS_AS(spec.validate(), UsageError);
    spec.f0_points = {{0.0, 700.0}};
    REQUIRE_THROWS_AS(spec.validate(), UsageError);
    spec.f0_points = {{0.0, 100.0}};
    spec.rolloff = 0.0;
    REQUIRE_THROWS_AS(spec.validate(), UsageError);
}
