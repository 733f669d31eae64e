#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qppwg/conditioning.hpp"

// Synthetic harmonic-plus-noise utterances with exactly known F0, an
// autocorrelation pitch tracker, the log-F0 RMSE metric and 16-bit PCM WAV io.

namespace qppwg {

struct SyntheticUtteranceSpec {
    double duration_s = 1.0;
    // Piecewise-linear F0 contour as (time_s, hz) points within [50, 500] Hz.
    std::vector<std::pair<double, double>> f0_points = {{0.0, 200.0}};
    int harmonics = 8;
    double rolloff = 0.8;      // amplitude ratio between consecutive harmonics
    double noise_floor = 0.0;  // stddev of the additive Gaussian component
    uint64_t seed = 0;

    void validate() const;
};

struct SyntheticUtterance {
    std::vector<float> audio;
    AuxFeatures features;
};

// Harmonic stack following the contour plus a noise floor. Feature frames get
// the exact contour F0; mcep/codeap channels carry band-energy summaries.
SyntheticUtterance synthesize_utterance(const SyntheticUtteranceSpec& spec, int sample_rate,
                                        int hop);

// Writes <name>.wav / <name>.json / <name>.bin per spec into out_dir.
void gen_synthetic_dataset(const std::vector<SyntheticUtteranceSpec>& specs,
                           const std::filesystem::path& out_dir, int sample_rate, int hop);

// Normalized-autocorrelation pitch tracker: 25 ms window, 5 ms hop, peak
// threshold 0.3; returns Hz per frame with 0 marking unvoiced frames.
std::vector<float> estimate_f0(std::span<const float> audio, int sample_rate, double fmin,
                               double fmax);

inline constexpr double kVoicingThreshold = 0.3;

// sqrt(mean over mutually voiced frames of (ln ref - ln est)^2); throws
// UsageError when frame counts differ or no frame is voiced in both.
double log_f0_rmse(std::span<const float> reference_f0, std::span<const float> estimated_f0);

struct UtteranceMetrics {
    std::string name;
    double log_f0_rmse = 0.0;
    double spectral_distance = 0.0;  // multi-resolution STFT loss value
    double voiced_coverage = 0.0;    // estimated-voiced fraction of ref-voiced frames
};

struct MetricsReport {
    std::vector<UtteranceMetrics> utterances;
    double mean_log_f0_rmse = 0.0;
    double mean_spectral_distance = 0.0;
};

// 16-bit PCM mono RIFF/WAVE; floats are clipped to [-1, 1) before quantization.
void write_wav(const std::filesystem::path& path, std::span<const float> samples,
               int sample_rate);
std::vector<float> read_wav(const std::filesystem::path& path, int* sample_rate);

}  // namespace qppwg
