#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qppwg/errors.hpp"
#include "qppwg/tensor.hpp"

// Frame-rate acoustic features -> sample-rate conditioning tensors and
// per-sample dilation schedules (E_t = Fs / (F0_t * a), d' = round(E_t * d)).

namespace qppwg {

inline constexpr int kMcepDim = 35;
inline constexpr int kCodeapDim = 2;
inline constexpr int kAuxChannels = 2 + kMcepDim + kCodeapDim;  // contF0, uv, mcep, codeap
inline constexpr int kDefaultSampleRate = 22050;
inline constexpr int kDefaultHop = 110;  // ~5 ms at 22.05 kHz; 25520 = 110 * 232
inline constexpr double kDefaultDenseFactor = 4.0;

struct AuxFeatures {
    std::vector<float> f0;      // raw Hz per frame, 0 = unvoiced
    std::vector<float> uv;      // {0,1} per frame
    std::vector<float> mcep;    // frame-major, frame_count * 35
    std::vector<float> codeap;  // frame-major, frame_count * 2

    int frame_count() const { return static_cast<int>(f0.size()); }
    void validate() const;
};

struct ContinuousF0 {
    std::vector<double> hz;  // strictly positive per frame
};

struct DilationSchedule {
    std::vector<double> e_t;                    // dilated factor per sample
    std::vector<std::vector<int32_t>> d_prime;  // [adaptive layer][sample]
};

// Linear interpolation across unvoiced gaps; leading/trailing unvoiced frames
// hold the nearest voiced value. Throws ConfigError when no frame is voiced.
ContinuousF0 interpolate_f0(std::span<const float> raw_f0);

ContinuousF0 scale_f0(const ContinuousF0& f0, double ratio);

// Frame values repeated hop times each.
std::vector<double> repeat_to_samples(std::span<const double> frame_values, int hop);

// e_t = sample_rate / (f0_t * dense_factor), elementwise over samples.
std::vector<double> dilation_factors(std::span<const double> f0_per_sample, double sample_rate,
                                     double dense_factor);

// max(1, round-half-away-from-zero(e_t * d))
int32_t round_dilation(double e_t, int base_dilation);

DilationSchedule make_dilation_schedule(std::vector<double> e_t,
                                        std::span<const int> adaptive_base_dilations);

// [1, 39, frames*hop] conditioning tensor, channel order
// [contF0, uv, mcep(35), codeap(2)], each frame repeated hop times.
template <typename S>
Tensor<S> upsample_to_samples(const AuxFeatures& feats, const ContinuousF0& cf0, int hop) {
    feats.validate();
    if (hop < 1) throw ConfigError("upsample_to_samples: hop must be >= 1");
    const int frames = feats.frame_count();
    if (static_cast<int>(cf0.hz.size()) != frames)
        throw ConfigError("upsample_to_samples: continuous F0 length " +
                          std::to_string(cf0.hz.size()) + " != frame count " +
                          std::to_string(frames));
    const int time = frames * hop;
    Tensor<S> out = Tensor<S>::zeros({1, kAuxChannels, time});
    S* data = out.values_mut().data();
    auto put = [&](int channel, int frame, double v) {
        S* row = data + static_cast<int64_t>(channel) * time + static_cast<int64_t>(frame) * hop;
        for (int r = 0; r < hop; ++r) row[r] = static_cast<S>(v);
    };
    for (int n = 0; n < frames; ++n) {
        put(0, n, cf0.hz[static_cast<size_t>(n)]);
        put(1, n, feats.uv[static_cast<size_t>(n)]);
        for (int k = 0; k < kMcepDim; ++k)
            put(2 + k, n, feats.mcep[static_cast<size_t>(n) * kMcepDim + static_cast<size_t>(k)]);
        for (int k = 0; k < kCodeapDim; ++k)
            put(2 + kMcepDim + k, n,
                feats.codeap[static_cast<size_t>(n) * kCodeapDim + static_cast<size_t>(k)]);
    }
    return out;
}

// Per-channel normalization statistics over a training set.
struct NormStats {
    std::vector<float> mean;   // kAuxChannels
    std::vector<float> stdev;  // kAuxChannels, floored so constant channels map to 0
};

NormStats compute_norm_stats(const std::vector<const AuxFeatures*>& feats,
                             const std::vector<const ContinuousF0*>& cf0s);

template <typename S>
void normalize_aux(Tensor<S>& aux, const NormStats& stats) {
    if (aux.shape().size() != 3 || aux.shape()[1] != kAuxChannels)
        throw ConfigError("normalize_aux: expected [B,39,T] tensor, got " +
                          detail::shape_str(aux.shape()));
    const int batch = aux.shape()[0], time = aux.shape()[2];
    S* data = aux.values_mut().data();
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < kAuxChannels; ++c) {
            const S m = static_cast<S>(stats.mean[static_cast<size_t>(c)]);
            const S inv = S(1) / static_cast<S>(stats.stdev[static_cast<size_t>(c)]);
            S* row = data + (static_cast<int64_t>(b) * kAuxChannels + c) * time;
            for (int t = 0; t < time; ++t) row[t] = (row[t] - m) * inv;
        }
}

// Feature files: <base>.json manifest + <base>.bin with raw little-endian
// 32-bit float streams in manifest order (f0, uv, mcep, codeap).
struct FeatureFile {
    AuxFeatures features;
    int sample_rate = kDefaultSampleRate;
    int hop = kDefaultHop;
};

void write_feature_files(const std::filesystem::path& base_path, const AuxFeatures& feats,
                         int sample_rate, int hop);
FeatureFile read_feature_files(const std::filesystem::path& json_path);

}  // namespace qppwg
