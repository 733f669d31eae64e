#include "qppwg/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include "qppwg/kernels.hpp"
#include "qppwg/models.hpp"

namespace qppwg {

void SyntheticUtteranceSpec::validate() const {
    if (duration_s <= 0.0) throw UsageError("synthetic spec: duration must be positive");
    if (f0_points.empty()) throw UsageError("synthetic spec: F0 contour needs at least one point");
    double prev_t = -1.0;
    for (const auto& [t, hz] : f0_points) {
        if (t < prev_t) throw UsageError("synthetic spec: contour times must be non-decreasing");
        if (hz < 50.0 || hz > 500.0)
            throw UsageError("synthetic spec: contour F0 " + std::to_string(hz) +
                             " outside [50, 500] Hz");
        prev_t = t;
    }
    if (harmonics < 0) throw UsageError("synthetic spec: harmonic count must be >= 0");
    if (rolloff <= 0.0 || rolloff > 1.0)
        throw UsageError("synthetic spec: rolloff must be in (0, 1]");
    if (noise_floor < 0.0) throw UsageError("synthetic spec: noise floor must be >= 0");
}

namespace {

double contour_at(const std::vector<std::pair<double, double>>& points, double t) {
    if (t <= points.front().first) return points.front().second;
    if (t >= points.back().first) return points.back().second;
    for (size_t i = 0; i + 1 < points.size(); ++i) {
        const auto [t0, f0] = points[i];
        const auto [t1, f1] = points[i + 1];
        if (t >= t0 && t <= t1)
            return t1 > t0 ? f0 + (f1 - f0) * (t - t0) / (t1 - t0) : f1;
    }
    return points.back().second;
}

// 35 equal-width band log energies plus 2 half-band summaries per frame,
// computed from a 512-point FFT around each frame.
void fill_band_features(std::span<const float> audio, int hop, AuxFeatures& feats) {
    constexpr int kFft = 512;
    const int frames = feats.frame_count();
    feats.mcep.assign(static_cast<size_t>(frames) * kMcepDim, 0.0f);
    feats.codeap.assign(static_cast<size_t>(frames) * kCodeapDim, 0.0f);
    std::vector<std::complex<float>> buf(kFft);
    const int bins = kFft / 2 + 1;
    for (int n = 0; n < frames; ++n) {
        std::fill(buf.begin(), buf.end(), std::complex<float>(0.0f, 0.0f));
        const int64_t start = static_cast<int64_t>(n) * hop;
        for (int i = 0; i < kFft; ++i) {
            const int64_t idx = start + i;
            if (idx < static_cast<int64_t>(audio.size()))
                buf[static_cast<size_t>(i)] = {audio[static_cast<size_t>(idx)], 0.0f};
        }
        kernels::fft_radix2(buf.data(), kFft, -1);
        double band_energy[kMcepDim] = {};
        double low = 0.0, high = 0.0;
        for (int k = 0; k < bins; ++k) {
            const double m = std::norm(buf[static_cast<size_t>(k)]);
            const int band = std::min(kMcepDim - 1, k * kMcepDim / bins);
            band_energy[band] += m;
            (k < bins / 2 ? low : high) += m;
        }
        for (int b = 0; b < kMcepDim; ++b)
            feats.mcep[static_cast<size_t>(n) * kMcepDim + static_cast<size_t>(b)] =
                static_cast<float>(std::log10(band_energy[b] + 1e-10));
        feats.codeap[static_cast<size_t>(n) * kCodeapDim + 0] =
            static_cast<float>(std::log10(low + 1e-10));
        feats.codeap[static_cast<size_t>(n) * kCodeapDim + 1] =
            static_cast<float>(std::log10(high + 1e-10));
    }
}

}  // namespace

SyntheticUtterance synthesize_utterance(const SyntheticUtteranceSpec& spec, int sample_rate,
                                        int hop) {
    spec.validate();
    const int frames = std::max(1, static_cast<int>(spec.duration_s * sample_rate) / hop);
    const int total = frames * hop;

    // Per-sample contour and phase-continuous harmonic stack.
    std::vector<double> f0(static_cast<size_t>(total));
    for (int t = 0; t < total; ++t)
        f0[static_cast<size_t>(t)] =
            contour_at(spec.f0_points, static_cast<double>(t) / sample_rate);

    std::vector<float> audio(static_cast<size_t>(total), 0.0f);
    if (spec.harmonics > 0) {
        // amplitudes normalized so the harmonic stack peaks below 0.7
        double amp_sum = 0.0;
        for (int h = 0; h < spec.harmonics; ++h) amp_sum += std::pow(spec.rolloff, h);
        const double gain = 0.7 / amp_sum;
        double phase = 0.0;
        for (int t = 0; t < total; ++t) {
            const double f = f0[static_cast<size_t>(t)];
            double v = 0.0;
            double amp = gain;
            for (int h = 1; h <= spec.harmonics; ++h) {
                if (h * f < 0.45 * sample_rate) v += amp * std::sin(h * phase);
                amp *= spec.rolloff;
            }
            audio[static_cast<size_t>(t)] = static_cast<float>(v);
            phase += 2.0 * std::numbers::pi * f / sample_rate;
        }
    }
    if (spec.noise_floor > 0.0) {
        std::mt19937_64 rng(spec.seed);
        for (int t = 0; t < total; ++t)
            audio[static_cast<size_t>(t)] +=
                static_cast<float>(spec.noise_floor * detail::gaussian_double(rng));
    }

    SyntheticUtterance out;
    out.audio = std::move(audio);
    out.features.f0.resize(static_cast<size_t>(frames));
    out.features.uv.assign(static_cast<size_t>(frames), 1.0f);
    for (int n = 0; n < frames; ++n)
        out.features.f0[static_cast<size_t>(n)] =
            static_cast<float>(f0[static_cast<size_t>(n) * hop]);
    fill_band_features(out.audio, hop, out.features);
    out.features.validate();
    return out;
}

void gen_synthetic_dataset(const std::vector<SyntheticUtteranceSpec>& specs,
                           const std::filesystem::path& out_dir, int sample_rate, int hop) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw UsageError("cannot create directory " + out_dir.string() + ": " + ec.message());
    int index = 0;
    for (const auto& spec : specs) {
        const SyntheticUtterance utt = synthesize_utterance(spec, sample_rate, hop);
        char name[32];
        std::snprintf(name, sizeof(name), "utt_%03d", index++);
        write_wav(out_dir / (std::string(name) + ".wav"), utt.audio, sample_rate);
        write_feature_files(out_dir / name, utt.features, sample_rate, hop);
    }
}

std::vector<float> estimate_f0(std::span<const float> audio, int sample_rate, double fmin,
                               double fmax) {
    if (!(fmin > 0.0) || !(fmax > fmin) || fmax >= 0.5 * sample_rate)
        throw UsageError("estimate_f0: need 0 < fmin < fmax < Nyquist");
    const int win = static_cast<int>(std::lround(0.025 * sample_rate));
    const int hop = static_cast<int>(std::lround(0.005 * sample_rate));
    const int lag_min = std::max(1, static_cast<int>(sample_rate / fmax));
    const int lag_max = std::min(win - 1, static_cast<int>(sample_rate / fmin) + 1);
    const int total = static_cast<int>(audio.size());
    const int frames = total >= win ? (total - win) / hop + 1 : 0;

    std::vector<float> f0(static_cast<size_t>(frames), 0.0f);
#pragma omp parallel for schedule(static)
    for (int n = 0; n < frames; ++n) {
        const float* seg = audio.data() + static_cast<int64_t>(n) * hop;
        double energy0 = 0.0;
        for (int i = 0; i < win; ++i) energy0 += static_cast<double>(seg[i]) * seg[i];
        if (energy0 < 1e-10) continue;  // silence

        // normalized autocorrelation over the candidate lag range
        double best_r = 0.0;
        int best_lag = 0;
        std::vector<double> corr(static_cast<size_t>(lag_max + 1), 0.0);
        for (int lag = lag_min; lag <= lag_max; ++lag) {
            double cross = 0.0, energy_lag = 0.0;
            const int m = win - lag;
            for (int i = 0; i < m; ++i) {
                cross += static_cast<double>(seg[i]) * seg[i + lag];
                energy_lag += static_cast<double>(seg[i + lag]) * seg[i + lag];
            }
            double energy_head = 0.0;
            for (int i = 0; i < m; ++i) energy_head += static_cast<double>(seg[i]) * seg[i];
            const double denom = std::sqrt(energy_head * energy_lag);
            const double r = denom > 1e-12 ? cross / denom : 0.0;
            corr[static_cast<size_t>(lag)] = r;
            if (r > best_r) {
                best_r = r;
                best_lag = lag;
            }
        }
        if (best_r < kVoicingThreshold || best_lag == 0) continue;

        // parabolic refinement around the peak
        double lag_refined = best_lag;
        if (best_lag > lag_min && best_lag < lag_max) {
            const double rl = corr[static_cast<size_t>(best_lag - 1)];
            const double rc = corr[static_cast<size_t>(best_lag)];
            const double rr = corr[static_cast<size_t>(best_lag + 1)];
            const double denom = rl - 2.0 * rc + rr;
            if (std::abs(denom) > 1e-12) {
                const double delta = 0.5 * (rl - rr) / denom;
                if (std::abs(delta) < 1.0) lag_refined = best_lag + delta;
            }
        }
        f0[static_cast<size_t>(n)] = static_cast<float>(sample_rate / lag_refined);
    }
    return f0;
}

double log_f0_rmse(std::span<const float> reference_f0, std::span<const float> estimated_f0) {
    if (reference_f0.size() != estimated_f0.size())
        throw UsageError("log_f0_rmse: frame counts differ (" +
                         std::to_string(reference_f0.size()) + " vs " +
                         std::to_string(estimated_f0.size()) + ")");
    double acc = 0.0;
    int64_t voiced = 0;
    for (size_t i = 0; i < reference_f0.size(); ++i) {
        if (reference_f0[i] > 0.0f && estimated_f0[i] > 0.0f) {
            const double d = std::log(static_cast<double>(reference_f0[i])) -
                             std::log(static_cast<double>(estimated_f0[i]));
            acc += d * d;
            ++voiced;
        }
    }
    if (voiced == 0) throw UsageError("log_f0_rmse: no mutually voiced frame");
    return std::sqrt(acc / static_cast<double>(voiced));
}

// ---- wav ----

namespace {

void put_u32(std::ofstream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}
void put_u16(std::ofstream& os, uint16_t v) {
    os.write(reinterpret_cast<const char*>(&v), 2);
}

}  // namespace

void write_wav(const std::filesystem::path& path, std::span<const float> samples,
               int sample_rate) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw UsageError("cannot write " + path.string());
    const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
    os.write("RIFF", 4);
    put_u32(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    put_u32(os, 16);
    put_u16(os, 1);  // PCM
    put_u16(os, 1);  // mono
    put_u32(os, static_cast<uint32_t>(sample_rate));
    put_u32(os, static_cast<uint32_t>(sample_rate * 2));
    put_u16(os, 2);   // block align
    put_u16(os, 16);  // bits per sample
    os.write("data", 4);
    put_u32(os, data_bytes);
    for (float v : samples) {
        const float clipped = std::clamp(v, -1.0f, 32767.0f / 32768.0f);
        const int16_t q = static_cast<int16_t>(std::lround(clipped * 32768.0f));
        os.write(reinterpret_cast<const char*>(&q), 2);
    }
    if (!os) throw UsageError("short write to " + path.string());
}

std::vector<float> read_wav(const std::filesystem::path& path, int* sample_rate) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw UsageError("cannot read " + path.string());
    char tag[4];
    uint32_t size32 = 0;
    auto read_tag = [&](const char* expect) {
        is.read(tag, 4);
        if (is.gcount() != 4 || std::memcmp(tag, expect, 4) != 0)
            throw UsageError(path.string() + ": expected '" + expect + "' chunk");
    };
    read_tag("RIFF");
    is.read(reinterpret_cast<char*>(&size32), 4);
    read_tag("WAVE");

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    bool have_fmt = false;
    std::vector<float> samples;
    while (is.read(tag, 4)) {
        is.read(reinterpret_cast<char*>(&size32), 4);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            std::vector<char> fmt(size32);
            is.read(fmt.data(), size32);
            std::memcpy(&format, fmt.data() + 0, 2);
            std::memcpy(&channels, fmt.data() + 2, 2);
            std::memcpy(&rate, fmt.data() + 4, 4);
            std::memcpy(&bits, fmt.data() + 14, 2);
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!have_fmt || format != 1 || channels != 1 || bits != 16)
                throw UsageError(path.string() + ": only 16-bit PCM mono is supported");
            const size_t count = size32 / 2;
            samples.resize(count);
            std::vector<int16_t> raw(count);
            is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(size32));
            if (is.gcount() != static_cast<std::streamsize>(size32))
                throw UsageError(path.string() + ": truncated data chunk");
            for (size_t i = 0; i < count; ++i)
                samples[i] = static_cast<float>(raw[i]) / 32768.0f;
            if (sample_rate) *sample_rate = static_cast<int>(rate);
            return samples;
        } else {
            is.seekg(size32 + (size32 & 1), std::ios::cur);
        }
    }
    throw UsageError(path.string() + ": no data chunk found");
}

}  // namespace qppwg
