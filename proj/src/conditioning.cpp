#include "qppwg/conditioning.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "feature and checkpoint blobs are written as native little-endian");

namespace qppwg {

void AuxFeatures::validate() const {
    const size_t n = f0.size();
    if (uv.size() != n || mcep.size() != n * kMcepDim || codeap.size() != n * kCodeapDim)
        throw ConfigError("aux features: stream lengths disagree (frames " + std::to_string(n) +
                          ", uv " + std::to_string(uv.size()) + ", mcep " +
                          std::to_string(mcep.size()) + ", codeap " +
                          std::to_string(codeap.size()) + ")");
    for (size_t i = 0; i < n; ++i) {
        if (f0[i] < 0.0f) throw ConfigError("aux features: negative F0 at frame " + std::to_string(i));
        if (uv[i] != 0.0f && uv[i] != 1.0f)
            throw ConfigError("aux features: uv not in {0,1} at frame " + std::to_string(i));
        if ((f0[i] == 0.0f) != (uv[i] == 0.0f))
            throw ConfigError("aux features: uv/f0 voicing disagreement at frame " +
                              std::to_string(i));
    }
}

ContinuousF0 interpolate_f0(std::span<const float> raw_f0) {
    const int n = static_cast<int>(raw_f0.size());
    std::vector<int> voiced;
    for (int i = 0; i < n; ++i)
        if (raw_f0[static_cast<size_t>(i)] > 0.0f) voiced.push_back(i);
    if (voiced.empty())
        throw ConfigError("interpolate_f0: all frames unvoiced, no anchor value exists");

    ContinuousF0 out;
    out.hz.resize(static_cast<size_t>(n));
    for (int i = 0; i < voiced.front(); ++i)
        out.hz[static_cast<size_t>(i)] = raw_f0[static_cast<size_t>(voiced.front())];
    for (int i = voiced.back(); i < n; ++i)
        out.hz[static_cast<size_t>(i)] = raw_f0[static_cast<size_t>(voiced.back())];
    for (size_t v = 0; v + 1 < voiced.size(); ++v) {
        const int a = voiced[v], b = voiced[v + 1];
        const double fa = raw_f0[static_cast<size_t>(a)], fb = raw_f0[static_cast<size_t>(b)];
        for (int i = a; i < b; ++i)
            out.hz[static_cast<size_t>(i)] =
                fa + (fb - fa) * static_cast<double>(i - a) / static_cast<double>(b - a);
    }
    out.hz[static_cast<size_t>(voiced.back())] = raw_f0[static_cast<size_t>(voiced.back())];
    return out;
}

ContinuousF0 scale_f0(const ContinuousF0& f0, double ratio) {
    if (!(ratio > 0.0)) throw UsageError("scale_f0: ratio must be positive");
    ContinuousF0 out;
    out.hz.reserve(f0.hz.size());
    for (double v : f0.hz) out.hz.push_back(v * ratio);
    return out;
}

std::vector<double> repeat_to_samples(std::span<const double> frame_values, int hop) {
    if (hop < 1) throw ConfigError("repeat_to_samples: hop must be >= 1");
    std::vector<double> out(frame_values.size() * static_cast<size_t>(hop));
    for (size_t n = 0; n < frame_values.size(); ++n)
        for (int r = 0; r < hop; ++r) out[n * static_cast<size_t>(hop) + static_cast<size_t>(r)] = frame_values[n];
    return out;
}

std::vector<double> dilation_factors(std::span<const double> f0_per_sample, double sample_rate,
                                     double dense_factor) {
    if (!(dense_factor > 0.0)) throw ConfigError("dilation_factors: dense factor must be positive");
    std::vector<double> e_t(f0_per_sample.size());
    for (size_t t = 0; t < f0_per_sample.size(); ++t) {
        if (!(f0_per_sample[t] > 0.0))
            throw NumericError("dilation_factors: non-positive F0 after interpolation at sample " +
                               std::to_string(t));
        e_t[t] = sample_rate / (f0_per_sample[t] * dense_factor);
    }
    return e_t;
}

int32_t round_dilation(double e_t, int base_dilation) {
    const double d = std::round(e_t * base_dilation);
    return d < 1.0 ? 1 : static_cast<int32_t>(d);
}

DilationSchedule make_dilation_schedule(std::vector<double> e_t,
                                        std::span<const int> adaptive_base_dilations) {
    DilationSchedule sched;
    sched.d_prime.resize(adaptive_base_dilations.size());
    for (size_t l = 0; l < adaptive_base_dilations.size(); ++l) {
        auto& row = sched.d_prime[l];
        row.resize(e_t.size());
        const int d = adaptive_base_dilations[l];
        for (size_t t = 0; t < e_t.size(); ++t) row[t] = round_dilation(e_t[t], d);
    }
    sched.e_t = std::move(e_t);
    return sched;
}

NormStats compute_norm_stats(const std::vector<const AuxFeatures*>& feats,
                             const std::vector<const ContinuousF0*>& cf0s) {
    if (feats.empty() || feats.size() != cf0s.size())
        throw ConfigError("compute_norm_stats: feature/F0 list mismatch or empty");
    std::vector<double> sum(kAuxChannels, 0.0), sumsq(kAuxChannels, 0.0);
    int64_t frames = 0;
    for (size_t u = 0; u < feats.size(); ++u) {
        const AuxFeatures& f = *feats[u];
        f.validate();
        const int n = f.frame_count();
        if (static_cast<int>(cf0s[u]->hz.size()) != n)
            throw ConfigError("compute_norm_stats: continuous F0 length mismatch");
        for (int i = 0; i < n; ++i) {
            auto acc = [&](int c, double v) {
                sum[static_cast<size_t>(c)] += v;
                sumsq[static_cast<size_t>(c)] += v * v;
            };
            acc(0, cf0s[u]->hz[static_cast<size_t>(i)]);
            acc(1, f.uv[static_cast<size_t>(i)]);
            for (int k = 0; k < kMcepDim; ++k)
                acc(2 + k, f.mcep[static_cast<size_t>(i) * kMcepDim + static_cast<size_t>(k)]);
            for (int k = 0; k < kCodeapDim; ++k)
                acc(2 + kMcepDim + k,
                    f.codeap[static_cast<size_t>(i) * kCodeapDim + static_cast<size_t>(k)]);
        }
        frames += n;
    }
    NormStats stats;
    stats.mean.resize(kAuxChannels);
    stats.stdev.resize(kAuxChannels);
    for (int c = 0; c < kAuxChannels; ++c) {
        const double m = sum[static_cast<size_t>(c)] / static_cast<double>(frames);
        const double var =
            std::max(0.0, sumsq[static_cast<size_t>(c)] / static_cast<double>(frames) - m * m);
        double sd = std::sqrt(var);
        if (sd < 1e-6) sd = 1.0;  // constant channel (e.g., all-voiced uv) maps to zero
        stats.mean[static_cast<size_t>(c)] = static_cast<float>(m);
        stats.stdev[static_cast<size_t>(c)] = static_cast<float>(sd);
    }
    return stats;
}

namespace {

void write_f32(std::ofstream& os, std::span<const float> data) {
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(float)));
}

}  // namespace

void write_feature_files(const std::filesystem::path& base_path, const AuxFeatures& feats,
                         int sample_rate, int hop) {
    feats.validate();
    const std::filesystem::path json_path = base_path.string() + ".json";
    const std::filesystem::path bin_path = base_path.string() + ".bin";

    nlohmann::json manifest = {
        {"sample_rate", sample_rate},
        {"hop_samples", hop},
        {"frame_count", feats.frame_count()},
        {"channels",
         {{{"name", "f0"}, {"dim", 1}},
          {{"name", "uv"}, {"dim", 1}},
          {{"name", "mcep"}, {"dim", kMcepDim}},
          {{"name", "codeap"}, {"dim", kCodeapDim}}}},
        {"data_file", bin_path.filename().string()},
    };
    std::ofstream js(json_path);
    if (!js) throw UsageError("cannot write " + json_path.string());
    js << manifest.dump(2) << "\n";

    std::ofstream bs(bin_path, std::ios::binary);
    if (!bs) throw UsageError("cannot write " + bin_path.string());
    write_f32(bs, feats.f0);
    write_f32(bs, feats.uv);
    write_f32(bs, feats.mcep);
    write_f32(bs, feats.codeap);
    if (!bs) throw UsageError("short write to " + bin_path.string());
}

FeatureFile read_feature_files(const std::filesystem::path& json_path) {
    std::ifstream js(json_path);
    if (!js) throw UsageError("cannot read " + json_path.string());
    nlohmann::json manifest;
    js >> manifest;

    FeatureFile out;
    out.sample_rate = manifest.at("sample_rate").get<int>();
    out.hop = manifest.at("hop_samples").get<int>();
    const int frames = manifest.at("frame_count").get<int>();

    const auto& channels = manifest.at("channels");
    const nlohmann::json expected = {{{"name", "f0"}, {"dim", 1}},
                                     {{"name", "uv"}, {"dim", 1}},
                                     {{"name", "mcep"}, {"dim", kMcepDim}},
                                     {{"name", "codeap"}, {"dim", kCodeapDim}}};
    if (channels != expected)
        throw UsageError("unsupported channel layout in " + json_path.string());

    const std::filesystem::path bin_path =
        json_path.parent_path() / manifest.at("data_file").get<std::string>();
    std::ifstream bs(bin_path, std::ios::binary);
    if (!bs) throw UsageError("cannot read " + bin_path.string());

    auto read_stream = [&](std::vector<float>& dst, size_t count) {
        dst.resize(count);
        bs.read(reinterpret_cast<char*>(dst.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (bs.gcount() != static_cast<std::streamsize>(count * sizeof(float)))
            throw UsageError("truncated feature data in " + bin_path.string());
    };
    const size_t n = static_cast<size_t>(frames);
    read_stream(out.features.f0, n);
    read_stream(out.features.uv, n);
    read_stream(out.features.mcep, n * kMcepDim);
    read_stream(out.features.codeap, n * kCodeapDim);
    out.features.validate();
    return out;
}

}  // namespace qppwg
