// qppwg: desk-scale QPPWG/PWG vocoder tool.
// Commands: gen-data, train, synth, analyze, metrics, bench.
// Exit codes: 0 success, 1 usage error, 2 config/invariant violation,
// 3 numerical failure.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qppwg/losses.hpp"
#include "qppwg/models.hpp"
#include "qppwg/signal.hpp"
#include "qppwg/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qppwg;

namespace {

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream is(path);
    if (!is) throw UsageError("cannot read config file " + path);
    json cfg;
    try {
        is >> cfg;
    } catch (const json::exception& e) {
        throw UsageError("config file " + path + ": " + e.what());
    }
    return cfg;
}

GeneratorConfig generator_from_config(const json& cfg, const std::string& flag_preset) {
    if (!flag_preset.empty()) return generator_preset(flag_preset);
    if (cfg.contains("generator")) {
        const json& g = cfg.at("generator");
        if (g.is_string()) return generator_preset(g.get<std::string>());
        return generator_config_from_json(g.dump());
    }
    return generator_preset("desk");
}

DiscriminatorConfig discriminator_from_config(const json& cfg, const std::string& flag_preset) {
    if (!flag_preset.empty()) return discriminator_preset(flag_preset);
    if (cfg.contains("discriminator")) {
        const json& d = cfg.at("discriminator");
        if (d.is_string()) return discriminator_preset(d.get<std::string>());
        DiscriminatorConfig out;
        out.layers = d.value("layers", out.layers);
        out.channels = d.value("channels", out.channels);
        out.kernel_size = d.value("kernel_size", out.kernel_size);
        out.leaky_slope = d.value("leaky_slope", out.leaky_slope);
        out.validate();
        return out;
    }
    return discriminator_preset("desk");
}

TrainConfig train_from_config(const json& cfg) {
    TrainConfig out = TrainConfig::desk();
    if (!cfg.contains("train")) return out;
    const json& t = cfg.at("train");
    out.total_steps = t.value("total_steps", out.total_steps);
    out.warmup_steps = t.value("warmup_steps", out.warmup_steps);
    out.lr_g = t.value("lr_g", out.lr_g);
    out.lr_d = t.value("lr_d", out.lr_d);
    out.lr_decay_steps = t.value("lr_decay_steps", out.lr_decay_steps);
    out.lr_decay = t.value("lr_decay", out.lr_decay);
    out.batch_size = t.value("batch_size", out.batch_size);
    out.batch_length = t.value("batch_length", out.batch_length);
    out.gan.lambda_adv = t.value("lambda_adv", out.gan.lambda_adv);
    out.beta1 = t.value("beta1", out.beta1);
    out.beta2 = t.value("beta2", out.beta2);
    out.epsilon = t.value("epsilon", out.epsilon);
    out.checkpoint_every = t.value("checkpoint_every", out.checkpoint_every);
    if (t.contains("stft_resolutions")) {
        out.stft.resolutions.clear();
        for (const auto& r : t.at("stft_resolutions"))
            out.stft.resolutions.push_back(
                {r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>()});
    }
    return out;
}

std::vector<fs::path> feature_manifests(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) throw UsageError(dir.string() + " is not a directory");
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".json") out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    return out;
}

struct LoadedModel {
    CheckpointMeta meta;
    Generator<float> generator;
};

LoadedModel load_generator(const fs::path& ckpt_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    LoadedModel m{ckpt.meta, Generator<float>(ckpt.meta.generator, 0)};
    restore_parameters(m.generator.parameters(), ckpt);
    return m;
}

// Conditioning inputs for one utterance at a given F0 ratio.
struct SynthInputs {
    Tensor<float> aux;
    DilationSchedule schedule;
    int time = 0;
};

SynthInputs prepare_inputs(const FeatureFile& ff, const CheckpointMeta& meta, double f0_ratio) {
    if (ff.hop != meta.hop || ff.sample_rate != meta.sample_rate)
        throw UsageError("feature grid (rate " + std::to_string(ff.sample_rate) + ", hop " +
                         std::to_string(ff.hop) + ") does not match checkpoint (rate " +
                         std::to_string(meta.sample_rate) + ", hop " + std::to_string(meta.hop) +
                         ")");
    SynthInputs in;
    // F0 scaled before both the conditioning channel and the schedule
    ContinuousF0 cf0 = scale_f0(interpolate_f0(ff.features.f0), f0_ratio);
    in.aux = upsample_to_samples<float>(ff.features, cf0, ff.hop);
    normalize_aux(in.aux, meta.norm);
    in.schedule = make_dilation_schedule(
        dilation_factors(repeat_to_samples(cf0.hz, ff.hop), meta.sample_rate, meta.dense_factor),
        meta.generator.adaptive_base_dilations());
    in.time = in.aux.shape()[2];
    return in;
}

Tensor<float> gaussian_noise(int time, std::mt19937_64& rng) {
    std::vector<float> z(static_cast<size_t>(time));
    for (auto& v : z) v = static_cast<float>(detail::gaussian_double(rng));
    return Tensor<float>::from_data({1, 1, time}, std::move(z));
}

void write_spectrogram_csv(const fs::path& path, const Tensor<float>& mag) {
    std::ofstream os(path);
    if (!os) throw UsageError("cannot write " + path.string());
    const int bins = mag.shape()[1], frames = mag.shape()[2];
    for (int k = 0; k < bins; ++k) {
        for (int j = 0; j < frames; ++j) {
            if (j) os << ",";
            char buf[32];
            std::snprintf(
                buf, sizeof(buf), "%.6g",
                static_cast<double>(
                    mag.values()[static_cast<size_t>(k) * frames + static_cast<size_t>(j)]));
            os << buf;
        }
        os << "\n";
    }
}

// ---- commands ----

int cmd_gen_data(const json& cfg, const std::string& out_dir, int count, double duration,
                 int harmonics, double rolloff, double noise_floor, uint64_t seed) {
    std::vector<SyntheticUtteranceSpec> specs;
    if (cfg.contains("gen_data") && cfg.at("gen_data").contains("utterances")) {
        for (const auto& u : cfg.at("gen_data").at("utterances")) {
            SyntheticUtteranceSpec spec;
            spec.duration_s = u.value("duration_s", 1.0);
            spec.harmonics = u.value("harmonics", 8);
            spec.rolloff = u.value("rolloff", 0.8);
            spec.noise_floor = u.value("noise_floor", 0.02);
            spec.seed = u.value("seed", 0);
            spec.f0_points.clear();
            for (const auto& pt : u.at("f0_points"))
                spec.f0_points.emplace_back(pt.at(0).get<double>(), pt.at(1).get<double>());
            specs.push_back(std::move(spec));
        }
    } else {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> hz(80.0, 400.0);
        for (int i = 0; i < count; ++i) {
            SyntheticUtteranceSpec spec;
            spec.duration_s = duration;
            spec.harmonics = harmonics;
            spec.rolloff = rolloff;
            spec.noise_floor = noise_floor;
            spec.seed = seed + static_cast<uint64_t>(i) + 1;
            const double a = hz(rng), b = hz(rng);
            spec.f0_points = {{0.0, a}, {duration * 0.5, b}, {duration, hz(rng)}};
            specs.push_back(std::move(spec));
        }
    }
    gen_synthetic_dataset(specs, out_dir, kDefaultSampleRate, kDefaultHop);
    std::cout << "wrote " << specs.size() << " utterances to " << out_dir << "\n";
    return 0;
}

int cmd_train(const json& cfg, const std::string& data_dir, const std::string& out_dir,
              const std::string& gen_preset, const std::string& d_preset,
              const std::string& resume_path, std::optional<int> steps, std::optional<int> warmup,
              std::optional<int> batch_size, std::optional<int> batch_length, uint64_t seed,
              int log_every) {
    TrainConfig tcfg = train_from_config(cfg);
    if (steps) tcfg.total_steps = *steps;
    if (warmup) tcfg.warmup_steps = *warmup;
    if (batch_size) tcfg.batch_size = *batch_size;
    if (batch_length) tcfg.batch_length = *batch_length;

    Dataset dataset = Dataset::load(data_dir);
    std::optional<Trainer> trainer;
    if (!resume_path.empty()) {
        trainer.emplace(Trainer::resume(resume_path, std::move(dataset), tcfg));
    } else {
        trainer.emplace(generator_from_config(cfg, gen_preset),
                        discriminator_from_config(cfg, d_preset), tcfg, std::move(dataset), seed);
    }

    std::cout << "training: " << trainer->generator().parameter_count() << " generator params, "
              << trainer->discriminator().parameter_count() << " discriminator params, "
              << tcfg.total_steps << " steps (" << tcfg.warmup_steps << " warmup)\n";
    const fs::path out(out_dir);
    fs::create_directories(out);
    const fs::path log_path = out / "loss_log.csv";
    const bool fresh = trainer->current_step() == 0 || !fs::exists(log_path);
    std::ofstream log(log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw UsageError("cannot write " + log_path.string());
    if (fresh) log << step_record_csv_header() << "\n";
    while (trainer->current_step() < tcfg.total_steps) {
        const StepRecord rec = trainer->step();
        log << step_record_csv_line(rec) << "\n";
        if (tcfg.checkpoint_every > 0 && rec.step % tcfg.checkpoint_every == 0)
            trainer->save(out / ("step_" + std::to_string(rec.step) + ".ckpt"));
        if (log_every > 0 && rec.step % log_every == 0)
            std::cout << "step " << rec.step << "  l_sp " << rec.l_sp << "  l_adv " << rec.l_adv
                      << "  l_d " << rec.l_d << "\n";
    }
    log.flush();
    trainer->save(out / "last.ckpt");
    std::cout << "checkpoint: " << (out / "last.ckpt").string() << "\n";
    return 0;
}

int cmd_synth(const std::string& ckpt_path, const std::string& data_dir,
              std::vector<std::string> feature_files, const std::string& out_dir, double f0_ratio,
              uint64_t seed) {
    if (!(f0_ratio > 0.0)) throw UsageError("--f0-ratio must be positive");
    LoadedModel model = load_generator(ckpt_path);
    if (!data_dir.empty())
        for (const auto& p : feature_manifests(data_dir)) feature_files.push_back(p.string());
    if (feature_files.empty())
        throw UsageError("no feature files given (use --features or --data)");
    fs::create_directories(out_dir);

    std::mt19937_64 rng(seed);
    for (const auto& file : feature_files) {
        const FeatureFile ff = read_feature_files(file);
        const SynthInputs in = prepare_inputs(ff, model.meta, f0_ratio);
        Tensor<float> z = gaussian_noise(in.time, rng);
        NoGradGuard no_grad;
        Tensor<float> wav = model.generator.forward(z, in.aux, in.schedule);
        const fs::path out = fs::path(out_dir) / (fs::path(file).stem().string() + ".wav");
        write_wav(out, wav.values(), model.meta.sample_rate);
        std::cout << out.string() << "  (" << in.time << " samples, F0 ratio " << f0_ratio
                  << ")\n";
    }
    return 0;
}

int cmd_analyze(const json& cfg, const std::string& preset, const std::string& ckpt_path,
                double f0, const std::string& features_path, const std::string& cumulative_dir,
                uint64_t seed) {
    GeneratorConfig gcfg;
    double dense = kDefaultDenseFactor;
    int sample_rate = kDefaultSampleRate;
    std::optional<LoadedModel> model;
    std::string name;
    if (!ckpt_path.empty()) {
        model.emplace(load_generator(ckpt_path));
        gcfg = model->meta.generator;
        dense = model->meta.dense_factor;
        sample_rate = model->meta.sample_rate;
        name = fs::path(ckpt_path).filename().string();
    } else if (!preset.empty()) {
        gcfg = generator_preset(preset);
        name = preset;
    } else {
        gcfg = generator_from_config(cfg, "");
        name = "config";
    }
    if (!(f0 > 0.0)) throw UsageError("--f0 must be positive");
    const double e_t = sample_rate / (f0 * dense);

    std::cout << "model: " << name << "\n";
    std::cout << "generator parameters: " << generator_parameter_count(gcfg) << "\n";
    std::cout << "F0 " << f0 << " Hz, dense factor " << dense << " -> E_t = " << e_t << "\n";
    for (size_t i = 0; i < gcfg.macroblocks.size(); ++i) {
        const auto& mb = gcfg.macroblocks[i];
        std::cout << "macroblock " << i << " ("
                  << (mb.kind == BlockKind::adaptive ? "B_A" : "B_F") << mb.blocks << "C"
                  << mb.cycles << "): receptive field " << macroblock_receptive_field(mb, e_t)
                  << " samples\n";
    }
    std::cout << "total receptive field: " << receptive_field(gcfg, e_t) << " samples\n";

    if (!cumulative_dir.empty()) {
        if (!model || features_path.empty())
            throw UsageError("cumulative spectra need --checkpoint and --features");
        const FeatureFile ff = read_feature_files(features_path);
        const SynthInputs in = prepare_inputs(ff, model->meta, 1.0);
        std::mt19937_64 rng(seed);
        Tensor<float> z = gaussian_noise(in.time, rng);
        fs::create_directories(cumulative_dir);
        const StftResolution res{1024, 120, 600};  // first analysis triple
        NoGradGuard no_grad;
        for (int k = 1; k <= gcfg.total_blocks(); ++k) {
            Tensor<float> out = model->generator.cumulative_forward(k, z, in.aux, in.schedule);
            Tensor<float> mag = stft_magnitude(reshape(out, {1, in.time}), res);
            char file[32];
            std::snprintf(file, sizeof(file), "cumulative_%02d.csv", k);
            write_spectrogram_csv(fs::path(cumulative_dir) / file, mag);
        }
        std::cout << "wrote " << gcfg.total_blocks() << " cumulative spectrograms to "
                  << cumulative_dir << "\n";
    }
    return 0;
}

int cmd_metrics(const std::string& data_dir, const std::string& gen_dir, double f0_ratio,
                const std::string& out_csv) {
    if (!(f0_ratio > 0.0)) throw UsageError("--f0-ratio must be positive");
    MetricsReport report;
    StftLossConfig stft_cfg;
    double rmse_sum = 0.0, dist_sum = 0.0;
    for (const auto& manifest : feature_manifests(data_dir)) {
        const std::string stem = manifest.stem().string();
        const fs::path gen_wav = fs::path(gen_dir) / (stem + ".wav");
        if (!fs::exists(gen_wav)) continue;
        const FeatureFile ff = read_feature_files(manifest);
        int gen_rate = 0;
        const auto gen_audio = read_wav(gen_wav, &gen_rate);
        if (gen_rate != ff.sample_rate)
            throw UsageError(gen_wav.string() + ": sample rate mismatch with features");

        // conditioning F0 (scaled) on voiced frames vs pitch tracked from audio
        const ContinuousF0 cf0 = scale_f0(interpolate_f0(ff.features.f0), f0_ratio);
        const double fmax = std::min(1100.0, 0.45 * ff.sample_rate);
        const auto est = estimate_f0(gen_audio, ff.sample_rate, 40.0, fmax);
        const size_t frames = std::min(est.size(), cf0.hz.size());
        std::vector<float> ref(frames, 0.0f), hyp(frames, 0.0f);
        int ref_voiced = 0, both_voiced = 0;
        for (size_t i = 0; i < frames; ++i) {
            if (ff.features.uv[i] == 1.0f) {
                ref[i] = static_cast<float>(cf0.hz[i]);
                ++ref_voiced;
                if (est[i] > 0.0f) ++both_voiced;
            }
            hyp[i] = est[i];
        }

        UtteranceMetrics um;
        um.name = stem;
        um.log_f0_rmse = log_f0_rmse(ref, hyp);
        um.voiced_coverage = ref_voiced > 0 ? static_cast<double>(both_voiced) / ref_voiced : 0.0;

        int ref_rate = 0;
        const auto ref_audio = read_wav(fs::path(data_dir) / (stem + ".wav"), &ref_rate);
        const int n = static_cast<int>(std::min(ref_audio.size(), gen_audio.size()));
        Tensor<float> a = Tensor<float>::from_data(
            {1, n}, std::vector<float>(ref_audio.begin(), ref_audio.begin() + n));
        Tensor<float> b = Tensor<float>::from_data(
            {1, n}, std::vector<float>(gen_audio.begin(), gen_audio.begin() + n));
        um.spectral_distance = static_cast<double>(multi_res_stft(a, b, stft_cfg).total.item());

        rmse_sum += um.log_f0_rmse;
        dist_sum += um.spectral_distance;
        report.utterances.push_back(std::move(um));
    }
    if (report.utterances.empty())
        throw UsageError("no (feature, generated wav) pairs found between " + data_dir + " and " +
                         gen_dir);
    report.mean_log_f0_rmse = rmse_sum / static_cast<double>(report.utterances.size());
    report.mean_spectral_distance = dist_sum / static_cast<double>(report.utterances.size());

    std::ostringstream csv;
    csv << "name,log_f0_rmse,spectral_distance,voiced_coverage\n";
    for (const auto& um : report.utterances) {
        char line[256];
        std::snprintf(line, sizeof(line), "%s,%.6g,%.6g,%.6g\n", um.name.c_str(), um.log_f0_rmse,
                      um.spectral_distance, um.voiced_coverage);
        csv << line;
    }
    char mean_line[256];
    std::snprintf(mean_line, sizeof(mean_line), "mean,%.6g,%.6g,\n", report.mean_log_f0_rmse,
                  report.mean_spectral_distance);
    csv << mean_line;
    std::cout << csv.str();
    if (!out_csv.empty()) {
        std::ofstream os(out_csv);
        if (!os) throw UsageError("cannot write " + out_csv);
        os << csv.str();
    }
    return 0;
}

int cmd_bench(const std::string& preset, const std::string& ckpt_path, double seconds, int runs,
              int threads, uint64_t seed) {
    if (threads > 0) omp_set_num_threads(threads);
    if (runs < 3) throw UsageError("--runs must be at least 3 (warm-run median)");
    if (!(seconds > 0.0)) throw UsageError("--seconds must be positive");

    struct Entry {
        std::string name;
        GeneratorConfig cfg;
        std::optional<LoadedModel> model;
    };
    std::vector<Entry> entries;
    if (!ckpt_path.empty()) {
        Entry e{fs::path(ckpt_path).filename().string(), {}, load_generator(ckpt_path)};
        e.cfg = e.model->meta.generator;
        entries.push_back(std::move(e));
    } else if (!preset.empty()) {
        entries.push_back({preset, generator_preset(preset), std::nullopt});
    } else {
        for (const char* p : {"pwg30", "pwg20", "qppwg_af", "qppwg_fa"})
            entries.push_back({p, generator_preset(p), std::nullopt});
    }

    const int sample_rate = kDefaultSampleRate;
    const int time = std::max(1, static_cast<int>(seconds * sample_rate));
    const double f0 = 200.0;
    std::printf("%-12s %10s %8s %10s %12s %8s\n", "config", "params", "threads", "gen_ms",
                "samples_s", "RTF");
    for (auto& entry : entries) {
        Generator<float> local(entry.cfg, seed);
        Generator<float>& gen = entry.model ? entry.model->generator : local;
        const double dense = entry.model ? entry.model->meta.dense_factor : kDefaultDenseFactor;

        std::mt19937_64 rng(seed);
        Tensor<float> z = gaussian_noise(time, rng);
        std::vector<float> aux_data(static_cast<size_t>(entry.cfg.aux_channels) * time);
        for (auto& v : aux_data) v = static_cast<float>(detail::gaussian_double(rng));
        Tensor<float> aux =
            Tensor<float>::from_data({1, entry.cfg.aux_channels, time}, std::move(aux_data));
        const DilationSchedule sched = make_dilation_schedule(
            std::vector<double>(static_cast<size_t>(time), sample_rate / (f0 * dense)),
            entry.cfg.adaptive_base_dilations());

        NoGradGuard no_grad;
        (void)gen.forward(z, aux, sched);  // warm run
        std::vector<double> times_ms;
        for (int r = 0; r < runs; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            Tensor<float> out = gen.forward(z, aux, sched);
            const auto t1 = std::chrono::steady_clock::now();
            times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        std::sort(times_ms.begin(), times_ms.end());
        const double median = times_ms[times_ms.size() / 2];
        const double audio_s = static_cast<double>(time) / sample_rate;
        const double rtf = (median / 1000.0) / audio_s;
        std::printf("%-12s %10lld %8d %10.1f %12.0f %8.3f\n", entry.name.c_str(),
                    static_cast<long long>(generator_parameter_count(entry.cfg)),
                    omp_get_max_threads(), median, static_cast<double>(time) / (median / 1000.0),
                    rtf);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale QPPWG/PWG neural vocoder"};
    app.require_subcommand(1);

    std::string config_path;
    uint64_t seed = 0;
    app.add_option("--config", config_path, "JSON config file (flags override it)");
    app.add_option("--seed", seed, "global random seed");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic harmonic dataset");
    gen->fallthrough();
    std::string gen_out = "data";
    int gen_count = 10;
    double gen_duration = 1.5, gen_rolloff = 0.8, gen_noise = 0.02;
    int gen_harmonics = 8;
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--count", gen_count, "number of utterances");
    gen->add_option("--duration", gen_duration, "seconds per utterance");
    gen->add_option("--harmonics", gen_harmonics, "harmonic count");
    gen->add_option("--rolloff", gen_rolloff, "harmonic amplitude rolloff");
    gen->add_option("--noise", gen_noise, "noise floor stddev");

    // train
    auto* train = app.add_subcommand("train", "train a vocoder on a feature dataset");
    train->fallthrough();
    std::string train_data, train_out = "run", train_gen_preset, train_d_preset, train_resume;
    std::optional<int> train_steps, train_warmup, train_batch, train_length;
    int train_log_every = 50;
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--out", train_out, "output directory (loss log, checkpoints)");
    train->add_option("--gen-preset", train_gen_preset,
                      "generator preset (pwg30|pwg20|qppwg_af|qppwg_fa|desk)");
    train->add_option("--d-preset", train_d_preset, "discriminator preset (paper|desk)");
    train->add_option("--resume", train_resume, "checkpoint to resume from");
    train->add_option("--steps", train_steps, "total training steps");
    train->add_option("--warmup", train_warmup, "spectral-only warmup steps");
    train->add_option("--batch-size", train_batch, "items per step");
    train->add_option("--batch-length", train_length, "samples per item");
    train->add_option("--log-every", train_log_every, "console progress interval (0 = silent)");

    // synth
    auto* synth = app.add_subcommand("synth", "synthesize waveforms from feature files");
    synth->fallthrough();
    std::string synth_ckpt, synth_data, synth_out = "synth";
    std::vector<std::string> synth_features;
    double synth_ratio = 1.0;
    synth->add_option("--checkpoint", synth_ckpt, "trained checkpoint")->required();
    synth->add_option("--features", synth_features, "feature manifest(s) (.json)");
    synth->add_option("--data", synth_data, "directory of feature manifests");
    synth->add_option("--out", synth_out, "output directory for wav files");
    synth->add_option("--f0-ratio", synth_ratio, "F0 scaling ratio (e.g. 0.5, 2)");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "report structure, receptive fields, spectra");
    analyze->fallthrough();
    std::string an_preset, an_ckpt, an_features, an_cum_dir;
    double an_f0 = 100.0;
    analyze->add_option("--preset", an_preset, "generator preset to analyze");
    analyze->add_option("--checkpoint", an_ckpt, "checkpoint to analyze");
    analyze->add_option("--f0", an_f0, "F0 in Hz for E_t and receptive fields");
    analyze->add_option("--features", an_features, "utterance for cumulative spectra");
    analyze->add_option("--cumulative-out", an_cum_dir, "directory for per-block spectra CSVs");

    // metrics
    auto* metrics = app.add_subcommand("metrics", "log-F0 RMSE and spectral distance report");
    metrics->fallthrough();
    std::string met_data, met_gen, met_out;
    double met_ratio = 1.0;
    metrics->add_option("--data", met_data, "reference dataset directory")->required();
    metrics->add_option("--gen", met_gen, "directory of generated wavs")->required();
    metrics->add_option("--f0-ratio", met_ratio, "F0 ratio the wavs were generated with");
    metrics->add_option("--out", met_out, "also write the CSV report here");

    // bench
    auto* bench = app.add_subcommand("bench", "real-time-factor benchmark");
    bench->fallthrough();
    std::string bench_preset, bench_ckpt;
    double bench_seconds = 0.5;
    int bench_runs = 5, bench_threads = 0;
    bench->add_option("--preset", bench_preset, "single preset (default: all four)");
    bench->add_option("--checkpoint", bench_ckpt, "benchmark a trained checkpoint");
    bench->add_option("--seconds", bench_seconds, "audio seconds per run");
    bench->add_option("--runs", bench_runs, "timed runs (median reported, >= 3)");
    bench->add_option("--threads", bench_threads, "OpenMP threads (0 = default)");

    try {
        app.parse(argc, argv);
        const json cfg = load_config_file(config_path);
        if (gen->parsed())
            return cmd_gen_data(cfg, gen_out, gen_count, gen_duration, gen_harmonics, gen_rolloff,
                                gen_noise, seed);
        if (train->parsed())
            return cmd_train(cfg, train_data, train_out, train_gen_preset, train_d_preset,
                             train_resume, train_steps, train_warmup, train_batch, train_length,
                             seed, train_log_every);
        if (synth->parsed())
            return cmd_synth(synth_ckpt, synth_data, synth_features, synth_out, synth_ratio, seed);
        if (analyze->parsed())
            return cmd_analyze(cfg, an_preset, an_ckpt, an_f0, an_features, an_cum_dir, seed);
        if (metrics->parsed()) return cmd_metrics(met_data, met_gen, met_ratio, met_out);
        if (bench->parsed())
            return cmd_bench(bench_preset, bench_ckpt, bench_seconds, bench_runs, bench_threads,
                             seed);
        return 1;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
}
