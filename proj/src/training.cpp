#include "qppwg/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "qppwg/signal.hpp"

namespace qppwg {

TrainConfig TrainConfig::desk() {
    TrainConfig cfg;
    cfg.total_steps = 2000;
    cfg.warmup_steps = 500;
    cfg.lr_decay_steps = 1000;
    cfg.batch_size = 1;
    cfg.batch_length = 5500;  // 50 frames at hop 110
    cfg.checkpoint_every = 0;
    return cfg;
}

void TrainConfig::validate(int hop) const {
    if (total_steps < 1) throw ConfigError("train config: total_steps must be >= 1");
    if (warmup_steps < 0 || warmup_steps > total_steps)
        throw ConfigError("train config: warmup_steps must be in [0, total_steps]");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (hop < 1 || batch_length % hop != 0)
        throw ConfigError("train config: batch_length " + std::to_string(batch_length) +
                          " not divisible by hop " + std::to_string(hop));
    if (lr_decay_steps < 1) throw ConfigError("train config: lr_decay_steps must be >= 1");
    if (!(lr_g > 0.0f) || !(lr_d > 0.0f)) throw ConfigError("train config: learning rates must be positive");
    stft.validate();
    int max_win = 0;
    for (const auto& r : stft.resolutions) max_win = std::max(max_win, r.win_length);
    if (batch_length < max_win)
        throw ConfigError("train config: batch_length " + std::to_string(batch_length) +
                          " shorter than the longest STFT window " + std::to_string(max_win));
}

DiscriminatorConfig discriminator_preset(const std::string& name) {
    DiscriminatorConfig cfg;
    if (name == "paper") {
        // defaults: 10 layers, 64 channels
    } else if (name == "desk") {
        cfg.channels = 16;
    } else {
        throw UsageError("unknown discriminator preset '" + name + "' (expected paper or desk)");
    }
    cfg.validate();
    return cfg;
}

// ---- RAdam ----

RAdam::RAdam(const std::vector<Parameter<float>*>& params, float lr, float beta1, float beta2,
             float epsilon)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
    names_.reserve(params.size());
    tensors_.reserve(params.size());
    for (auto* p : params) {
        names_.push_back(p->name);
        tensors_.push_back(p->tensor);
        m_.emplace_back(static_cast<size_t>(p->tensor.numel()), 0.0f);
        v_.emplace_back(static_cast<size_t>(p->tensor.numel()), 0.0f);
    }
}

void RAdam::step() {
    ++t_;
    const double t = static_cast<double>(t_);
    const double beta1 = beta1_, beta2 = beta2_;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    const double rho_t = rho_inf - 2.0 * t * std::pow(beta2, t) / bc2;

    const bool rectified = rho_t > 4.0;
    double rect = 0.0;
    if (rectified)
        rect = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                         ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));

    for (size_t p = 0; p < tensors_.size(); ++p) {
        auto& node = *tensors_[p].impl();
        float* theta = node.value.data();
        const float* g = node.grad.empty() ? nullptr : node.grad.data();
        float* m = m_[p].data();
        float* v = v_[p].data();
        const int64_t n = static_cast<int64_t>(node.value.size());
        const float b1 = beta1_, b2 = beta2_;
        const float one_m_b1 = 1.0f - b1, one_m_b2 = 1.0f - b2;
        if (rectified) {
            const float scale = static_cast<float>(lr_ * rect);
            const float inv_bc1 = static_cast<float>(1.0 / bc1);
            const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
            for (int64_t i = 0; i < n; ++i) {
                const float gi = g ? g[i] : 0.0f;
                m[i] = b1 * m[i] + one_m_b1 * gi;
                v[i] = b2 * v[i] + one_m_b2 * gi * gi;
                const float m_hat = m[i] * inv_bc1;
                const float denom = std::sqrt(v[i]) * inv_sqrt_bc2 + eps_;
                theta[i] -= scale * m_hat / denom;
            }
        } else {
            const float scale = static_cast<float>(lr_ / bc1);
            for (int64_t i = 0; i < n; ++i) {
                const float gi = g ? g[i] : 0.0f;
                m[i] = b1 * m[i] + one_m_b1 * gi;
                v[i] = b2 * v[i] + one_m_b2 * gi * gi;
                theta[i] -= scale * m[i];
            }
        }
    }
}

void RAdam::zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
}

std::vector<NamedBlob> RAdam::state_blobs(const std::string& prefix) const {
    std::vector<NamedBlob> blobs;
    blobs.reserve(2 * names_.size());
    for (size_t p = 0; p < names_.size(); ++p) {
        blobs.push_back({prefix + ".m." + names_[p],
                         {static_cast<int>(m_[p].size())},
                         m_[p]});
        blobs.push_back({prefix + ".v." + names_[p],
                         {static_cast<int>(v_[p].size())},
                         v_[p]});
    }
    return blobs;
}

void RAdam::load_state(const Checkpoint& ckpt, const std::string& prefix) {
    for (size_t p = 0; p < names_.size(); ++p) {
        const NamedBlob& m = ckpt.blob(prefix + ".m." + names_[p]);
        const NamedBlob& v = ckpt.blob(prefix + ".v." + names_[p]);
        if (m.data.size() != m_[p].size() || v.data.size() != v_[p].size())
            throw ConfigError("optimizer state size mismatch for " + names_[p]);
        m_[p] = m.data;
        v_[p] = v.data;
    }
}

// ---- dataset ----

Dataset Dataset::load(const std::filesystem::path& dir) {
    Dataset ds;
    std::vector<std::filesystem::path> manifests;
    if (!std::filesystem::is_directory(dir))
        throw UsageError("dataset directory " + dir.string() + " does not exist");
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.path().extension() == ".json") manifests.push_back(entry.path());
    std::sort(manifests.begin(), manifests.end());
    for (const auto& manifest : manifests) {
        Utterance utt;
        utt.name = manifest.stem().string();
        FeatureFile ff = read_feature_files(manifest);
        utt.features = std::move(ff.features);
        std::filesystem::path wav = manifest;
        wav.replace_extension(".wav");
        int rate = 0;
        utt.audio = read_wav(wav, &rate);
        if (rate != ff.sample_rate)
            throw ConfigError(wav.string() + ": sample rate " + std::to_string(rate) +
                              " != manifest rate " + std::to_string(ff.sample_rate));
        ds.utterances.push_back(std::move(utt));
    }
    return ds;
}

std::vector<BatchItem> sample_batch(const std::vector<int64_t>& utterance_lengths,
                                    const TrainConfig& cfg, int hop, std::mt19937_64& rng) {
    if (utterance_lengths.empty()) throw UsageError("sample_batch: empty dataset");
    std::vector<BatchItem> batch;
    batch.reserve(static_cast<size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
        BatchItem item;
        item.utterance = static_cast<int>(rng() % utterance_lengths.size());
        const int64_t len = utterance_lengths[static_cast<size_t>(item.utterance)];
        if (len >= cfg.batch_length) {
            const int64_t max_start_frame = (len - cfg.batch_length) / hop;
            item.start = static_cast<int64_t>(rng() % static_cast<uint64_t>(max_start_frame + 1)) * hop;
            item.valid_len = cfg.batch_length;
        } else {
            item.start = 0;
            item.valid_len = (len / hop) * hop;  // trimmed to whole frames
            if (item.valid_len <= 0)
                throw ConfigError("sample_batch: utterance shorter than one frame");
        }
        batch.push_back(item);
    }
    return batch;
}

std::string step_record_csv_header() { return "step,l_sc,l_m,l_sp,l_adv,l_d,lr_g,lr_d"; }

std::string step_record_csv_line(const StepRecord& rec) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                  static_cast<long long>(rec.step), rec.l_sc, rec.l_m, rec.l_sp, rec.l_adv,
                  rec.l_d, static_cast<double>(rec.lr_g), static_cast<double>(rec.lr_d));
    return buf;
}

// ---- trainer ----

Trainer::Trainer(const GeneratorConfig& gcfg, const DiscriminatorConfig& dcfg,
                 const TrainConfig& tcfg, Dataset dataset, uint64_t seed, int sample_rate,
                 int hop, double dense_factor)
    : Trainer(gcfg, dcfg, tcfg, std::move(dataset), seed, sample_rate, hop, dense_factor,
              nullptr) {}

Trainer::Trainer(const GeneratorConfig& gcfg, const DiscriminatorConfig& dcfg,
                 const TrainConfig& tcfg, Dataset dataset, uint64_t seed, int sample_rate,
                 int hop, double dense_factor, const Checkpoint* ckpt)
    : gcfg_(gcfg),
      dcfg_(dcfg),
      cfg_(tcfg),
      sample_rate_(sample_rate),
      hop_(hop),
      dense_factor_(dense_factor),
      generator_(gcfg, seed),
      discriminator_(dcfg, seed + 1),
      opt_g_(generator_.parameters(), tcfg.lr_g, tcfg.beta1, tcfg.beta2, tcfg.epsilon),
      opt_d_(discriminator_.parameters(), tcfg.lr_d, tcfg.beta1, tcfg.beta2, tcfg.epsilon),
      rng_(seed) {
    cfg_.validate(hop_);
    if (dataset.utterances.empty()) throw UsageError("trainer: empty dataset");

    if (ckpt) {
        norm_ = ckpt->meta.norm;
        restore_parameters(generator_.parameters(), *ckpt);
        restore_parameters(discriminator_.parameters(), *ckpt);
        opt_g_.load_state(*ckpt, "opt_g");
        opt_d_.load_state(*ckpt, "opt_d");
        opt_g_.set_step_count(ckpt->meta.opt_g_steps);
        opt_d_.set_step_count(ckpt->meta.opt_d_steps);
        step_ = ckpt->meta.step;
        std::istringstream ss(ckpt->meta.rng_state);
        ss >> rng_;
        if (!ss) throw ConfigError("checkpoint: cannot parse rng state");
    } else {
        std::vector<const AuxFeatures*> feats;
        std::vector<ContinuousF0> cf0s;
        std::vector<const ContinuousF0*> cf0_ptrs;
        for (const auto& utt : dataset.utterances) {
            feats.push_back(&utt.features);
            cf0s.push_back(interpolate_f0(utt.features.f0));
        }
        for (const auto& c : cf0s) cf0_ptrs.push_back(&c);
        norm_ = compute_norm_stats(feats, cf0_ptrs);
    }
    prepare_dataset(std::move(dataset));
}

void Trainer::prepare_dataset(Dataset dataset) {
    const std::vector<int> bases = gcfg_.adaptive_base_dilations();
    for (auto& utt : dataset.utterances) {
        PreparedUtterance prep;
        const ContinuousF0 cf0 = interpolate_f0(utt.features.f0);
        Tensor<float> aux = upsample_to_samples<float>(utt.features, cf0, hop_);
        normalize_aux(aux, norm_);
        prep.aux = std::move(aux);
        const std::vector<double> f0_samples = repeat_to_samples(cf0.hz, hop_);
        prep.e_t = dilation_factors(f0_samples, sample_rate_, dense_factor_);
        DilationSchedule sched = make_dilation_schedule(prep.e_t, bases);
        prep.d_prime = std::move(sched.d_prime);
        // audio trimmed/padded to the feature grid
        const int64_t time = static_cast<int64_t>(utt.features.frame_count()) * hop_;
        utt.audio.resize(static_cast<size_t>(time), 0.0f);
        prep.audio = std::move(utt.audio);
        utterances_.push_back(std::move(prep));
    }
}

float Trainer::lr_at(int64_t step_index, float base) const {
    float lr = base;
    for (int64_t k = step_index / cfg_.lr_decay_steps; k > 0; --k) lr *= cfg_.lr_decay;
    return lr;
}

namespace {

struct ItemSlices {
    Tensor<float> real;   // [1,1,L]
    Tensor<float> noise;  // [1,1,L]
    Tensor<float> aux;    // [1,39,L]
    DilationSchedule sched;
    int64_t valid = 0;
};

}  // namespace

StepRecord Trainer::step() {
    const int64_t step_index = step_ + 1;
    const bool joint = step_index > cfg_.warmup_steps;
    const float lr_g = lr_at(step_index, cfg_.lr_g);
    const float lr_d = lr_at(step_index, cfg_.lr_d);
    opt_g_.set_lr(lr_g);
    opt_d_.set_lr(lr_d);

    std::vector<int64_t> lengths;
    lengths.reserve(utterances_.size());
    for (const auto& u : utterances_) lengths.push_back(static_cast<int64_t>(u.audio.size()));
    const std::vector<BatchItem> batch = sample_batch(lengths, cfg_, hop_, rng_);
    const int64_t L = cfg_.batch_length;

    auto slice_item = [&](const BatchItem& item) {
        const PreparedUtterance& utt = utterances_[static_cast<size_t>(item.utterance)];
        ItemSlices s;
        s.valid = item.valid_len;
        std::vector<float> real(static_cast<size_t>(s.valid));
        std::copy_n(utt.audio.data() + item.start, s.valid, real.data());
        s.real = Tensor<float>::from_data({1, 1, static_cast<int>(s.valid)}, std::move(real));

        std::vector<float> noise(static_cast<size_t>(L));
        for (auto& v : noise) v = static_cast<float>(detail::gaussian_double(rng_));
        s.noise = Tensor<float>::from_data({1, 1, static_cast<int>(L)}, std::move(noise));

        const int time_u = utt.aux.shape()[2];
        std::vector<float> aux(static_cast<size_t>(kAuxChannels) * L);
        const float* src = utt.aux.values().data();
        for (int c = 0; c < kAuxChannels; ++c)
            for (int64_t t = 0; t < L; ++t) {
                const int64_t src_t = std::min<int64_t>(item.start + t, time_u - 1);
                aux[static_cast<size_t>(c) * L + static_cast<size_t>(t)] =
                    src[static_cast<int64_t>(c) * time_u + src_t];
            }
        s.aux = Tensor<float>::from_data({1, kAuxChannels, static_cast<int>(L)}, std::move(aux));

        s.sched.e_t.resize(static_cast<size_t>(L));
        for (int64_t t = 0; t < L; ++t)
            s.sched.e_t[static_cast<size_t>(t)] =
                utt.e_t[static_cast<size_t>(std::min<int64_t>(item.start + t,
                                                              static_cast<int64_t>(utt.e_t.size()) - 1))];
        s.sched.d_prime.resize(utt.d_prime.size());
        for (size_t row = 0; row < utt.d_prime.size(); ++row) {
            auto& dst = s.sched.d_prime[row];
            dst.resize(static_cast<size_t>(L));
            const auto& full = utt.d_prime[row];
            for (int64_t t = 0; t < L; ++t)
                dst[static_cast<size_t>(t)] =
                    full[static_cast<size_t>(std::min<int64_t>(item.start + t,
                                                               static_cast<int64_t>(full.size()) - 1))];
        }
        return s;
    };

    std::vector<ItemSlices> slices;
    slices.reserve(batch.size());
    for (const auto& item : batch) slices.push_back(slice_item(item));

    StepRecord rec;
    rec.step = step_index;
    rec.lr_g = lr_g;
    rec.lr_d = lr_d;
    const float inv_b = 1.0f / static_cast<float>(cfg_.batch_size);

    // D update first (joint phase only), on freshly generated, detached fakes.
    if (joint) {
        opt_d_.zero_grad();
        Tensor<float> ld_sum;
        for (const auto& s : slices) {
            Tensor<float> fake;
            {
                NoGradGuard no_grad;
                fake = generator_.forward(s.noise, s.aux, s.sched);
            }
            Tensor<float> d_real = discriminator_.forward(s.real);
            Tensor<float> d_fake =
                discriminator_.forward(time_slice(fake, 0, static_cast<int>(s.valid)));
            Tensor<float> ld = loss_d(d_real, d_fake);
            ld_sum = ld_sum.defined() ? add(ld_sum, ld) : ld;
        }
        Tensor<float> ld = scale(ld_sum, inv_b);
        backward(ld);
        opt_d_.step();
        rec.l_d = static_cast<double>(ld.item());
    }

    // G update.
    opt_g_.zero_grad();
    if (joint) discriminator_.set_trainable(false);
    Tensor<float> sc_sum, m_sum, adv_sum;
    for (const auto& s : slices) {
        Tensor<float> gen = generator_.forward(s.noise, s.aux, s.sched);
        Tensor<float> gen_valid = time_slice(gen, 0, static_cast<int>(s.valid));
        Tensor<float> hat = reshape(gen_valid, {1, static_cast<int>(s.valid)});
        Tensor<float> ref = reshape(s.real, {1, static_cast<int>(s.valid)});
        MultiResStftLoss<float> mr = multi_res_stft(ref, hat, cfg_.stft);
        sc_sum = sc_sum.defined() ? add(sc_sum, mr.sc) : mr.sc;
        m_sum = m_sum.defined() ? add(m_sum, mr.mag) : mr.mag;
        if (joint) {
            Tensor<float> d_fake = discriminator_.forward(gen_valid);
            Tensor<float> la = loss_adv(d_fake);
            adv_sum = adv_sum.defined() ? add(adv_sum, la) : la;
        }
    }
    Tensor<float> l_sc = scale(sc_sum, inv_b);
    Tensor<float> l_m = scale(m_sum, inv_b);
    Tensor<float> l_sp = add(l_sc, l_m);
    Tensor<float> l_adv = joint ? scale(adv_sum, inv_b) : Tensor<float>();
    Tensor<float> lg = loss_g(l_sp, l_adv, cfg_.gan, joint);
    backward(lg);
    opt_g_.step();
    if (joint) discriminator_.set_trainable(true);

    rec.l_sc = static_cast<double>(l_sc.item());
    rec.l_m = static_cast<double>(l_m.item());
    rec.l_sp = static_cast<double>(l_sp.item());
    rec.l_adv = joint ? static_cast<double>(l_adv.item()) : 0.0;

    if (!std::isfinite(rec.l_sp) || !std::isfinite(rec.l_adv) || !std::isfinite(rec.l_d)) {
        std::ostringstream os;
        os << "non-finite loss at step " << step_index << ": l_sp=" << rec.l_sp
           << " l_adv=" << rec.l_adv << " l_d=" << rec.l_d;
        throw NumericError(os.str());
    }

    step_ = step_index;
    return rec;
}

std::vector<StepRecord> Trainer::run(const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw UsageError("cannot create directory " + out_dir.string() + ": " + ec.message());
    const std::filesystem::path log_path = out_dir / "loss_log.csv";
    const bool fresh = step_ == 0 || !std::filesystem::exists(log_path);
    std::ofstream log(log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw UsageError("cannot write " + log_path.string());
    if (fresh) log << step_record_csv_header() << "\n";

    std::vector<StepRecord> records;
    while (step_ < cfg_.total_steps) {
        StepRecord rec = step();
        log << step_record_csv_line(rec) << "\n";
        records.push_back(rec);
        if (cfg_.checkpoint_every > 0 && rec.step % cfg_.checkpoint_every == 0)
            save(out_dir / ("step_" + std::to_string(rec.step) + ".ckpt"));
    }
    log.flush();
    save(out_dir / "last.ckpt");
    return records;
}

void Trainer::save(const std::filesystem::path& path) const {
    CheckpointMeta meta;
    meta.generator = gcfg_;
    meta.discriminator = dcfg_;
    meta.has_train_state = true;
    meta.step = step_;
    meta.opt_g_steps = opt_g_.step_count();
    meta.opt_d_steps = opt_d_.step_count();
    meta.norm = norm_;
    meta.sample_rate = sample_rate_;
    meta.hop = hop_;
    meta.dense_factor = dense_factor_;
    std::ostringstream ss;
    ss << rng_;
    meta.rng_state = ss.str();

    auto& self = const_cast<Trainer&>(*this);
    std::vector<NamedBlob> blobs = collect_parameters(self.generator_.parameters());
    for (auto& b : collect_parameters(self.discriminator_.parameters())) blobs.push_back(std::move(b));
    for (auto& b : opt_g_.state_blobs("opt_g")) blobs.push_back(std::move(b));
    for (auto& b : opt_d_.state_blobs("opt_d")) blobs.push_back(std::move(b));
    save_checkpoint(path, meta, blobs);
}

Trainer Trainer::resume(const std::filesystem::path& path, Dataset dataset,
                        const TrainConfig& tcfg) {
    const Checkpoint ckpt = load_checkpoint(path);
    if (!ckpt.meta.has_train_state)
        throw UsageError(path.string() + " holds no training state, cannot resume");
    return Trainer(ckpt.meta.generator, ckpt.meta.discriminator, tcfg, std::move(dataset),
                   /*seed=*/0, ckpt.meta.sample_rate, ckpt.meta.hop, ckpt.meta.dense_factor,
                   &ckpt);
}

}  // namespace qppwg
