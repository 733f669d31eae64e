#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "qppwg/losses.hpp"
#include "qppwg/models.hpp"

// RAdam optimization with the two-phase schedule: spectral-only warmup, then
// joint adversarial training (one D update, then one G update per step).

namespace qppwg {

struct TrainConfig {
    int total_steps = 400000;
    int warmup_steps = 100000;  // G-only, L_sp
    float lr_g = 1e-4f;
    float lr_d = 5e-5f;
    int lr_decay_steps = 200000;  // lr halves at every multiple
    float lr_decay = 0.5f;
    int batch_size = 6;
    int batch_length = 25520;  // samples per item
    GanWeights gan;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-6f;
    StftLossConfig stft;
    int checkpoint_every = 0;  // 0 = final checkpoint only

    // Paper-scale defaults as above; desk finishes in minutes on a laptop.
    static TrainConfig desk();

    void validate(int hop) const;
};

DiscriminatorConfig discriminator_preset(const std::string& name);  // "paper" | "desk"

// One optimizer step of the rectified-Adam recurrence; falls back to the
// unadapted momentum step while the rectification term is undefined.
// Holds shared tensor handles, so it stays valid when the owning model moves.
class RAdam {
   public:
    RAdam(const std::vector<Parameter<float>*>& params, float lr, float beta1, float beta2,
          float epsilon);

    void step();
    void zero_grad();
    void set_lr(float lr) { lr_ = lr; }
    float lr() const { return lr_; }
    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }

    std::vector<NamedBlob> state_blobs(const std::string& prefix) const;
    void load_state(const Checkpoint& ckpt, const std::string& prefix);

   private:
    std::vector<std::string> names_;
    std::vector<Tensor<float>> tensors_;
    std::vector<std::vector<float>> m_, v_;
    int64_t t_ = 0;
    float lr_, beta1_, beta2_, eps_;
};

struct Utterance {
    std::string name;
    std::vector<float> audio;
    AuxFeatures features;
};

struct Dataset {
    std::vector<Utterance> utterances;

    // Loads every *.json/*.bin/*.wav triple under dir, sorted by name.
    static Dataset load(const std::filesystem::path& dir);
};

struct BatchItem {
    int utterance = 0;
    int64_t start = 0;      // crop start in samples, multiple of hop
    int64_t valid_len = 0;  // <= batch_length; shorter only for padded items
};

// Random frame-aligned crops; items shorter than batch_length start at 0 and
// are zero padded, with losses later restricted to the valid span.
std::vector<BatchItem> sample_batch(const std::vector<int64_t>& utterance_lengths,
                                    const TrainConfig& cfg, int hop, std::mt19937_64& rng);

struct StepRecord {
    int64_t step = 0;  // 1-based
    double l_sc = 0.0;
    double l_m = 0.0;
    double l_sp = 0.0;
    double l_adv = 0.0;
    double l_d = 0.0;
    float lr_g = 0.0f;
    float lr_d = 0.0f;
};

std::string step_record_csv_header();
std::string step_record_csv_line(const StepRecord& rec);

class Trainer {
   public:
    Trainer(const GeneratorConfig& gcfg, const DiscriminatorConfig& dcfg, const TrainConfig& tcfg,
            Dataset dataset, uint64_t seed, int sample_rate = kDefaultSampleRate,
            int hop = kDefaultHop, double dense_factor = kDefaultDenseFactor);

    // Executes training step current_step()+1 and returns its loss record.
    StepRecord step();

    int64_t current_step() const { return step_; }
    const TrainConfig& config() const { return cfg_; }
    Generator<float>& generator() { return generator_; }
    Discriminator<float>& discriminator() { return discriminator_; }
    const NormStats& norm_stats() const { return norm_; }

    // Full loop with CSV loss log and checkpointing under out_dir.
    std::vector<StepRecord> run(const std::filesystem::path& out_dir);

    void save(const std::filesystem::path& path) const;
    static Trainer resume(const std::filesystem::path& path, Dataset dataset,
                          const TrainConfig& tcfg);

   private:
    struct PreparedUtterance {
        std::vector<float> audio;
        Tensor<float> aux;              // [1,39,T], normalized
        std::vector<double> e_t;        // per sample
        std::vector<std::vector<int32_t>> d_prime;
    };

    Trainer(const GeneratorConfig& gcfg, const DiscriminatorConfig& dcfg, const TrainConfig& tcfg,
            Dataset dataset, uint64_t seed, int sample_rate, int hop, double dense_factor,
            const Checkpoint* ckpt);

    void prepare_dataset(Dataset dataset);
    float lr_at(int64_t step_index, float base) const;
    StepRecord joint_or_warmup_step(int64_t step_index);

    GeneratorConfig gcfg_;
    DiscriminatorConfig dcfg_;
    TrainConfig cfg_;
    int sample_rate_;
    int hop_;
    double dense_factor_;
    Generator<float> generator_;
    Discriminator<float> discriminator_;
    RAdam opt_g_;
    RAdam opt_d_;
    std::vector<PreparedUtterance> utterances_;
    NormStats norm_;
    std::mt19937_64 rng_;
    int64_t step_ = 0;
};

}  // namespace qppwg
