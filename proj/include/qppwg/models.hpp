#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "qppwg/conditioning.hpp"
#include "qppwg/pdcnn.hpp"
#include "qppwg/tensor.hpp"

// QPPWG/PWG generators (cascaded adaptive/fixed macroblocks of gated residual
// blocks) and the fully-convolutional discriminator.

namespace qppwg {

enum class BlockKind { fixed, adaptive };

struct MacroblockSpec {
    BlockKind kind = BlockKind::fixed;
    int blocks = 0;
    int cycles = 1;

    int layers_per_cycle() const { return blocks / cycles; }
};

// Base dilations 2^0 .. 2^(blocks/cycles - 1), repeated per cycle.
std::vector<int> macroblock_dilations(const MacroblockSpec& spec);

struct GeneratorConfig {
    std::vector<MacroblockSpec> macroblocks;
    int residual_channels = 64;
    int gate_channels = 128;
    int skip_channels = 64;
    int aux_channels = kAuxChannels;
    int kernel_size = 3;
    bool scale_residual = true;  // multiply (x + residual) by 1/sqrt(2)

    void validate() const;
    int total_blocks() const;
    std::vector<int> adaptive_base_dilations() const;  // in model order
};

// Named presets: pwg30 = B_F30C3, pwg20 = B_F20C2, qppwg_af = B_A10C2+B_F10C1,
// qppwg_fa = B_F10C1+B_A10C2, desk = 16-channel B_A4C2+B_F4C1.
GeneratorConfig generator_preset(const std::string& name);
bool is_generator_preset(const std::string& name);

struct DiscriminatorConfig {
    int layers = 10;
    int channels = 64;
    int kernel_size = 3;
    float leaky_slope = 0.2f;

    void validate() const;
};

int64_t generator_parameter_count(const GeneratorConfig& cfg);
int64_t discriminator_parameter_count(const DiscriminatorConfig& cfg);

// 1 + sum over layers of 2*d' (adaptive layers evaluated at e_t).
int64_t receptive_field(const GeneratorConfig& cfg, double e_t);
int64_t macroblock_receptive_field(const MacroblockSpec& spec, double e_t);

namespace detail {

// Box-Muller on two fresh uniforms per draw; no cached state, so the engine
// state alone determines the stream.
template <typename Rng>
double gaussian_double(Rng& rng) {
    const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;          // [0, 1)
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238 * u2);
}

template <typename S, typename Rng>
Tensor<S> gaussian_tensor(std::vector<int> shape, double stdev, Rng& rng) {
    Tensor<S> t = Tensor<S>::zeros(std::move(shape), true);
    for (S& v : t.values_mut()) v = static_cast<S>(stdev * gaussian_double(rng));
    return t;
}

}  // namespace detail

template <typename S>
class Generator {
   public:
    struct Block {
        PdcnnLayer<S> conv;     // residual -> gate channels
        Parameter<S> aux_w;     // aux -> gate channels
        Parameter<S> aux_b;
        Parameter<S> res_w;     // gate/2 -> residual
        Parameter<S> res_b;
        Parameter<S> skip_w;    // gate/2 -> skip
        Parameter<S> skip_b;
    };

    Generator(GeneratorConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        std::mt19937_64 rng(seed);
        const double stdev = 0.02;
        auto weight = [&](std::string name, int rows, int cols) {
            Parameter<S> p{std::move(name),
                           detail::gaussian_tensor<S>({rows, cols}, stdev, rng)};
            return p;
        };
        auto bias = [&](std::string name, int n) {
            Parameter<S> p{std::move(name), Tensor<S>::zeros({n}, true)};
            return p;
        };
        const int r = cfg_.residual_channels, g = cfg_.gate_channels, s = cfg_.skip_channels;
        in_w_ = weight("g.in.w", r, 1);
        in_b_ = bias("g.in.b", r);
        int block_index = 0, adaptive_index = 0;
        for (const auto& mb : cfg_.macroblocks) {
            const std::vector<int> dilations = macroblock_dilations(mb);
            for (int j = 0; j < mb.blocks; ++j, ++block_index) {
                const std::string base = "g.block" + std::to_string(block_index);
                Block blk;
                blk.conv.w_current = weight(base + ".conv.wc", g, r);
                blk.conv.w_past = weight(base + ".conv.wp", g, r);
                blk.conv.w_future = weight(base + ".conv.wf", g, r);
                blk.conv.bias = bias(base + ".conv.b", g);
                blk.conv.base_dilation = dilations[static_cast<size_t>(j)];
                blk.conv.adaptive = mb.kind == BlockKind::adaptive;
                blk.conv.schedule_row = blk.conv.adaptive ? adaptive_index++ : -1;
                blk.aux_w = weight(base + ".aux.w", g, cfg_.aux_channels);
                blk.aux_b = bias(base + ".aux.b", g);
                blk.res_w = weight(base + ".res.w", r, g / 2);
                blk.res_b = bias(base + ".res.b", r);
                blk.skip_w = weight(base + ".skip.w", s, g / 2);
                blk.skip_b = bias(base + ".skip.b", s);
                blocks_.push_back(std::move(blk));
            }
        }
        head1_w_ = weight("g.head1.w", s, s);
        head1_b_ = bias("g.head1.b", s);
        head2_w_ = weight("g.head2.w", 1, s);
        head2_b_ = bias("g.head2.b", 1);
    }

    const GeneratorConfig& config() const { return cfg_; }

    Tensor<S> forward(const Tensor<S>& noise, const Tensor<S>& aux,
                      const DilationSchedule& schedule) const {
        return run(static_cast<int>(blocks_.size()), noise, aux, schedule);
    }

    // Output head applied to the skip sum of blocks 1..k only.
    Tensor<S> cumulative_forward(int k, const Tensor<S>& noise, const Tensor<S>& aux,
                                 const DilationSchedule& schedule) const {
        if (k < 1 || k > static_cast<int>(blocks_.size()))
            throw UsageError("cumulative_forward: block count " + std::to_string(k) +
                             " outside [1, " + std::to_string(blocks_.size()) + "]");
        return run(k, noise, aux, schedule);
    }

    std::vector<Parameter<S>*> parameters() {
        std::vector<Parameter<S>*> out;
        out.push_back(&in_w_);
        out.push_back(&in_b_);
        for (auto& blk : blocks_) {
            out.push_back(&blk.conv.w_current);
            out.push_back(&blk.conv.w_past);
            out.push_back(&blk.conv.w_future);
            out.push_back(&blk.conv.bias);
            out.push_back(&blk.aux_w);
            out.push_back(&blk.aux_b);
            out.push_back(&blk.res_w);
            out.push_back(&blk.res_b);
            out.push_back(&blk.skip_w);
            out.push_back(&blk.skip_b);
        }
        out.push_back(&head1_w_);
        out.push_back(&head1_b_);
        out.push_back(&head2_w_);
        out.push_back(&head2_b_);
        return out;
    }

    int64_t parameter_count() {
        int64_t n = 0;
        for (auto* p : parameters()) n += p->tensor.numel();
        return n;
    }

    void set_trainable(bool trainable) {
        for (auto* p : parameters()) {
            p->tensor.impl()->requires_grad = trainable;
            p->tensor.impl()->needs_grad = trainable;
        }
    }

   private:
    Tensor<S> run(int upto, const Tensor<S>& noise, const Tensor<S>& aux,
                  const DilationSchedule& schedule) const {
        if (noise.shape().size() != 3 || noise.shape()[1] != 1)
            throw UsageError("generator: expected [B,1,T] noise, got " +
                             detail::shape_str(noise.shape()));
        if (aux.shape().size() != 3 || aux.shape()[1] != cfg_.aux_channels)
            throw UsageError("generator: expected [B," + std::to_string(cfg_.aux_channels) +
                             ",T] aux, got " + detail::shape_str(aux.shape()));
        const int time = noise.shape()[2];
        if (aux.shape()[2] != time || aux.shape()[0] != noise.shape()[0])
            throw UsageError("generator: aux " + detail::shape_str(aux.shape()) +
                             " not aligned with noise " + detail::shape_str(noise.shape()));
        for (const auto& row : schedule.d_prime)
            if (static_cast<int>(row.size()) != time)
                throw UsageError("generator: dilation schedule length " +
                                 std::to_string(row.size()) + " != time extent " +
                                 std::to_string(time));

        const int half = cfg_.gate_channels / 2;
        const S inv_sqrt2 = static_cast<S>(1.0 / std::sqrt(2.0));
        Tensor<S> x = conv1x1(noise, in_w_.tensor, in_b_.tensor);
        Tensor<S> skip;
        for (int bi = 0; bi < upto; ++bi) {
            const Block& blk = blocks_[static_cast<size_t>(bi)];
            Tensor<S> h;
            if (blk.conv.adaptive) {
                if (blk.conv.schedule_row >= static_cast<int>(schedule.d_prime.size()))
                    throw UsageError("generator: schedule has " +
                                     std::to_string(schedule.d_prime.size()) +
                                     " adaptive rows, need " +
                                     std::to_string(blk.conv.schedule_row + 1));
                h = pdcnn_forward(x, blk.conv,
                                  schedule.d_prime[static_cast<size_t>(blk.conv.schedule_row)]);
            } else {
                h = pdcnn_forward(x, blk.conv);
            }
            h = add(h, conv1x1(aux, blk.aux_w.tensor, blk.aux_b.tensor));
            Tensor<S> gate = mul(tanh(channel_slice(h, 0, half)),
                                 sigmoid(channel_slice(h, half, 2 * half)));
            x = add(conv1x1(gate, blk.res_w.tensor, blk.res_b.tensor), x);
            if (cfg_.scale_residual) x = scale(x, inv_sqrt2);
            Tensor<S> s = conv1x1(gate, blk.skip_w.tensor, blk.skip_b.tensor);
            skip = skip.defined() ? add(skip, s) : s;
        }
        Tensor<S> h1 = conv1x1(leaky_relu(skip, S(0.2)), head1_w_.tensor, head1_b_.tensor);
        return conv1x1(leaky_relu(h1, S(0.2)), head2_w_.tensor, head2_b_.tensor);
    }

    GeneratorConfig cfg_;
    Parameter<S> in_w_, in_b_;
    std::vector<Block> blocks_;
    Parameter<S> head1_w_, head1_b_, head2_w_, head2_b_;
};

template <typename S>
class Discriminator {
   public:
    Discriminator(DiscriminatorConfig cfg, uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        std::mt19937_64 rng(seed);
        const double stdev = 0.02;
        for (int l = 0; l < cfg_.layers; ++l) {
            const int c_in = l == 0 ? 1 : cfg_.channels;
            const int c_out = l == cfg_.layers - 1 ? 1 : cfg_.channels;
            const std::string base = "d.layer" + std::to_string(l);
            PdcnnLayer<S> layer;
            layer.w_current = {base + ".wc", detail::gaussian_tensor<S>({c_out, c_in}, stdev, rng)};
            layer.w_past = {base + ".wp", detail::gaussian_tensor<S>({c_out, c_in}, stdev, rng)};
            layer.w_future = {base + ".wf", detail::gaussian_tensor<S>({c_out, c_in}, stdev, rng)};
            layer.bias = {base + ".b", Tensor<S>::zeros({c_out}, true)};
            layer.base_dilation = 1 << l;
            layers_.push_back(std::move(layer));
        }
    }

    const DiscriminatorConfig& config() const { return cfg_; }

    // Per-timestep logits, same length as the input (least-squares GAN, no
    // output sigmoid).
    Tensor<S> forward(const Tensor<S>& x) const {
        if (x.shape().size() != 3 || x.shape()[1] != 1)
            throw UsageError("discriminator: expected [B,1,T] input, got " +
                             detail::shape_str(x.shape()));
        Tensor<S> h = x;
        for (size_t l = 0; l < layers_.size(); ++l) {
            h = pdcnn_forward(h, layers_[l]);
            if (l + 1 < layers_.size()) h = leaky_relu(h, static_cast<S>(cfg_.leaky_slope));
        }
        return h;
    }

    std::vector<Parameter<S>*> parameters() {
        std::vector<Parameter<S>*> out;
        for (auto& layer : layers_) {
            out.push_back(&layer.w_current);
            out.push_back(&layer.w_past);
            out.push_back(&layer.w_future);
            out.push_back(&layer.bias);
        }
        return out;
    }

    int64_t parameter_count() {
        int64_t n = 0;
        for (auto* p : parameters()) n += p->tensor.numel();
        return n;
    }

    void set_trainable(bool trainable) {
        for (auto* p : parameters()) {
            p->tensor.impl()->requires_grad = trainable;
            p->tensor.impl()->needs_grad = trainable;
        }
    }

   private:
    DiscriminatorConfig cfg_;
    std::vector<PdcnnLayer<S>> layers_;
};

// ---- checkpoints ----
// Binary file: magic "QPPWGCK1", u64 JSON length, JSON header, then raw
// little-endian float32 blobs in header order. Bit-exact round trip.

struct CheckpointMeta {
    GeneratorConfig generator;
    DiscriminatorConfig discriminator;
    bool has_train_state = false;
    int64_t step = 0;
    int64_t opt_g_steps = 0;
    int64_t opt_d_steps = 0;
    NormStats norm;
    int sample_rate = kDefaultSampleRate;
    int hop = kDefaultHop;
    double dense_factor = kDefaultDenseFactor;
    std::string rng_state;  // serialized mt19937_64, empty when absent
};

struct NamedBlob {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                     const std::vector<NamedBlob>& blobs);

struct Checkpoint {
    CheckpointMeta meta;
    std::vector<NamedBlob> blobs;

    const NamedBlob& blob(const std::string& name) const;
    bool has_blob(const std::string& name) const;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies parameter tensors into / out of blob lists by name.
template <typename S>
std::vector<NamedBlob> collect_parameters(std::vector<Parameter<S>*> params) {
    std::vector<NamedBlob> blobs;
    blobs.reserve(params.size());
    for (auto* p : params) {
        NamedBlob blob;
        blob.name = p->name;
        blob.shape = p->tensor.shape();
        blob.data.assign(p->tensor.values().begin(), p->tensor.values().end());
        blobs.push_back(std::move(blob));
    }
    return blobs;
}

template <typename S>
void restore_parameters(std::vector<Parameter<S>*> params, const Checkpoint& ckpt) {
    for (auto* p : params) {
        const NamedBlob& blob = ckpt.blob(p->name);
        if (blob.shape != p->tensor.shape())
            throw ConfigError("checkpoint blob " + p->name + " has shape " +
                              detail::shape_str(blob.shape) + ", model expects " +
                              detail::shape_str(p->tensor.shape()));
        std::copy(blob.data.begin(), blob.data.end(), p->tensor.values_mut().begin());
    }
}

// Config <-> JSON text (used by the CLI config file and checkpoint header).
std::string generator_config_to_json(const GeneratorConfig& cfg);
GeneratorConfig generator_config_from_json(const std::string& text);

}  // namespace qppwg
