#include "qppwg/models.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

namespace qppwg {

std::vector<int> macroblock_dilations(const MacroblockSpec& spec) {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(spec.blocks));
    const int per_cycle = spec.layers_per_cycle();
    for (int j = 0; j < spec.blocks; ++j) out.push_back(1 << (j % per_cycle));
    return out;
}

void GeneratorConfig::validate() const {
    if (macroblocks.empty()) throw ConfigError("generator config: no macroblocks");
    for (const auto& mb : macroblocks) {
        if (mb.blocks <= 0 || mb.cycles <= 0)
            throw ConfigError("generator config: macroblock needs positive blocks and cycles");
        if (mb.blocks % mb.cycles != 0)
            throw ConfigError("generator config: blocks " + std::to_string(mb.blocks) +
                              " not divisible by cycles " + std::to_string(mb.cycles));
    }
    if (kernel_size != 3)
        throw ConfigError("generator config: only kernel size 3 is supported");
    if (residual_channels <= 0 || gate_channels <= 0 || skip_channels <= 0 || aux_channels <= 0)
        throw ConfigError("generator config: channel counts must be positive");
    if (gate_channels != 2 * residual_channels)
        throw ConfigError("generator config: gate channels must be twice the residual channels");
}

int GeneratorConfig::total_blocks() const {
    int n = 0;
    for (const auto& mb : macroblocks) n += mb.blocks;
    return n;
}

std::vector<int> GeneratorConfig::adaptive_base_dilations() const {
    std::vector<int> out;
    for (const auto& mb : macroblocks)
        if (mb.kind == BlockKind::adaptive) {
            const auto d = macroblock_dilations(mb);
            out.insert(out.end(), d.begin(), d.end());
        }
    return out;
}

GeneratorConfig generator_preset(const std::string& name) {
    GeneratorConfig cfg;
    if (name == "pwg30") {
        cfg.macroblocks = {{BlockKind::fixed, 30, 3}};
    } else if (name == "pwg20") {
        cfg.macroblocks = {{BlockKind::fixed, 20, 2}};
    } else if (name == "qppwg_af") {
        cfg.macroblocks = {{BlockKind::adaptive, 10, 2}, {BlockKind::fixed, 10, 1}};
    } else if (name == "qppwg_fa") {
        cfg.macroblocks = {{BlockKind::fixed, 10, 1}, {BlockKind::adaptive, 10, 2}};
    } else if (name == "desk") {
        cfg.macroblocks = {{BlockKind::adaptive, 4, 2}, {BlockKind::fixed, 4, 1}};
        cfg.residual_channels = 16;
        cfg.gate_channels = 32;
        cfg.skip_channels = 16;
    } else {
        throw UsageError("unknown generator preset '" + name +
                         "' (expected pwg30, pwg20, qppwg_af, qppwg_fa or desk)");
    }
    cfg.validate();
    return cfg;
}

bool is_generator_preset(const std::string& name) {
    return name == "pwg30" || name == "pwg20" || name == "qppwg_af" || name == "qppwg_fa" ||
           name == "desk";
}

void DiscriminatorConfig::validate() const {
    if (layers < 2) throw ConfigError("discriminator config: need at least 2 layers");
    if (channels <= 0) throw ConfigError("discriminator config: channels must be positive");
    if (kernel_size != 3)
        throw ConfigError("discriminator config: only kernel size 3 is supported");
}

int64_t generator_parameter_count(const GeneratorConfig& cfg) {
    cfg.validate();
    const int64_t r = cfg.residual_channels, g = cfg.gate_channels, s = cfg.skip_channels;
    const int64_t a = cfg.aux_channels;
    const int64_t per_block = 3 * g * r + g   // three 1x1 taps + bias
                              + g * a + g     // aux injection
                              + r * (g / 2) + r  // residual 1x1
                              + s * (g / 2) + s; // skip 1x1
    return (r + r)                            // input 1x1 (1 -> r)
           + per_block * cfg.total_blocks()
           + (s * s + s)                      // head 1x1 (s -> s)
           + (s + 1);                         // head 1x1 (s -> 1)
}

int64_t discriminator_parameter_count(const DiscriminatorConfig& cfg) {
    cfg.validate();
    const int64_t c = cfg.channels;
    int64_t n = 3 * c + c;                          // 1 -> c
    n += (cfg.layers - 2) * (3 * c * c + c);        // c -> c
    n += 3 * c + 1;                                 // c -> 1
    return n;
}

int64_t macroblock_receptive_field(const MacroblockSpec& spec, double e_t) {
    int64_t span = 0;
    for (int d : macroblock_dilations(spec))
        span += receptive_extent(spec.kind == BlockKind::adaptive, d, e_t);
    return 1 + span;
}

int64_t receptive_field(const GeneratorConfig& cfg, double e_t) {
    int64_t span = 0;
    for (const auto& mb : cfg.macroblocks) span += macroblock_receptive_field(mb, e_t) - 1;
    return 1 + span;
}

// ---- checkpoint io ----

namespace {

constexpr char kMagic[8] = {'Q', 'P', 'P', 'W', 'G', 'C', 'K', '1'};

nlohmann::json macroblock_to_json(const MacroblockSpec& mb) {
    return {{"kind", mb.kind == BlockKind::adaptive ? "adaptive" : "fixed"},
            {"blocks", mb.blocks},
            {"cycles", mb.cycles}};
}

MacroblockSpec macroblock_from_json(const nlohmann::json& j) {
    MacroblockSpec mb;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "adaptive")
        mb.kind = BlockKind::adaptive;
    else if (kind == "fixed")
        mb.kind = BlockKind::fixed;
    else
        throw ConfigError("macroblock kind must be 'fixed' or 'adaptive', got '" + kind + "'");
    mb.blocks = j.at("blocks").get<int>();
    mb.cycles = j.at("cycles").get<int>();
    return mb;
}

nlohmann::json generator_to_json(const GeneratorConfig& cfg) {
    nlohmann::json mbs = nlohmann::json::array();
    for (const auto& mb : cfg.macroblocks) mbs.push_back(macroblock_to_json(mb));
    return {{"macroblocks", mbs},
            {"residual_channels", cfg.residual_channels},
            {"gate_channels", cfg.gate_channels},
            {"skip_channels", cfg.skip_channels},
            {"aux_channels", cfg.aux_channels},
            {"kernel_size", cfg.kernel_size},
            {"scale_residual", cfg.scale_residual}};
}

GeneratorConfig generator_from_json(const nlohmann::json& j) {
    GeneratorConfig cfg;
    cfg.macroblocks.clear();
    for (const auto& mb : j.at("macroblocks")) cfg.macroblocks.push_back(macroblock_from_json(mb));
    cfg.residual_channels = j.at("residual_channels").get<int>();
    cfg.gate_channels = j.at("gate_channels").get<int>();
    cfg.skip_channels = j.at("skip_channels").get<int>();
    cfg.aux_channels = j.at("aux_channels").get<int>();
    cfg.kernel_size = j.at("kernel_size").get<int>();
    cfg.scale_residual = j.at("scale_residual").get<bool>();
    cfg.validate();
    return cfg;
}

nlohmann::json discriminator_to_json(const DiscriminatorConfig& cfg) {
    return {{"layers", cfg.layers},
            {"channels", cfg.channels},
            {"kernel_size", cfg.kernel_size},
            {"leaky_slope", cfg.leaky_slope}};
}

DiscriminatorConfig discriminator_from_json(const nlohmann::json& j) {
    DiscriminatorConfig cfg;
    cfg.layers = j.at("layers").get<int>();
    cfg.channels = j.at("channels").get<int>();
    cfg.kernel_size = j.at("kernel_size").get<int>();
    cfg.leaky_slope = j.at("leaky_slope").get<float>();
    cfg.validate();
    return cfg;
}

}  // namespace

std::string generator_config_to_json(const GeneratorConfig& cfg) {
    return generator_to_json(cfg).dump(2);
}

GeneratorConfig generator_config_from_json(const std::string& text) {
    return generator_from_json(nlohmann::json::parse(text));
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                     const std::vector<NamedBlob>& blobs) {
    nlohmann::json header;
    header["generator"] = generator_to_json(meta.generator);
    header["discriminator"] = discriminator_to_json(meta.discriminator);
    header["has_train_state"] = meta.has_train_state;
    header["step"] = meta.step;
    header["opt_g_steps"] = meta.opt_g_steps;
    header["opt_d_steps"] = meta.opt_d_steps;
    header["norm"] = {{"mean", meta.norm.mean}, {"stdev", meta.norm.stdev}};
    header["sample_rate"] = meta.sample_rate;
    header["hop_samples"] = meta.hop;
    header["dense_factor"] = meta.dense_factor;
    header["rng_state"] = meta.rng_state;
    nlohmann::json blob_dir = nlohmann::json::array();
    for (const auto& blob : blobs)
        blob_dir.push_back({{"name", blob.name}, {"shape", blob.shape}});
    header["blobs"] = blob_dir;

    const std::string json_text = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw UsageError("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof(kMagic));
    const uint64_t json_len = json_text.size();
    os.write(reinterpret_cast<const char*>(&json_len), sizeof(json_len));
    os.write(json_text.data(), static_cast<std::streamsize>(json_text.size()));
    for (const auto& blob : blobs)
        os.write(reinterpret_cast<const char*>(blob.data.data()),
                 static_cast<std::streamsize>(blob.data.size() * sizeof(float)));
    if (!os) throw UsageError("short write to checkpoint " + path.string());
}

const NamedBlob& Checkpoint::blob(const std::string& name) const {
    for (const auto& b : blobs)
        if (b.name == name) return b;
    throw ConfigError("checkpoint is missing blob '" + name + "'");
}

bool Checkpoint::has_blob(const std::string& name) const {
    return std::any_of(blobs.begin(), blobs.end(),
                       [&](const NamedBlob& b) { return b.name == name; });
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw UsageError("cannot read checkpoint " + path.string());
    char magic[8];
    is.read(magic, sizeof(magic));
    if (is.gcount() != sizeof(magic) || !std::equal(magic, magic + 8, kMagic))
        throw UsageError(path.string() + " is not a qppwg checkpoint");
    uint64_t json_len = 0;
    is.read(reinterpret_cast<char*>(&json_len), sizeof(json_len));
    std::string json_text(json_len, '\0');
    is.read(json_text.data(), static_cast<std::streamsize>(json_len));
    if (is.gcount() != static_cast<std::streamsize>(json_len))
        throw UsageError("truncated checkpoint header in " + path.string());
    nlohmann::json header = nlohmann::json::parse(json_text);

    Checkpoint ckpt;
    ckpt.meta.generator = generator_from_json(header.at("generator"));
    ckpt.meta.discriminator = discriminator_from_json(header.at("discriminator"));
    ckpt.meta.has_train_state = header.at("has_train_state").get<bool>();
    ckpt.meta.step = header.at("step").get<int64_t>();
    ckpt.meta.opt_g_steps = header.at("opt_g_steps").get<int64_t>();
    ckpt.meta.opt_d_steps = header.at("opt_d_steps").get<int64_t>();
    ckpt.meta.norm.mean = header.at("norm").at("mean").get<std::vector<float>>();
    ckpt.meta.norm.stdev = header.at("norm").at("stdev").get<std::vector<float>>();
    ckpt.meta.sample_rate = header.at("sample_rate").get<int>();
    ckpt.meta.hop = header.at("hop_samples").get<int>();
    ckpt.meta.dense_factor = header.at("dense_factor").get<double>();
    ckpt.meta.rng_state = header.at("rng_state").get<std::string>();

    for (const auto& entry : header.at("blobs")) {
        NamedBlob blob;
        blob.name = entry.at("name").get<std::string>();
        blob.shape = entry.at("shape").get<std::vector<int>>();
        int64_t n = 1;
        for (int d : blob.shape) n *= d;
        blob.data.resize(static_cast<size_t>(n));
        is.read(reinterpret_cast<char*>(blob.data.data()),
                static_cast<std::streamsize>(blob.data.size() * sizeof(float)));
        if (is.gcount() != static_cast<std::streamsize>(blob.data.size() * sizeof(float)))
            throw UsageError("truncated blob '" + blob.name + "' in " + path.string());
        ckpt.blobs.push_back(std::move(blob));
    }
    return ckpt;
}

}  // namespace qppwg
