#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lesion/error.hpp"
#include "lesion/harness.hpp"
#include "lesion/model_io.hpp"
#include "lesion/report.hpp"
#include "lesion/tokenizer.hpp"

namespace lesion::test {

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(LESION_FIXTURE_DIR) / name;
}

// Values recorded when the committed fixtures were generated.
inline constexpr std::uint64_t kToy1LayerHash = 0x6c2743445acac06cULL;
inline constexpr std::uint64_t kToy2LayerHash = 0xc27d9bb0a81aa016ULL;
inline constexpr int kToy2LayerNStar = 3;

inline const ModelBundle& toy1l() {
    static const ModelBundle bundle = load_model(fixture("toy1l.nlf"));
    return bundle;
}

inline const ModelBundle& toy2l() {
    static const ModelBundle bundle = load_model(fixture("toy2l.nlf"));
    return bundle;
}

inline TokenSequence probe_for(const ModelBundle& bundle) {
    return read_probe(fixture("probe.txt"), bundle.config());
}

inline ModelConfig small_config(int layers = 1, int d_model = 16, int heads = 2, int d_mlp = 32) {
    ModelConfig c;
    c.n_layers = layers;
    c.d_model = d_model;
    c.n_heads = heads;
    c.d_mlp = d_mlp;
    c.vocab_size = 256;
    c.max_seq_len = 64;
    return c;
}

inline TokenSequence text_tokens(const std::string& text, const ModelConfig& config) {
    return tokenize(text, config);
}

// Zeroes every incoming weight of MLP hidden unit `unit` in `layer`, so its
// activation is identically 0.
inline ModelBundle kill_hidden_unit(const ModelBundle& base, int layer, int unit) {
    ModelWeights w = base.weights();
    auto& lw = w.layers[static_cast<std::size_t>(layer)];
    for (std::size_t c = 0; c < lw.gate_proj.cols; ++c) {
        lw.gate_proj(static_cast<std::size_t>(unit), c) = 0.0f;
        lw.up_proj(static_cast<std::size_t>(unit), c) = 0.0f;
    }
    return ModelBundle(base.config(), std::move(w));
}

// Zeroes row `channel` of down_proj so that MLP_DOWN_OUT[channel] is always 0.
inline ModelBundle kill_down_channel(const ModelBundle& base, int layer, int channel) {
    ModelWeights w = base.weights();
    auto& lw = w.layers[static_cast<std::size_t>(layer)];
    for (std::size_t c = 0; c < lw.down_proj.cols; ++c) lw.down_proj(static_cast<std::size_t>(channel), c) = 0.0f;
    return ModelBundle(base.config(), std::move(w));
}

// Zeroes column `unit` of down_proj: the hidden unit is live but nothing reads it.
inline ModelBundle disconnect_hidden_unit(const ModelBundle& base, int layer, int unit) {
    ModelWeights w = base.weights();
    auto& lw = w.layers[static_cast<std::size_t>(layer)];
    for (std::size_t r = 0; r < lw.down_proj.rows; ++r) lw.down_proj(r, static_cast<std::size_t>(unit)) = 0.0f;
    return ModelBundle(base.config(), std::move(w));
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("lesion_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace lesion::test
