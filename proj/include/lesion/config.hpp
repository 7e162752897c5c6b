#pragma once

#include <cstddef>

namespace lesion {

struct ModelConfig {
    int n_layers = 1;
    int d_model = 8;
    int n_heads = 1;
    int d_mlp = 16;
    int vocab_size = 256;
    int max_seq_len = 512;
    double norm_eps = 1e-5;
    bool tie_embeddings = false;

    int head_dim() const { return d_model / n_heads; }

    bool operator==(const ModelConfig&) const = default;
};

// Throws ConfigError naming the first violated constraint.
void validate(const ModelConfig& config);

inline constexpr float kRopeTheta = 10000.0f;

}  // namespace lesion
