#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lesion/config.hpp"
#include "lesion/neuron.hpp"
#include "lesion/tensor.hpp"

namespace lesion {

struct LayerWeights {
    std::vector<float> attn_norm;  // [d_model]
    Matrix q_proj;                 // [d_model, d_model], rows are output channels
    Matrix k_proj;
    Matrix v_proj;
    Matrix o_proj;
    std::vector<float> mlp_norm;  // [d_model]
    Matrix gate_proj;             // [d_mlp, d_model]
    Matrix up_proj;               // [d_mlp, d_model]
    Matrix down_proj;             // [d_model, d_mlp]

    bool operator==(const LayerWeights&) const = default;
};

struct ModelWeights {
    Matrix embed_tokens;  // [vocab_size, d_model]
    std::vector<LayerWeights> layers;
    std::vector<float> final_norm;  // [d_model]
    Matrix lm_head;                 // [vocab_size, d_model]; empty when embeddings are tied

    bool operator==(const ModelWeights&) const = default;
};

// Borrowed view of one weight tensor in serialization order.
struct TensorView {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::span<const float> values;
};

// Names and shapes in serialization order for `config`.
std::vector<TensorView> tensor_layout(const ModelConfig& config);

// Immutable config + weights of a decoder-only transformer. Construction
// checks every shape against the config and rejects non-finite values.
class ModelBundle {
public:
    ModelBundle(ModelConfig config, ModelWeights weights);

    const ModelConfig& config() const { return config_; }
    const ModelWeights& weights() const { return weights_; }
    const Matrix& output_head() const {
        return config_.tie_embeddings ? weights_.embed_tokens : weights_.lm_head;
    }

    // XXH64 of the NLF1 serialization (the value stored in the file trailer).
    std::uint64_t content_hash() const { return content_hash_; }

    std::vector<TensorView> tensors() const;

private:
    ModelConfig config_;
    ModelWeights weights_;
    std::uint64_t content_hash_ = 0;
};

// Gaussian weights, N(0, 1/fan_in) per tensor (embedding rows are unit variance),
// norm gains 1. Tensor number j of tensor_layout draws from CounterStream(seed, j).
ModelBundle generate_model(const ModelConfig& config, std::uint64_t seed);

// Plants massive-activation channels of the kind observed in pretrained LLMs:
// a constant embedding component drives `channels` layer-0 MLP hidden units,
// each writing a large near-constant value into its own residual channel
// through down_proj. The final RMSNorm is then dominated by those channels
// (whose output-head columns are zeroed); with the norm gain raised, removing
// them lets the remaining channels drive sharp logits.
struct MassiveActivation {
    int channels = 1;
    float embed_bias = 1.0f;  // constant embedding value on the bias channel
    float gate_gain = 4.0f;   // gate_proj and up_proj weight from the bias channel
    float down_gain = 8.0f;   // down_proj weight into each massive channel
    float head_gain = 8.0f;   // final norm gain
    std::uint64_t seed = 0;   // picks channels and hidden units
};

struct PlantedSite {
    int bias_channel = 0;
    std::vector<int> residual_channels;
    std::vector<int> hidden_units;
};

ModelBundle plant_massive_activation(const ModelBundle& base, const MassiveActivation& params,
                                     PlantedSite* planted = nullptr);

// Token ids must be < vocab_size and the sequence 1..max_seq_len long.
struct TokenSequence {
    std::vector<int> ids;

    std::size_t size() const { return ids.size(); }
    bool operator==(const TokenSequence&) const = default;
};

void check_tokens(const ModelConfig& config, const TokenSequence& tokens);

// Row t is embed_tokens[tokens[t]]; no positional term.
Matrix embed(const ModelBundle& bundle, const TokenSequence& tokens);

using ActivationTape = std::map<SiteId, Matrix>;

struct ForwardResult {
    Matrix logits;  // [T, vocab_size]
    ActivationTape tape;
};

// Pre-norm decoder forward with rotary attention and SiLU-gated MLP.
// Interventions rewrite their channels at all positions as the activation is
// produced; captured activations are post-intervention.
ForwardResult forward(const ModelBundle& bundle, const Matrix& embeddings,
                      const InterventionSpec& intervention = {},
                      std::span<const SiteId> capture = {});

// Process-wide count of forward() calls, for evaluation-budget checks.
std::uint64_t forward_call_count();
void reset_forward_call_count();

}  // namespace lesion
