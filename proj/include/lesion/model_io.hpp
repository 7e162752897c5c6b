#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "lesion/model.hpp"

namespace lesion {

// NLF1 layout (all integers little-endian):
//   [0, 4)    magic "NLF1"
//   [4, 8)    u32 byte length L of the JSON config block
//   [8, 8+L)  UTF-8 JSON: n_layers, d_model, n_heads, d_mlp, vocab_size,
//             max_seq_len, norm_eps, tie_embeddings, tensor_order
//   ...       each tensor of tensor_order, row-major IEEE-754 binary32
//   last 8    u64 XXH64 (seed 0) of every preceding byte
inline constexpr char kNlfMagic[4] = {'N', 'L', 'F', '1'};

// Everything except the trailing digest.
std::vector<std::byte> encode_payload(const ModelConfig& config,
                                      const std::vector<TensorView>& tensors);

std::vector<std::byte> encode_model(const ModelBundle& bundle);

// Throws FormatError (naming the tensor where relevant) on any defect.
ModelBundle decode_model(std::span<const std::byte> bytes);

void save_model(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

}  // namespace lesion
