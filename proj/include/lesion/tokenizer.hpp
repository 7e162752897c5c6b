#pragma once

#include <string>
#include <string_view>

#include "lesion/model.hpp"

namespace lesion {

// Byte-level: token id = byte value. Requires vocab_size >= 256.
TokenSequence tokenize(std::string_view text, const ModelConfig& config);
std::string detokenize(const TokenSequence& tokens);

}  // namespace lesion
