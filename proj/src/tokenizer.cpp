#include "lesion/tokenizer.hpp"

#include "lesion/error.hpp"

namespace lesion {

TokenSequence tokenize(std::string_view text, const ModelConfig& config) {
    if (config.vocab_size < 256) {
        throw ConfigError("byte-level tokenizer needs vocab_size >= 256, got " +
                          std::to_string(config.vocab_size));
    }
    if (text.empty()) throw InputError("cannot tokenize empty text");
    if (text.size() > static_cast<std::size_t>(config.max_seq_len)) {
        throw LengthError("text is " + std::to_string(text.size()) + " tokens, max_seq_len is " +
                          std::to_string(config.max_seq_len));
    }
    TokenSequence out;
    out.ids.reserve(text.size());
    for (char c : text) out.ids.push_back(static_cast<unsigned char>(c));
    return out;
}

std::string detokenize(const TokenSequence& tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (int id : tokens.ids) out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    return out;
}

}  // namespace lesion
