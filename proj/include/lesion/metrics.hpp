#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "lesion/model.hpp"

namespace lesion {

// Per-token negative log-likelihood is clamped here (probability below e^-80)
// and the report is flagged as underflowed.
inline constexpr double kNllClamp = 80.0;

// Teacher-forced perplexity over the T-1 predicted tokens of a sequence.
struct PerplexityReport {
    double ppl = 1.0;       // exp(mean_nll); +inf when `underflow`
    double mean_nll = 0.0;  // nats per predicted token, with clamped terms
    double total_nll = 0.0;
    std::size_t n_predicted = 0;
    bool underflow = false;

    bool operator==(const PerplexityReport&) const = default;
};

// Log10 perplexity ratio, masked over original.
struct Degradation {
    double delta = 0.0;     // +inf when `infinite`
    bool infinite = false;  // masked side underflowed while the original did not

    bool crosses(double epsilon) const { return infinite || delta >= epsilon; }
};

// -log softmax(logits[t])[tokens[t+1]] for t = 0..T-2, computed in double with
// max subtraction; each term clamped at kNllClamp. Sets *underflow if any clamp hit.
std::vector<double> token_nll(const Matrix& logits, const TokenSequence& tokens, bool* underflow = nullptr);

PerplexityReport perplexity_from_logits(const Matrix& logits, const TokenSequence& tokens);

PerplexityReport perplexity(const ModelBundle& bundle, const TokenSequence& tokens,
                            const InterventionSpec& intervention = {});

Degradation degradation_between(const PerplexityReport& original, const PerplexityReport& masked);

// Original vs. beta = 0 on `neuron_set`. The empty set yields exactly 0.
Degradation degradation(const ModelBundle& bundle, const TokenSequence& tokens,
                        const std::vector<NeuronId>& neuron_set);

// One evaluation sequence per non-blank line. Lines of a single byte have no
// predicted token and are dropped (counted in `skipped`).
struct Corpus {
    std::vector<TokenSequence> lines;
    std::size_t skipped = 0;
};

Corpus read_corpus(const std::filesystem::path& path, const ModelConfig& config);

// Corpus PPL is exp of the token-weighted mean NLL across lines.
PerplexityReport corpus_perplexity(const ModelBundle& bundle, std::span<const TokenSequence> lines,
                                   const InterventionSpec& intervention = {});

}  // namespace lesion
