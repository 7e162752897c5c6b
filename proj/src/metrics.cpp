#include "lesion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>

#include "lesion/error.hpp"
#include "lesion/tokenizer.hpp"

namespace lesion {

std::vector<double> token_nll(const Matrix& logits, const TokenSequence& tokens, bool* underflow) {
    if (tokens.size() < 2) {
        throw InputError("perplexity needs at least 2 tokens, got " + std::to_string(tokens.size()));
    }
    if (logits.rows != tokens.size()) throw InputError("logits rows do not match sequence length");
    bool clamped = false;
    std::vector<double> out;
    out.reserve(tokens.size() - 1);
    for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
        const auto row = logits.row(t);
        double mx = -std::numeric_limits<double>::infinity();
        for (float v : row) mx = std::max(mx, static_cast<double>(v));
        double sum = 0.0;
        for (float v : row) sum += std::exp(static_cast<double>(v) - mx);
        const double log_z = mx + std::log(sum);
        const auto target = static_cast<std::size_t>(tokens.ids[t + 1]);
        double nll = log_z - static_cast<double>(row[target]);
        if (nll > kNllClamp) {
            nll = kNllClamp;
            clamped = true;
        }
        out.push_back(nll);
    }
    if (underflow) *underflow = clamped;
    return out;
}

namespace {

PerplexityReport finish(double total, std::size_t count, bool underflow) {
    PerplexityReport r;
    r.total_nll = total;
    r.n_predicted = count;
    r.mean_nll = total / static_cast<double>(count);
    r.underflow = underflow;
    r.ppl = underflow ? std::numeric_limits<double>::infinity() : std::exp(r.mean_nll);
    return r;
}

}  // namespace

PerplexityReport perplexity_from_logits(const Matrix& logits, const TokenSequence& tokens) {
    bool underflow = false;
    const auto nll = token_nll(logits, tokens, &underflow);
    double total = 0.0;
    for (double v : nll) total += v;
    return finish(total, nll.size(), underflow);
}

PerplexityReport perplexity(const ModelBundle& bundle, const TokenSequence& tokens,
                            const InterventionSpec& intervention) {
    if (tokens.size() < 2) {
        throw InputError("perplexity needs at least 2 tokens, got " + std::to_string(tokens.size()));
    }
    const auto result = forward(bundle, embed(bundle, tokens), intervention);
    return perplexity_from_logits(result.logits, tokens);
}

Degradation degradation_between(const PerplexityReport& original, const PerplexityReport& masked) {
    Degradation d;
    if (masked.underflow && !original.underflow) {
        d.infinite = true;
        d.delta = std::numeric_limits<double>::infinity();
        return d;
    }
    d.delta = (masked.mean_nll - original.mean_nll) / std::numbers::ln10;
    return d;
}

Degradation degradation(const ModelBundle& bundle, const TokenSequence& tokens,
                        const std::vector<NeuronId>& neuron_set) {
    const auto original = perplexity(bundle, tokens);
    if (neuron_set.empty()) return degradation_between(original, original);
    const auto masked = perplexity(bundle, tokens, InterventionSpec::mask(neuron_set));
    return degradation_between(original, masked);
}

Corpus read_corpus(const std::filesystem::path& path, const ModelConfig& config) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open corpus '" + path.string() + "'");
    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (line.size() < 2) {
            ++corpus.skipped;
            continue;
        }
        try {
            corpus.lines.push_back(tokenize(line, config));
        } catch (const LengthError& e) {
            throw LengthError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (corpus.lines.empty()) throw InputError("corpus '" + path.string() + "' has no scorable lines");
    return corpus;
}

PerplexityReport corpus_perplexity(const ModelBundle& bundle, std::span<const TokenSequence> lines,
                                   const InterventionSpec& intervention) {
    if (lines.empty()) throw InputError("corpus is empty");
    double total = 0.0;
    std::size_t count = 0;
    bool underflow = false;
    for (const auto& seq : lines) {
        const auto r = perplexity(bundle, seq, intervention);
        total += r.total_nll;
        count += r.n_predicted;
        underflow = underflow || r.underflow;
    }
    return finish(total, count, underflow);
}

}  // namespace lesion
