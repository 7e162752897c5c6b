#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lesion/model.hpp"

namespace lesion {

// How |A_clean - A_noisy| over sequence positions collapses to one number per
// neuron and sample. Mean is the default; the others are exposed for comparison.
enum class PositionReduction { Mean, Max, Last };

std::string_view reduction_name(PositionReduction r);
PositionReduction parse_reduction(std::string_view name);

struct NoiseConfig {
    double alpha = 5.0;
    int k_samples = 100;
    std::uint64_t seed = 0;
    PositionReduction reduction = PositionReduction::Mean;
};

void validate(const NoiseConfig& noise);

struct RankedNeuron {
    NeuronId id;
    double score = 0.0;

    bool operator==(const RankedNeuron&) const = default;
};

struct ImportanceRanking {
    std::vector<RankedNeuron> entries;  // descending score, canonical order on ties
    std::string method;                 // "perturbation", "random", "activation_magnitude", ...
    NoiseConfig noise;                  // meaningful for "perturbation" only
    std::uint64_t probe_hash = 0;
    std::uint64_t model_hash = 0;

    std::vector<NeuronId> top(std::size_t n) const;
};

// Sorts neurons by descending score; `scores` is indexed like enumerate_neurons.
std::vector<RankedNeuron> sort_by_score(const ModelConfig& config, std::span<const double> scores);

// Hash of the probe token ids (XXH64 of the byte values, one byte per id when
// every id < 256, otherwise 4 little-endian bytes per id).
std::uint64_t probe_hash(const TokenSequence& tokens);

// Standard-normal noise for Monte Carlo sample `index`, shape (T, d_model),
// drawn from CounterStream(noise.seed, index) in row-major order.
Matrix noise_sample(const NoiseConfig& noise, int index, std::size_t rows, std::size_t cols);

// Per-neuron position-reduced |clean - noisy|, indexed like enumerate_neurons.
std::vector<double> tape_deviation(const ModelConfig& config, const ActivationTape& clean,
                                   const ActivationTape& noisy, PositionReduction reduction);

// Clean tape, one forward with every site captured.
ActivationTape capture_all(const ModelBundle& bundle, const Matrix& embeddings);

// Deviation of Monte Carlo sample `index` against a precomputed clean tape.
std::vector<double> sample_deviation(const ModelBundle& bundle, const Matrix& embeddings,
                                     const ActivationTape& clean, const NoiseConfig& noise, int index);

// Imp(s) = (1/K) sum_i deviation_i(s), accumulated in sample order.
std::vector<double> importance_scores(const ModelBundle& bundle, const TokenSequence& tokens,
                                      const NoiseConfig& noise);

ImportanceRanking score_neurons(const ModelBundle& bundle, const TokenSequence& tokens,
                                const NoiseConfig& noise);

struct StabilityReport {
    std::vector<std::uint64_t> seeds;
    std::size_t top_n = 0;
    std::vector<double> jaccard;   // one per unordered seed pair, (0,1), (0,2), ...
    std::vector<double> spearman;  // rank correlation of full score vectors, same pairs
    double mean_jaccard = 0.0;
    double min_jaccard = 0.0;
    double mean_spearman = 0.0;
};

StabilityReport ranking_stability(const ModelBundle& bundle, const TokenSequence& tokens,
                                  const NoiseConfig& noise, std::span<const std::uint64_t> seeds,
                                  std::size_t top_n);

// Seeds noise.seed, noise.seed + 1, ..., noise.seed + n_seeds - 1.
StabilityReport ranking_stability(const ModelBundle& bundle, const TokenSequence& tokens,
                                  const NoiseConfig& noise, int n_seeds, std::size_t top_n);

double jaccard_top_n(const ImportanceRanking& a, const ImportanceRanking& b, std::size_t n);
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace lesion
