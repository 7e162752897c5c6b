#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "lesion/importance.hpp"
#include "lesion/metrics.hpp"

namespace lesion {

struct SearchConfig {
    double epsilon = 1.0;
    int step = 1;
    int max_n = 0;  // 0 selects min(|N|, 1000)
};

inline constexpr int kDefaultSearchBudget = 1000;

// Fills in the default budget and checks epsilon > 0, step >= 1, max_n <= |N|.
SearchConfig resolve(const SearchConfig& cfg, std::size_t n_neurons);

struct CurvePoint {
    int n = 0;
    Degradation delta;
    PerplexityReport masked;

    bool operator==(const CurvePoint& o) const {
        return n == o.n && delta.delta == o.delta.delta && delta.infinite == o.delta.infinite &&
               masked == o.masked;
    }
};

struct CriticalSetReport {
    std::vector<NeuronId> critical_set;  // top-n_star prefix; empty when not converged
    int n_star = 0;
    Degradation delta_at_n_star;
    PerplexityReport original;
    PerplexityReport masked;            // at n_star, or at the last evaluated prefix
    std::vector<CurvePoint> phase_curve;  // n = step, 2*step, ...
    bool converged = false;
    SearchConfig config;
    std::size_t masked_evaluations = 0;
};

// Checks that `ranking` is a permutation of this model's neuron space.
void check_ranking(const ModelConfig& config, const ImportanceRanking& ranking);

// Masks growing prefixes of the ranking and stops at the first n with delta >= epsilon.
CriticalSetReport greedy_search(const ModelBundle& bundle, const TokenSequence& tokens,
                                const ImportanceRanking& ranking, const SearchConfig& cfg);

struct ExhaustiveResult {
    std::optional<std::vector<NeuronId>> witness;  // first qualifying subset, size-then-lexicographic
    std::size_t evaluated = 0;

    std::optional<std::size_t> minimal_size() const {
        if (!witness) return std::nullopt;
        return witness->size();
    }
};

inline constexpr std::size_t kExhaustivePoolLimit = 20;
inline constexpr int kExhaustiveSizeLimit = 4;

// Enumerates subsets of `pool` (in pool order) of size 1..max_size.
ExhaustiveResult exhaustive_min_set(const ModelBundle& bundle, const TokenSequence& tokens,
                                    const std::vector<NeuronId>& pool, int max_size, double epsilon);

// Complete prefix-masking curve n = 0, step, 2*step, ... <= n_max; never stops early.
std::vector<CurvePoint> phase_curve(const ModelBundle& bundle, const TokenSequence& tokens,
                                    const ImportanceRanking& ranking, int n_max, int step);

}  // namespace lesion
