#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "lesion/importance.hpp"
#include "lesion/metrics.hpp"

namespace lesion {

enum class Strategy { Random, ActMag, GradMag, Perturbation };

inline constexpr std::array<Strategy, 4> kStrategies{Strategy::Random, Strategy::ActMag,
                                                     Strategy::GradMag, Strategy::Perturbation};

// "random", "am", "gm", "perturb"
std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

// Uniform permutation of the neuron space (Fisher-Yates on CounterStream(seed, 0));
// all scores are 0 and the order carries the ranking.
ImportanceRanking rank_random(const ModelConfig& config, std::uint64_t seed);

// Mean over positions of |activation| from one clean forward.
ImportanceRanking rank_activation_magnitude(const ModelBundle& bundle, const TokenSequence& tokens);

// Central difference of mean NLL under additive shifts of +-h on each channel,
// at every position: |NLL(+h) - NLL(-h)| / (2h). Exactly 2|N| forwards.
ImportanceRanking rank_gradient_magnitude(const ModelBundle& bundle, const TokenSequence& tokens,
                                          double h = 1e-3);

struct StrategyCurveOptions {
    int n_max = 100;
    int step = 1;
    int trials = 1;           // > 1 only changes RANDOM
    std::uint64_t seed = 0;   // RANDOM trial t uses seed + t
    NoiseConfig noise;        // PERTURBATION ranking
    double h = 1e-3;          // GRAD_MAG step
};

struct StrategyPoint {
    int n = 0;
    double mean_ppl = 0.0;  // exp of the trial mean of corpus mean NLL
    double mean_nll = 0.0;
    int trials = 0;
    bool underflow = false;  // some trial clamped a token NLL
};

// Rankings are computed on `probe`; each point masks the top-n of the
// strategy's ranking and scores `eval` (token-weighted corpus PPL).
// RANDOM averages in log space across trials.
std::vector<StrategyPoint> strategy_curve(const ModelBundle& bundle, const TokenSequence& probe,
                                          std::span<const TokenSequence> eval, Strategy strategy,
                                          const StrategyCurveOptions& opts);

// Curve for explicit rankings (one per trial).
std::vector<StrategyPoint> ranking_curve(const ModelBundle& bundle, std::span<const TokenSequence> eval,
                                         std::span<const ImportanceRanking> rankings, int n_max, int step);

}  // namespace lesion
