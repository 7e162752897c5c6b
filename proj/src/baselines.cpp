#include "lesion/baselines.hpp"

#include <cmath>

#include "lesion/error.hpp"
#include "lesion/random.hpp"
#include "lesion/search.hpp"

namespace lesion {

std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Random: return "random";
        case Strategy::ActMag: return "am";
        case Strategy::GradMag: return "gm";
        case Strategy::Perturbation: return "perturb";
    }
    return "random";
}

Strategy parse_strategy(std::string_view name) {
    for (Strategy s : kStrategies) {
        if (strategy_name(s) == name) return s;
    }
    throw ConfigError("unknown strategy '" + std::string(name) + "' (expected random|am|gm|perturb)");
}

ImportanceRanking rank_random(const ModelConfig& config, std::uint64_t seed) {
    auto ids = enumerate_neurons(config);
    CounterStream rng(seed, 0);
    for (std::size_t i = ids.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.next_word() % i);
        std::swap(ids[i - 1], ids[j]);
    }
    ImportanceRanking r;
    r.method = "random";
    r.entries.reserve(ids.size());
    for (const auto& id : ids) r.entries.push_back({id, 0.0});
    return r;
}

ImportanceRanking rank_activation_magnitude(const ModelBundle& bundle, const TokenSequence& tokens) {
    const auto tape = forward(bundle, embed(bundle, tokens), {}, all_sites(bundle.config())).tape;
    std::vector<double> scores;
    scores.reserve(neuron_count(bundle.config()));
    for (const SiteId& site : all_sites(bundle.config())) {
        const Matrix& a = tape.at(site);
        for (std::size_t i = 0; i < a.cols; ++i) {
            double acc = 0.0;
            for (std::size_t t = 0; t < a.rows; ++t) acc += std::abs(static_cast<double>(a(t, i)));
            scores.push_back(acc / static_cast<double>(a.rows));
        }
    }
    ImportanceRanking r;
    r.entries = sort_by_score(bundle.config(), scores);
    r.method = "activation_magnitude";
    r.probe_hash = probe_hash(tokens);
    r.model_hash = bundle.content_hash();
    return r;
}

ImportanceRanking rank_gradient_magnitude(const ModelBundle& bundle, const TokenSequence& tokens, double h) {
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("finite-difference step h must be > 0");
    if (tokens.size() < 2) throw InputError("gradient ranking needs at least 2 tokens");
    const Matrix x = embed(bundle, tokens);
    const auto ids = enumerate_neurons(bundle.config());
    std::vector<double> scores;
    scores.reserve(ids.size());
    for (const auto& id : ids) {
        const auto plus = perplexity_from_logits(forward(bundle, x, InterventionSpec::shift({id}, h)).logits, tokens);
        const auto minus = perplexity_from_logits(forward(bundle, x, InterventionSpec::shift({id}, -h)).logits, tokens);
        scores.push_back(std::abs(plus.mean_nll - minus.mean_nll) / (2.0 * h));
    }
    ImportanceRanking r;
    r.entries = sort_by_score(bundle.config(), scores);
    r.method = "gradient_magnitude";
    r.probe_hash = probe_hash(tokens);
    r.model_hash = bundle.content_hash();
    return r;
}

std::vector<StrategyPoint> ranking_curve(const ModelBundle& bundle, std::span<const TokenSequence> eval,
                                         std::span<const ImportanceRanking> rankings, int n_max, int step) {
    if (rankings.empty()) throw ConfigError("strategy curve needs at least one trial");
    if (step < 1) throw ConfigError("step must be >= 1");
    const auto total = neuron_count(bundle.config());
    if (n_max < 0 || static_cast<std::size_t>(n_max) > total) throw ConfigError("n_max must be in [0, |N|]");
    for (const auto& r : rankings) check_ranking(bundle.config(), r);

    const auto clean = corpus_perplexity(bundle, eval);
    std::vector<StrategyPoint> curve;
    curve.push_back({0, clean.ppl, clean.mean_nll, static_cast<int>(rankings.size()), clean.underflow});
    for (int n = step; n <= n_max; n += step) {
        // Shifted mean: identical trial values reproduce the value bit-exactly.
        double first = 0.0;
        double shift_sum = 0.0;
        bool underflow = false;
        for (std::size_t t = 0; t < rankings.size(); ++t) {
            const auto r = corpus_perplexity(bundle, eval,
                                             InterventionSpec::mask(rankings[t].top(static_cast<std::size_t>(n))));
            if (t == 0) {
                first = r.mean_nll;
            } else {
                shift_sum += r.mean_nll - first;
            }
            underflow = underflow || r.underflow;
        }
        const double mean_nll = first + shift_sum / static_cast<double>(rankings.size());
        const double ppl = underflow ? INFINITY : std::exp(mean_nll);
        curve.push_back({n, ppl, mean_nll, static_cast<int>(rankings.size()), underflow});
    }
    return curve;
}

std::vector<StrategyPoint> strategy_curve(const ModelBundle& bundle, const TokenSequence& probe,
                                          std::span<const TokenSequence> eval, Strategy strategy,
                                          const StrategyCurveOptions& opts) {
    if (opts.trials < 1) throw ConfigError("trials must be >= 1");
    std::vector<ImportanceRanking> rankings;
    switch (strategy) {
        case Strategy::Random:
            for (int t = 0; t < opts.trials; ++t) {
                rankings.push_back(rank_random(bundle.config(), opts.seed + static_cast<std::uint64_t>(t)));
            }
            break;
        case Strategy::ActMag: rankings.push_back(rank_activation_magnitude(bundle, probe)); break;
        case Strategy::GradMag: rankings.push_back(rank_gradient_magnitude(bundle, probe, opts.h)); break;
        case Strategy::Perturbation: rankings.push_back(score_neurons(bundle, probe, opts.noise)); break;
    }
    return ranking_curve(bundle, eval, rankings, opts.n_max, opts.step);
}

}  // namespace lesion
