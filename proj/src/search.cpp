#include "lesion/search.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "lesion/error.hpp"

namespace lesion {

SearchConfig resolve(const SearchConfig& cfg, std::size_t n_neurons) {
    SearchConfig out = cfg;
    if (!(out.epsilon > 0.0) || std::isnan(out.epsilon)) throw ConfigError("epsilon must be > 0");
    if (out.step < 1) throw ConfigError("step must be >= 1");
    if (out.max_n == 0) out.max_n = static_cast<int>(std::min<std::size_t>(n_neurons, kDefaultSearchBudget));
    if (out.max_n < 1 || static_cast<std::size_t>(out.max_n) > n_neurons) {
        throw ConfigError("max_n must be in [1, |N|=" + std::to_string(n_neurons) + "], got " +
                          std::to_string(out.max_n));
    }
    return out;
}

void check_ranking(const ModelConfig& config, const ImportanceRanking& ranking) {
    if (ranking.entries.size() != neuron_count(config)) {
        throw AddressingError("ranking has " + std::to_string(ranking.entries.size()) +
                              " neurons, model has " + std::to_string(neuron_count(config)));
    }
    std::vector<bool> seen(ranking.entries.size(), false);
    for (const auto& e : ranking.entries) {
        const auto k = flat_index(config, e.id);
        if (seen[k]) throw AddressingError("ranking lists neuron " + to_string(e.id) + " twice");
        seen[k] = true;
    }
}

namespace {

CurvePoint evaluate_prefix(const ModelBundle& bundle, const TokenSequence& tokens,
                           const ImportanceRanking& ranking, const PerplexityReport& original, int n) {
    CurvePoint p;
    p.n = n;
    p.masked = perplexity(bundle, tokens, InterventionSpec::mask(ranking.top(static_cast<std::size_t>(n))));
    p.delta = degradation_between(original, p.masked);
    return p;
}

}  // namespace

CriticalSetReport greedy_search(const ModelBundle& bundle, const TokenSequence& tokens,
                                const ImportanceRanking& ranking, const SearchConfig& cfg) {
    check_ranking(bundle.config(), ranking);
    CriticalSetReport report;
    report.config = resolve(cfg, ranking.entries.size());
    report.original = perplexity(bundle, tokens);
    report.masked = report.original;
    for (int n = report.config.step; n <= report.config.max_n; n += report.config.step) {
        const CurvePoint p = evaluate_prefix(bundle, tokens, ranking, report.original, n);
        ++report.masked_evaluations;
        report.phase_curve.push_back(p);
        report.masked = p.masked;
        if (p.delta.crosses(report.config.epsilon)) {
            report.converged = true;
            report.n_star = n;
            report.delta_at_n_star = p.delta;
            report.critical_set = ranking.top(static_cast<std::size_t>(n));
            break;
        }
    }
    if (!report.converged && !report.phase_curve.empty()) {
        report.delta_at_n_star = report.phase_curve.back().delta;
    }
    return report;
}

ExhaustiveResult exhaustive_min_set(const ModelBundle& bundle, const TokenSequence& tokens,
                                    const std::vector<NeuronId>& pool, int max_size, double epsilon) {
    if (pool.size() > kExhaustivePoolLimit) {
        throw BudgetError("exhaustive search pool of " + std::to_string(pool.size()) +
                          " exceeds the limit of " + std::to_string(kExhaustivePoolLimit));
    }
    if (max_size > kExhaustiveSizeLimit) {
        throw BudgetError("exhaustive search max_size " + std::to_string(max_size) +
                          " exceeds the limit of " + std::to_string(kExhaustiveSizeLimit));
    }
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    if (std::set<NeuronId>(pool.begin(), pool.end()).size() != pool.size()) {
        throw InputError("exhaustive search pool contains duplicates");
    }
    for (const auto& id : pool) check_address(bundle.config(), id);

    ExhaustiveResult result;
    if (pool.empty() || max_size < 1) return result;
    const auto original = perplexity(bundle, tokens);
    const int n = static_cast<int>(pool.size());
    for (int size = 1; size <= std::min(max_size, n); ++size) {
        std::vector<int> idx(static_cast<std::size_t>(size));
        for (int i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = i;
        while (true) {
            std::vector<NeuronId> subset;
            for (int i : idx) subset.push_back(pool[static_cast<std::size_t>(i)]);
            const auto masked = perplexity(bundle, tokens, InterventionSpec::mask(subset));
            ++result.evaluated;
            if (degradation_between(original, masked).crosses(epsilon)) {
                result.witness = std::move(subset);
                return result;
            }
            // next combination in lexicographic order
            int pos = size - 1;
            while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - size + pos) --pos;
            if (pos < 0) break;
            ++idx[static_cast<std::size_t>(pos)];
            for (int i = pos + 1; i < size; ++i) {
                idx[static_cast<std::size_t>(i)] = idx[static_cast<std::size_t>(i - 1)] + 1;
            }
        }
    }
    return result;
}

std::vector<CurvePoint> phase_curve(const ModelBundle& bundle, const TokenSequence& tokens,
                                    const ImportanceRanking& ranking, int n_max, int step) {
    check_ranking(bundle.config(), ranking);
    if (step < 1) throw ConfigError("step must be >= 1");
    if (n_max < 0 || static_cast<std::size_t>(n_max) > ranking.entries.size()) {
        throw ConfigError("n_max must be in [0, |N|]");
    }
    const auto original = perplexity(bundle, tokens);
    std::vector<CurvePoint> curve;
    curve.push_back(CurvePoint{0, degradation_between(original, original), original});
    for (int n = step; n <= n_max; n += step) {
        curve.push_back(evaluate_prefix(bundle, tokens, ranking, original, n));
    }
    return curve;
}

}  // namespace lesion
