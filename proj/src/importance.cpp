#include "lesion/importance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "lesion/error.hpp"
#include "lesion/random.hpp"
#include "lesion/xxhash64.hpp"

namespace lesion {

std::string_view reduction_name(PositionReduction r) {
    switch (r) {
        case PositionReduction::Mean: return "mean";
        case PositionReduction::Max: return "max";
        case PositionReduction::Last: return "last";
    }
    return "mean";
}

PositionReduction parse_reduction(std::string_view name) {
    if (name == "mean") return PositionReduction::Mean;
    if (name == "max") return PositionReduction::Max;
    if (name == "last") return PositionReduction::Last;
    throw ConfigError("unknown position reduction '" + std::string(name) + "'");
}

void validate(const NoiseConfig& noise) {
    if (!(noise.alpha > 0.0) || !std::isfinite(noise.alpha)) {
        throw ConfigError("noise scale alpha must be > 0");
    }
    if (noise.k_samples < 1) throw ConfigError("k_samples must be >= 1");
}

std::vector<NeuronId> ImportanceRanking::top(std::size_t n) const {
    n = std::min(n, entries.size());
    std::vector<NeuronId> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(entries[i].id);
    return out;
}

std::vector<RankedNeuron> sort_by_score(const ModelConfig& config, std::span<const double> scores) {
    const auto ids = enumerate_neurons(config);
    if (scores.size() != ids.size()) throw AddressingError("score vector does not cover the neuron space");
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<RankedNeuron> out;
    out.reserve(ids.size());
    for (std::size_t i : order) out.push_back({ids[i], scores[i]});
    return out;
}

std::uint64_t probe_hash(const TokenSequence& tokens) {
    const bool bytes = std::all_of(tokens.ids.begin(), tokens.ids.end(), [](int id) { return id >= 0 && id < 256; });
    std::vector<std::byte> buf;
    for (int id : tokens.ids) {
        const auto u = static_cast<std::uint32_t>(id);
        if (bytes) {
            buf.push_back(static_cast<std::byte>(u));
        } else {
            for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::byte>((u >> (8 * i)) & 0xFF));
        }
    }
    return xxh64(buf);
}

Matrix noise_sample(const NoiseConfig& noise, int index, std::size_t rows, std::size_t cols) {
    Matrix eps(rows, cols);
    CounterStream rng(noise.seed, static_cast<std::uint64_t>(index));
    rng.fill_normal(eps.data);
    return eps;
}

std::vector<double> tape_deviation(const ModelConfig& config, const ActivationTape& clean,
                                   const ActivationTape& noisy, PositionReduction reduction) {
    std::vector<double> out;
    out.reserve(neuron_count(config));
    for (const SiteId& site : all_sites(config)) {
        const auto a = clean.find(site);
        const auto b = noisy.find(site);
        if (a == clean.end() || b == noisy.end()) {
            throw AddressingError("activation tape is missing a site");
        }
        const Matrix& ca = a->second;
        const Matrix& na = b->second;
        const std::size_t T = ca.rows;
        for (std::size_t i = 0; i < ca.cols; ++i) {
            double acc = 0.0;
            switch (reduction) {
                case PositionReduction::Mean:
                    for (std::size_t t = 0; t < T; ++t) {
                        acc += std::abs(static_cast<double>(ca(t, i)) - static_cast<double>(na(t, i)));
                    }
                    acc /= static_cast<double>(T);
                    break;
                case PositionReduction::Max:
                    for (std::size_t t = 0; t < T; ++t) {
                        acc = std::max(acc, std::abs(static_cast<double>(ca(t, i)) - static_cast<double>(na(t, i))));
                    }
                    break;
                case PositionReduction::Last:
                    acc = std::abs(static_cast<double>(ca(T - 1, i)) - static_cast<double>(na(T - 1, i)));
                    break;
            }
            out.push_back(acc);
        }
    }
    return out;
}

ActivationTape capture_all(const ModelBundle& bundle, const Matrix& embeddings) {
    const auto sites = all_sites(bundle.config());
    return forward(bundle, embeddings, {}, sites).tape;
}

std::vector<double> sample_deviation(const ModelBundle& bundle, const Matrix& embeddings,
                                     const ActivationTape& clean, const NoiseConfig& noise, int index) {
    Matrix noisy = noise_sample(noise, index, embeddings.rows, embeddings.cols);
    const auto alpha = static_cast<float>(noise.alpha);
    for (std::size_t k = 0; k < noisy.data.size(); ++k) {
        noisy.data[k] = embeddings.data[k] + alpha * noisy.data[k];
    }
    const auto sites = all_sites(bundle.config());
    const auto tape = forward(bundle, noisy, {}, sites).tape;
    return tape_deviation(bundle.config(), clean, tape, noise.reduction);
}

std::vector<double> importance_scores(const ModelBundle& bundle, const TokenSequence& tokens,
                                      const NoiseConfig& noise) {
    validate(noise);
    const Matrix x = embed(bundle, tokens);
    const ActivationTape clean = capture_all(bundle, x);
    std::vector<double> sum(neuron_count(bundle.config()), 0.0);
    for (int i = 0; i < noise.k_samples; ++i) {
        const auto dev = sample_deviation(bundle, x, clean, noise, i);
        for (std::size_t s = 0; s < sum.size(); ++s) sum[s] += dev[s];
    }
    for (double& v : sum) v /= static_cast<double>(noise.k_samples);
    return sum;
}

ImportanceRanking score_neurons(const ModelBundle& bundle, const TokenSequence& tokens,
                                const NoiseConfig& noise) {
    const auto scores = importance_scores(bundle, tokens, noise);
    ImportanceRanking ranking;
    ranking.entries = sort_by_score(bundle.config(), scores);
    ranking.method = "perturbation";
    ranking.noise = noise;
    ranking.probe_hash = probe_hash(tokens);
    ranking.model_hash = bundle.content_hash();
    return ranking;
}

double jaccard_top_n(const ImportanceRanking& a, const ImportanceRanking& b, std::size_t n) {
    const auto ta = a.top(n);
    const auto tb = b.top(n);
    if (ta.empty() && tb.empty()) return 1.0;
    std::set<NeuronId> sa(ta.begin(), ta.end());
    std::size_t inter = 0;
    for (const auto& id : tb) inter += sa.count(id);
    const std::size_t uni = sa.size() + tb.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j);
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) throw InputError("spearman needs equal, non-empty inputs");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return saa == sbb ? 1.0 : 0.0;
    return sab / std::sqrt(saa * sbb);
}

StabilityReport ranking_stability(const ModelBundle& bundle, const TokenSequence& tokens,
                                  const NoiseConfig& noise, std::span<const std::uint64_t> seeds,
                                  std::size_t top_n) {
    if (seeds.size() < 2) throw ConfigError("ranking stability needs at least 2 seeds");
    StabilityReport report;
    report.seeds.assign(seeds.begin(), seeds.end());
    report.top_n = top_n;
    std::vector<std::vector<double>> scores;
    std::vector<ImportanceRanking> rankings;
    for (std::uint64_t seed : seeds) {
        NoiseConfig cfg = noise;
        cfg.seed = seed;
        scores.push_back(importance_scores(bundle, tokens, cfg));
        ImportanceRanking r;
        r.entries = sort_by_score(bundle.config(), scores.back());
        rankings.push_back(std::move(r));
    }
    report.min_jaccard = 1.0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        for (std::size_t j = i + 1; j < seeds.size(); ++j) {
            const double jac = jaccard_top_n(rankings[i], rankings[j], top_n);
            report.jaccard.push_back(jac);
            report.spearman.push_back(spearman(scores[i], scores[j]));
            report.min_jaccard = std::min(report.min_jaccard, jac);
        }
    }
    const double pairs = static_cast<double>(report.jaccard.size());
    report.mean_jaccard = std::accumulate(report.jaccard.begin(), report.jaccard.end(), 0.0) / pairs;
    report.mean_spearman = std::accumulate(report.spearman.begin(), report.spearman.end(), 0.0) / pairs;
    return report;
}

StabilityReport ranking_stability(const ModelBundle& bundle, const TokenSequence& tokens,
                                  const NoiseConfig& noise, int n_seeds, std::size_t top_n) {
    if (n_seeds < 2) throw ConfigError("ranking stability needs n_seeds >= 2");
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < n_seeds; ++i) seeds.push_back(noise.seed + static_cast<std::uint64_t>(i));
    return ranking_stability(bundle, tokens, noise, seeds, top_n);
}

}  // namespace lesion
