#include <doctest.h>

#include <cmath>

#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace lesion;
using namespace lesion::test;

namespace {

const ImportanceRanking& toy1l_ranking() {
    static const ImportanceRanking r = score_neurons(toy1l(), probe_for(toy1l()), NoiseConfig{});
    return r;
}

std::vector<NeuronId> ids(const ImportanceRanking& r) {
    std::vector<NeuronId> out;
    for (const auto& e : r.entries) out.push_back(e.id);
    return out;
}

}  // namespace

TEST_CASE("configuration is validated") {
    CHECK(resolve(SearchConfig{}, 512).max_n == 512);
    CHECK(resolve(SearchConfig{}, 5000).max_n == 1000);
    CHECK_THROWS_AS(resolve(SearchConfig{0.0, 1, 0}, 10), ConfigError);
    CHECK_THROWS_AS(resolve(SearchConfig{1.0, 0, 0}, 10), ConfigError);
    CHECK_THROWS_AS(resolve(SearchConfig{1.0, 1, 11}, 10), ConfigError);
}

TEST_CASE("a tiny threshold is crossed by the first neuron") {
    const auto& bundle = toy1l();
    const auto probe = probe_for(bundle);
    const auto r = greedy_search(bundle, probe, toy1l_ranking(), SearchConfig{1e-12, 1, 0});
    CHECK(r.converged);
    CHECK(r.n_star == 1);
    CHECK(r.masked_evaluations == 1);
    CHECK(r.critical_set == toy1l_ranking().top(1));
}

TEST_CASE("an unreachable threshold exhausts the budget") {
    const auto& bundle = toy1l();
    const auto probe = probe_for(bundle);
    const auto r = greedy_search(bundle, probe, toy1l_ranking(), SearchConfig{1e6, 4, 40});
    CHECK_FALSE(r.converged);
    CHECK(r.critical_set.empty());
    CHECK(r.phase_curve.size() == 10);
    CHECK(r.masked_evaluations == 10);
    CHECK(r.phase_curve.back().n == 40);
}

TEST_CASE("greedy search matches the straight-line oracle") {
    const auto& bundle = toy1l();
    const auto probe = probe_for(bundle);
    for (double eps : {0.05, 1.0}) {
        const auto r = greedy_search(bundle, probe, toy1l_ranking(), SearchConfig{eps, 1, 20});
        const auto o = oracle::greedy(bundle, probe.ids, ids(toy1l_ranking()), eps, 1, 20);
        CHECK(r.converged == o.converged);
        CHECK(r.n_star == o.n_star);
        CHECK(static_cast<int>(r.masked_evaluations) == o.evaluations);
        CHECK(std::fabs(r.delta_at_n_star.delta - o.delta) <= 1e-4);
    }
}

TEST_CASE("rankings must be permutations of the neuron space") {
    const auto& bundle = toy1l();
    ImportanceRanking bad = toy1l_ranking();
    bad.entries.pop_back();
    CHECK_THROWS_AS(greedy_search(bundle, probe_for(bundle), bad, {}), AddressingError);
    bad = toy1l_ranking();
    bad.entries[1] = bad.entries[0];
    CHECK_THROWS_AS(greedy_search(bundle, probe_for(bundle), bad, {}), AddressingError);
}

TEST_CASE("exhaustive search") {
    const auto& bundle = toy1l();
    const auto probe = probe_for(bundle);

    CHECK_FALSE(exhaustive_min_set(bundle, probe, {}, 3, 0.1).witness);

    const auto pool = toy1l_ranking().top(8);
    const auto ex = exhaustive_min_set(bundle, probe, pool, 3, 1e-12);
    const auto gr = greedy_search(bundle, probe, toy1l_ranking(), SearchConfig{1e-12, 1, 8});
    REQUIRE(ex.minimal_size());
    REQUIRE(gr.converged);
    CHECK(*ex.minimal_size() <= static_cast<std::size_t>(gr.n_star));

    const auto over = toy1l_ranking().top(21);
    CHECK_THROWS_AS(exhaustive_min_set(bundle, probe, over, 2, 1.0), BudgetError);
    CHECK_THROWS_AS(exhaustive_min_set(bundle, probe, pool, 5, 1.0), BudgetError);
}

TEST_CASE("a pool of dead neurons never qualifies") {
    auto bundle = generate_model(small_config(1, 16, 2, 32), 8);
    std::vector<NeuronId> pool;
    for (int u = 0; u < 8; ++u) {
        bundle = kill_hidden_unit(bundle, 0, u);
        pool.push_back(NeuronId{SiteId{0, SiteKind::MlpAct}, u});
    }
    const auto probe = text_tokens("nothing happens here", bundle.config());
    const auto r = exhaustive_min_set(bundle, probe, pool, 3, 1e-12);
    CHECK_FALSE(r.witness);
    CHECK(r.evaluated == 8 + 28 + 56);
}

TEST_CASE("phase curve") {
    const auto& bundle = toy1l();
    const auto probe = probe_for(bundle);
    const auto curve = phase_curve(bundle, probe, toy1l_ranking(), 12, 3);
    REQUIRE(curve.size() == 5);
    CHECK(curve[0].n == 0);
    CHECK(curve[0].delta.delta == 0.0);
    CHECK(curve[0].masked == perplexity(bundle, probe));
    for (const auto& p : curve) {
        CHECK(p.delta.delta == degradation(bundle, probe, toy1l_ranking().top(static_cast<std::size_t>(p.n))).delta);
    }

    // Greedy's curve is a prefix of the full curve.
    const auto full = phase_curve(bundle, probe, toy1l_ranking(), 10, 1);
    const auto g = greedy_search(bundle, probe, toy1l_ranking(), SearchConfig{0.05, 1, 10});
    REQUIRE(g.phase_curve.size() < full.size());
    for (std::size_t k = 0; k < g.phase_curve.size(); ++k) CHECK(g.phase_curve[k] == full[k + 1]);
}
