// Acceptance suite: one PASS/FAIL line per criterion, tolerances and time
// limits fixed below. Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lesion/random.hpp"
#include "lesion/xxhash64.hpp"
#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace lesion;
using namespace lesion::test;

namespace {

constexpr double kLogitTol = 1e-4;
constexpr double kImportanceTol = 1e-6;
constexpr double kPplRelTol = 1e-9;
constexpr double kUniformTol = 1e-4;
constexpr double kGradHalvingRelTol = 1e-2;

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            notes.push_back("FAILED: " + what);
        }
    }
    void note(const std::string& s) { notes.push_back(s); }
    void report(const oracle::Report& r) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s: main=%.12g oracle=%.12g abs=%.3g rel=%.3g tol=%.0e%s", r.quantity.c_str(),
                      r.main_value, r.oracle_value, r.abs_diff, r.rel_diff, r.tolerance, r.relative ? " (rel)" : "");
        require(r.pass, buf);
        if (r.pass) note(buf);
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// ---------------------------------------------------------------------------

Outcome exact_identities() {
    Outcome out;
    auto check = [&](const ModelBundle& bundle, const TokenSequence& tokens, const std::vector<NeuronId>& set,
                     const std::string& label) {
        const auto empty = degradation(bundle, tokens, {});
        out.require(empty.delta == 0.0 && !empty.infinite, label + ": delta of the empty set is not exactly 0");
        const auto clean = perplexity(bundle, tokens);
        const auto unit = perplexity(bundle, tokens, InterventionSpec::scale(set, 1.0));
        out.require(clean == unit, label + ": beta = 1 changed the perplexity report");
        const Matrix e = embed(bundle, tokens);
        out.require(forward(bundle, e).logits == forward(bundle, e, InterventionSpec::scale(set, 1.0)).logits,
                    label + ": beta = 1 changed the logits");
    };
    for (const auto* b : {&toy1l(), &toy2l()}) {
        check(*b, probe_for(*b), enumerate_neurons(b->config()), "fixture " + hex64(b->content_hash()));
    }
    for (std::uint64_t k = 0; k < 20; ++k) {
        CounterStream rng(2024, k);
        auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.next_word() % static_cast<std::uint64_t>(hi - lo + 1)); };
        ModelConfig c;
        c.n_layers = pick(1, 3);
        c.n_heads = pick(1, 4);
        c.d_model = c.n_heads * 2 * pick(1, 4);
        c.d_mlp = pick(4, 48);
        c.vocab_size = pick(256, 300);
        c.max_seq_len = 32;
        c.tie_embeddings = pick(0, 1) == 1;
        const auto bundle = generate_model(c, rng.next_word());
        TokenSequence tokens;
        const int len = pick(2, 24);
        for (int t = 0; t < len; ++t) tokens.ids.push_back(pick(0, c.vocab_size - 1));
        const auto all = enumerate_neurons(c);
        std::vector<NeuronId> set;
        const int n = pick(1, 12);
        for (int i = 0; i < n; ++i) set.push_back(all[static_cast<std::size_t>(pick(0, static_cast<int>(all.size()) - 1))]);
        check(bundle, tokens, set, "random config " + std::to_string(k));
    }
    out.note("2 fixtures + 20 random configs checked bitwise");
    return out;
}

Outcome uniform_perplexity() {
    Outcome out;
    ModelWeights w = toy2l().weights();
    std::fill(w.lm_head.data.begin(), w.lm_head.data.end(), 0.0f);
    const ModelBundle bundle(toy2l().config(), std::move(w));
    const auto r = perplexity(bundle, probe_for(bundle));
    out.report(oracle::compare("uniform ppl", r.ppl, 256.0, kUniformTol, false));
    return out;
}

Outcome dual_oracles() {
    Outcome out;
    for (const auto* b : {&toy1l(), &toy2l()}) {
        const auto& bundle = *b;
        const std::string tag = bundle.config().n_layers == 1 ? "toy1l " : "toy2l ";
        const auto probe = probe_for(bundle);
        const Matrix e = embed(bundle, probe);

        const Matrix logits = forward(bundle, e).logits;
        out.report(oracle::compare(tag + "logits max-abs", oracle::max_abs_diff(logits, oracle::forward(bundle, e)),
                                   0.0, kLogitTol, false));

        const NoiseConfig noise;  // alpha 5, K 100, seed 0
        const auto ranking = score_neurons(bundle, probe, noise);
        const auto sites = all_sites(bundle.config());
        const auto clean = forward(bundle, e, {}, sites).tape;
        std::vector<ActivationTape> noisy;
        for (int i = 0; i < noise.k_samples; ++i) {
            Matrix x = noise_sample(noise, i, e.rows, e.cols);
            for (std::size_t k = 0; k < x.data.size(); ++k) {
                x.data[k] = e.data[k] + static_cast<float>(noise.alpha) * x.data[k];
            }
            noisy.push_back(forward(bundle, x, {}, sites).tape);
        }
        const auto expected = oracle::importance(bundle.config(), clean, noisy);
        double worst = 0.0;
        for (const auto& entry : ranking.entries) {
            worst = std::max(worst, std::fabs(entry.score - expected[flat_index(bundle.config(), entry.id)]));
        }
        out.report(oracle::compare(tag + "importance max-abs", worst, 0.0, kImportanceTol, false));

        const auto clean_ppl = perplexity(bundle, probe);
        out.report(oracle::compare(tag + "ppl", clean_ppl.ppl,
                                   oracle::ppl(oracle::target_log_probs(
                                       [&] {
                                           std::vector<std::vector<double>> l(logits.rows);
                                           for (std::size_t t = 0; t < logits.rows; ++t) {
                                               for (std::size_t v = 0; v < logits.cols; ++v) l[t].push_back(logits(t, v));
                                           }
                                           return l;
                                       }(),
                                       probe.ids)),
                                   kPplRelTol, true));
    }
    return out;
}

Outcome greedy_contract() {
    Outcome out;
    const auto& bundle = toy2l();
    const auto probe = probe_for(bundle);
    const auto ranking = score_neurons(bundle, probe, NoiseConfig{});
    reset_forward_call_count();
    const auto r = greedy_search(bundle, probe, ranking, SearchConfig{});
    const auto calls = forward_call_count();
    out.require(r.converged, "greedy search did not converge");
    if (!r.converged) return out;
    const double before = degradation(bundle, probe, ranking.top(static_cast<std::size_t>(r.n_star - 1))).delta;
    out.note("n* = " + std::to_string(r.n_star) + ", delta(n*) = " + fmt("%.6f", r.delta_at_n_star.delta) +
             ", delta(n*-1) = " + fmt("%.6f", before) + ", forwards = " + std::to_string(calls));
    out.require(r.n_star == kToy2LayerNStar, "n* differs from the recorded " + std::to_string(kToy2LayerNStar));
    out.require(r.delta_at_n_star.crosses(1.0), "delta(n*) < 1");
    out.require(before < 1.0, "delta(n*-1) >= 1");
    out.require(calls <= static_cast<std::uint64_t>(r.n_star) + 1, "more than n*+1 full evaluations");

    std::vector<NeuronId> order;
    for (const auto& e : ranking.entries) order.push_back(e.id);
    const auto o = oracle::greedy(bundle, probe.ids, order, 1.0, 1, r.n_star + 2);
    out.require(o.converged && o.n_star == r.n_star, "straight-line oracle search disagrees on n*");
    return out;
}

Outcome exhaustive_dominance() {
    Outcome out;
    const auto& bundle = toy1l();
    const auto probe = probe_for(bundle);
    const double eps = 0.05;
    const auto ranking = score_neurons(bundle, probe, NoiseConfig{});
    const auto pool = ranking.top(12);
    const auto ex = exhaustive_min_set(bundle, probe, pool, 3, eps);
    const auto gr = greedy_search(bundle, probe, ranking, SearchConfig{eps, 1, 12});
    out.require(gr.converged, "greedy did not cross within the pool");
    out.require(ex.witness.has_value(), "no subset of size <= 3 crosses");
    if (!gr.converged || !ex.witness) return out;
    out.note("exhaustive minimal size " + std::to_string(*ex.minimal_size()) + " (" + std::to_string(ex.evaluated) +
             " subsets), greedy-in-pool " + std::to_string(gr.n_star));
    out.require(*ex.minimal_size() <= static_cast<std::size_t>(gr.n_star), "exhaustive minimum exceeds greedy size");
    return out;
}

Outcome determinism() {
    Outcome out;
    const auto root = scratch_dir("acceptance_det");
    const std::string args = std::string(" identify --model ") + fixture("toy2l.nlf").string() + " --probe " +
                             fixture("probe.txt").string() + " --corpus " + fixture("corpus.txt").string();
    for (const char* d : {"a", "b"}) {
        const std::string cmd = std::string(LESION_CLI_PATH) + args + " --out-dir " + (root / d).string() + " > /dev/null";
        out.require(std::system(cmd.c_str()) == 0, std::string("identify run ") + d + " failed");
    }
    const auto a = slurp(root / "a" / "report.json");
    out.require(!a.empty(), "report.json missing");
    out.require(a == slurp(root / "b" / "report.json"), "report.json differs between runs");
    for (const char* f : {"ranking.csv", "phase_curve.csv", "layers.csv"}) {
        out.require(slurp(root / "a" / f) == slurp(root / "b" / f), std::string(f) + " differs between runs");
    }

    const auto& bundle = toy2l();
    const auto stab = ranking_stability(bundle, probe_for(bundle), NoiseConfig{}, 5, 10);
    out.note("cross-seed top-10 Jaccard mean " + fmt("%.3f", stab.mean_jaccard) + " min " +
             fmt("%.3f", stab.min_jaccard) + ", Spearman mean " + fmt("%.3f", stab.mean_spearman) + " (5 seeds)");
    return out;
}

Outcome threshold_monotonicity() {
    Outcome out;
    ExperimentConfig cfg;
    cfg.model_path = fixture("toy2l.nlf");
    cfg.probe_path = fixture("probe.txt");
    cfg.out_dir = scratch_dir("acceptance_thr");
    reset_forward_call_count();
    const auto rows = run_threshold_table(cfg);
    const auto calls = forward_call_count();
    const int budget = resolve(cfg.search, neuron_count(toy2l().config())).max_n;

    std::uint64_t expected = static_cast<std::uint64_t>(cfg.noise.k_samples) + 1;
    int last = 0;
    std::string cells;
    for (const auto& r : rows) {
        expected += 1 + static_cast<std::uint64_t>(r.converged ? r.n_star : budget);
        cells += fmt("%g", r.epsilon) + "->" + (r.converged ? std::to_string(r.n_star) : std::to_string(budget) + "+") + " ";
        if (!r.converged) continue;
        out.require(r.n_star >= last, "n* decreases at epsilon " + fmt("%g", r.epsilon));
        last = r.n_star;
    }
    out.note(cells);
    out.require(rows.size() == kDefaultEpsilons.size(), "wrong number of rows");
    const std::string csv = slurp(cfg.out_dir / "threshold_table.csv");
    for (const auto& r : rows) {
        if (!r.converged) {
            out.require(csv.find(std::to_string(budget) + "+") != std::string::npos, "budget marker missing from CSV");
        }
    }
    out.note("forwards " + std::to_string(calls) + ", expected for one Stage-1 pass " + std::to_string(expected));
    out.require(calls == expected, "forward count does not match a single Stage-1 pass");
    return out;
}

Outcome baseline_harness() {
    Outcome out;
    const auto& bundle = toy2l();
    const auto probe = probe_for(bundle);
    const auto corpus = read_corpus(fixture("corpus.txt"), bundle.config());
    const auto clean = corpus_perplexity(bundle, corpus.lines);

    StrategyCurveOptions opts;
    opts.n_max = 20;
    opts.step = 5;
    for (Strategy s : kStrategies) {
        opts.trials = s == Strategy::Random ? 10 : 1;
        const auto curve = strategy_curve(bundle, probe, corpus.lines, s, opts);
        out.require(!curve.empty() && curve[0].n == 0 && curve[0].mean_ppl == clean.ppl,
                    std::string(strategy_name(s)) + " curve does not start at the clean corpus PPL");
        out.note(std::string(strategy_name(s)) + ": ppl(0) = " + fmt("%.6f", curve[0].mean_ppl) + ", ppl(20) = " +
                 fmt("%.6g", curve.back().mean_ppl));
    }

    reset_forward_call_count();
    const auto gm = rank_gradient_magnitude(bundle, probe, 1e-3);
    const auto calls = forward_call_count();
    out.require(calls == 2 * neuron_count(bundle.config()),
                "GM used " + std::to_string(calls) + " forwards, expected " + std::to_string(2 * neuron_count(bundle.config())));
    const auto half = rank_gradient_magnitude(bundle, probe, 5e-4);
    std::map<NeuronId, double> halved;
    for (const auto& e : half.entries) halved[e.id] = e.score;
    double worst = 0.0;
    for (std::size_t k = 0; k < 10; ++k) {
        const auto& e = gm.entries[k];
        worst = std::max(worst, std::fabs(e.score - halved[e.id]) / e.score);
    }
    out.report(oracle::compare("GM top-10 step-halving max rel change", worst, 0.0, kGradHalvingRelTol, false));
    return out;
}

Outcome beta_identities() {
    Outcome out;
    const auto& bundle = toy2l();
    out.require(bundle.content_hash() == kToy2LayerHash, "fixture hash changed");
    const auto probe = probe_for(bundle);
    const auto id = identify(bundle, probe, NoiseConfig{}, SearchConfig{});
    out.require(id.report.converged, "identify did not converge");
    const auto& set = id.report.critical_set;

    ExperimentConfig cfg;
    cfg.model_path = fixture("toy2l.nlf");
    cfg.probe_path = fixture("probe.txt");
    cfg.out_dir = scratch_dir("acceptance_beta");
    const auto rows = run_beta_sweep(cfg, set);
    out.require(rows.size() == 8, "expected 8 rows");
    const std::string csv = slurp(cfg.out_dir / "beta_sweep.csv");
    out.require(std::count(csv.begin(), csv.end(), '\n') == 9, "beta_sweep.csv does not hold header + 8 rows");

    std::string table;
    for (const auto& r : rows) {
        table += fmt("%g", r.beta) + ":" + fmt("%.4f", r.delta.delta) + " ";
        if (r.beta == 1.0) out.require(r.delta.delta == 0.0 && !r.delta.infinite, "beta = 1 row is not exactly 0");
        if (r.beta == 0.0) {
            const auto plain = degradation(bundle, probe, set);
            out.require(r.delta.delta == plain.delta && r.delta.infinite == plain.infinite,
                        "beta = 0 row differs from plain masking");
            for (const auto& other : rows) {
                out.require(other.beta == 0.0 || other.delta.delta <= r.delta.delta,
                            "beta = " + fmt("%g", other.beta) + " degrades more than masking");
            }
        }
    }
    out.note(table);
    return out;
}

Outcome format_round_trip() {
    Outcome out;
    const auto dir = scratch_dir("acceptance_nlf");
    for (const auto* b : {&toy1l(), &toy2l()}) {
        save_model(*b, dir / "copy.nlf");
        const auto back = load_model(dir / "copy.nlf");
        out.require(back.weights() == b->weights() && back.config().n_layers == b->config().n_layers,
                    "round trip changed the weights");
        out.require(encode_model(back) == encode_model(*b), "round trip changed the bytes");
    }

    const std::vector<std::byte> original = encode_model(toy1l());
    const auto layout = tensor_layout(toy1l().config());
    std::uint32_t json_len = 0;
    std::memcpy(&json_len, original.data() + 4, 4);
    const std::size_t body = 8 + json_len;

    auto refresh_digest = [](std::vector<std::byte>& bytes) {
        const std::uint64_t h = xxh64(std::span<const std::byte>(bytes.data(), bytes.size() - 8));
        for (int i = 0; i < 8; ++i) bytes[bytes.size() - 8 + i] = static_cast<std::byte>((h >> (8 * i)) & 0xff);
    };

    CounterStream rng(77, 0);
    auto below = [&](std::size_t n) { return static_cast<std::size_t>(rng.next_word() % n); };
    int rejected = 0;
    int named = 0;
    int nan_cases = 0;
    const int cases = 1000;
    for (int c = 0; c < cases; ++c) {
        std::vector<std::byte> bytes = original;
        std::string expect_name;
        switch (c % 5) {
            case 0:  // truncation
                bytes.resize(below(original.size()));
                break;
            case 1:  // bad magic
                bytes[below(4)] ^= static_cast<std::byte>(1 + below(255));
                break;
            case 2: {  // NaN or infinity injected, digest made consistent
                const std::size_t t = below(layout.size());
                std::size_t off = body;
                for (std::size_t k = 0; k < t; ++k) off += layout[k].rows * layout[k].cols * 4;
                off += 4 * below(layout[t].rows * layout[t].cols);
                const float bad = (c / 5) % 2 ? std::nanf("") : INFINITY;
                std::memcpy(bytes.data() + off, &bad, 4);
                refresh_digest(bytes);
                expect_name = layout[t].name;
                ++nan_cases;
                break;
            }
            case 3: {  // NaN injected, digest left stale
                const std::size_t off = body + 4 * below((original.size() - body - 8) / 4);
                const float bad = std::nanf("");
                std::memcpy(bytes.data() + off, &bad, 4);
                break;
            }
            default: {  // random byte flips anywhere, including the header
                const int flips = 1 + static_cast<int>(below(4));
                for (int f = 0; f < flips; ++f) bytes[below(bytes.size())] ^= static_cast<std::byte>(1 + below(255));
                break;
            }
        }
        try {
            decode_model(bytes);
            out.require(false, "fuzz case " + std::to_string(c) + " was accepted");
        } catch (const FormatError& e) {
            ++rejected;
            if (!expect_name.empty() && std::string(e.what()).find("'" + expect_name + "'") != std::string::npos) ++named;
        } catch (const std::exception& e) {
            out.require(false, "fuzz case " + std::to_string(c) + " raised a non-format error: " + e.what());
        }
    }
    out.note(std::to_string(rejected) + "/" + std::to_string(cases) + " rejected with a format error; " +
             std::to_string(named) + "/" + std::to_string(nan_cases) + " injections named their tensor");
    out.require(named == nan_cases, "some injected non-finite values were not attributed to their tensor");
    return out;
}

struct Criterion {
    int number;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "exact identities (empty set, beta = 1)", 10.0, exact_identities},
        {2, "uniform-model perplexity", 1.0, uniform_perplexity},
        {3, "dual-implementation oracles", 60.0, dual_oracles},
        {4, "greedy search contract", 300.0, greedy_contract},
        {5, "exhaustive-oracle dominance", 600.0, exhaustive_dominance},
        {6, "determinism", 120.0, determinism},
        {7, "threshold monotonicity", 600.0, threshold_monotonicity},
        {8, "baseline harness", 600.0, baseline_harness},
        {9, "beta-sweep identities", 300.0, beta_identities},
        {10, "format round trip and fuzzing", 30.0, format_round_trip},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        o.require(secs < c.limit_seconds, "runtime " + fmt("%.2f", secs) + " s exceeds " + fmt("%.0f", c.limit_seconds) + " s");
        if (!o.pass) ++failed;
        std::printf("[%s] criterion %2d: %s (%.2f s, limit %.0f s)\n", o.pass ? "PASS" : "FAIL", c.number, c.name, secs,
                    c.limit_seconds);
        for (const auto& n : o.notes) std::printf("         %s\n", n.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed;
}
