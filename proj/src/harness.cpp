#include "lesion/harness.hpp"

#include <fstream>
#include <sstream>

#include "lesion/error.hpp"
#include "lesion/model_io.hpp"
#include "lesion/report.hpp"
#include "lesion/tokenizer.hpp"

namespace lesion {

void check_paths(const ExperimentConfig& cfg) {
    auto need = [](const std::filesystem::path& p, const char* what) {
        if (p.empty()) throw ConfigError(std::string(what) + " path is not set");
        if (!std::filesystem::exists(p)) {
            throw InputError(std::string(what) + " '" + p.string() + "' does not exist");
        }
    };
    need(cfg.model_path, "model");
    need(cfg.probe_path, "probe");
    if (cfg.corpus_path) need(*cfg.corpus_path, "corpus");
}

std::string read_probe_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open probe '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    if (!text.empty() && text.back() == '\n') text.pop_back();
    if (!text.empty() && text.back() == '\r') text.pop_back();
    return text;
}

TokenSequence read_probe(const std::filesystem::path& path, const ModelConfig& config) {
    auto tokens = tokenize(read_probe_text(path), config);
    if (tokens.size() < 2) {
        throw InputError("probe '" + path.string() + "' has fewer than 2 tokens");
    }
    return tokens;
}

std::vector<LayerCount> layer_distribution(const ModelConfig& config, const std::vector<NeuronId>& set) {
    std::vector<LayerCount> counts(static_cast<std::size_t>(config.n_layers));
    for (int l = 0; l < config.n_layers; ++l) counts[static_cast<std::size_t>(l)].layer = l;
    for (const auto& id : set) {
        check_address(config, id);
        auto& c = counts[static_cast<std::size_t>(id.layer())];
        if (id.kind() == SiteKind::MlpDownOut) {
            ++c.down_proj;
        } else {
            ++c.other;
        }
    }
    return counts;
}

std::string layer_distribution_csv(const std::vector<LayerCount>& counts) {
    std::ostringstream out;
    out << "layer,down_proj,other,total\n";
    for (const auto& c : counts) {
        out << c.layer << ',' << c.down_proj << ',' << c.other << ',' << c.down_proj + c.other << '\n';
    }
    return out.str();
}

Identification identify(const ModelBundle& bundle, const TokenSequence& probe, const NoiseConfig& noise,
                        const SearchConfig& search) {
    if (probe.size() < 2) throw InputError("probe must have at least 2 tokens");
    Identification id;
    id.ranking = score_neurons(bundle, probe, noise);
    id.report = greedy_search(bundle, probe, id.ranking, search);
    id.layers = layer_distribution(bundle.config(), id.report.critical_set);
    return id;
}

nlohmann::json report_json(const Identification& id, const ModelBundle& bundle, const TokenSequence& probe,
                           const ExperimentConfig& cfg) {
    const auto& r = id.report;
    nlohmann::json j;
    j["format"] = "lesion.critical_set.v1";
    j["model"] = {{"path", cfg.model_path.generic_string()},
                  {"content_hash", hex64(bundle.content_hash())},
                  {"n_layers", bundle.config().n_layers},
                  {"d_model", bundle.config().d_model},
                  {"d_mlp", bundle.config().d_mlp},
                  {"neuron_count", neuron_count(bundle.config())}};
    j["probe"] = {{"path", cfg.probe_path.generic_string()},
                  {"hash", hex64(probe_hash(probe))},
                  {"tokens", probe.size()},
                  {"predicted_tokens", probe.size() - 1}};
    j["config"] = {{"noise", to_json(id.ranking.noise)}, {"search", to_json(r.config)}};
    j["conventions"] = {
        {"neuron_sites", {"mlp_down_out", "mlp_act", "attn_o_out"}},
        {"excluded_channels", "embedding and norm channels are not neurons"},
        {"perplexity_positions", "mean over the T-1 predicted tokens"},
        {"nll_clamp_nats", kNllClamp},
        {"delta_units", "log10"},
    };
    j["converged"] = r.converged;
    j["n_star"] = r.converged ? nlohmann::json(r.n_star) : nlohmann::json(nullptr);
    j["delta_at_n_star"] = json_number(r.delta_at_n_star.delta);
    j["ppl_original"] = to_json(r.original);
    j["ppl_masked"] = to_json(r.masked);
    j["masked_evaluations"] = r.masked_evaluations;
    auto set = nlohmann::json::array();
    for (const auto& n : r.critical_set) set.push_back(to_json(n));
    j["critical_set"] = std::move(set);
    j["critical_set_hash"] = hex64(neuron_set_hash(r.critical_set));
    auto curve = nlohmann::json::array();
    for (const auto& p : r.phase_curve) {
        curve.push_back({{"n", p.n}, {"delta", json_number(p.delta.delta)}, {"ppl_masked", json_number(p.masked.ppl)}});
    }
    j["phase_curve"] = std::move(curve);
    auto layers = nlohmann::json::array();
    for (const auto& c : id.layers) {
        layers.push_back({{"layer", c.layer}, {"down_proj", c.down_proj}, {"other", c.other}});
    }
    j["layer_distribution"] = std::move(layers);
    if (id.corpus) {
        j["corpus"] = {{"path", cfg.corpus_path ? cfg.corpus_path->generic_string() : std::string()},
                       {"lines", id.corpus->lines},
                       {"skipped_lines", id.corpus->skipped},
                       {"original", to_json(id.corpus->original)},
                       {"masked", to_json(id.corpus->masked)}};
    }
    return j;
}

Identification run_identify(const ExperimentConfig& cfg) {
    check_paths(cfg);
    const auto bundle = load_model(cfg.model_path);
    const auto probe = read_probe(cfg.probe_path, bundle.config());
    Identification id = identify(bundle, probe, cfg.noise, cfg.search);
    if (cfg.corpus_path) {
        const auto corpus = read_corpus(*cfg.corpus_path, bundle.config());
        CorpusComparison cmp;
        cmp.lines = corpus.lines.size();
        cmp.skipped = corpus.skipped;
        cmp.original = corpus_perplexity(bundle, corpus.lines);
        cmp.masked = corpus_perplexity(bundle, corpus.lines, InterventionSpec::mask(id.report.critical_set));
        id.corpus = cmp;
    }
    const auto& dir = cfg.out_dir;
    std::filesystem::create_directories(dir);
    write_text(dir / "ranking.csv", ranking_csv(id.ranking));
    write_text(dir / "phase_curve.csv", phase_curve_csv(id.report.phase_curve));
    write_text(dir / "layers.csv", layer_distribution_csv(id.layers));
    write_json(dir / "report.json", report_json(id, bundle, probe, cfg));
    return id;
}

std::vector<BetaRow> beta_sweep(const ModelBundle& bundle, std::span<const TokenSequence> eval,
                                const std::vector<NeuronId>& critical_set, const std::vector<double>& betas) {
    if (critical_set.empty()) throw InputError("beta sweep needs a non-empty critical set");
    if (betas.empty()) throw ConfigError("beta list is empty");
    const auto original = corpus_perplexity(bundle, eval);
    std::vector<BetaRow> rows;
    for (double beta : betas) {
        BetaRow row;
        row.beta = beta;
        row.ppl = corpus_perplexity(bundle, eval, InterventionSpec::scale(critical_set, beta));
        row.delta = degradation_between(original, row.ppl);
        rows.push_back(row);
    }
    return rows;
}

std::string beta_csv(const std::vector<BetaRow>& rows) {
    std::ostringstream out;
    out << "beta,ppl,delta\n";
    for (const auto& r : rows) {
        out << csv_number(r.beta) << ',' << csv_number(r.ppl.ppl) << ',' << csv_number(r.delta.delta) << '\n';
    }
    return out.str();
}

std::vector<BetaRow> run_beta_sweep(const ExperimentConfig& cfg, const std::vector<NeuronId>& critical_set) {
    check_paths(cfg);
    const auto bundle = load_model(cfg.model_path);
    std::vector<TokenSequence> eval;
    if (cfg.corpus_path) {
        eval = read_corpus(*cfg.corpus_path, bundle.config()).lines;
    } else {
        eval.push_back(read_probe(cfg.probe_path, bundle.config()));
    }
    const auto rows = beta_sweep(bundle, eval, critical_set, cfg.betas);
    write_text(cfg.out_dir / "beta_sweep.csv", beta_csv(rows));
    return rows;
}

LengthSweep token_length_sweep(const ModelBundle& bundle, const std::vector<TokenSequence>& prefixes,
                               const NoiseConfig& noise, const SearchConfig& search) {
    if (prefixes.empty()) throw ConfigError("token-length sweep needs at least one prefix");
    LengthSweep sweep;
    for (const auto& p : prefixes) {
        const auto id = identify(bundle, p, noise, search);
        sweep.rows.push_back({p.size(), id.report.converged, id.report.n_star,
                              neuron_set_hash(id.report.critical_set)});
    }
    // Walk from the longest prefix down while the critical set stays the same.
    std::vector<const LengthRow*> by_len;
    for (const auto& r : sweep.rows) by_len.push_back(&r);
    std::stable_sort(by_len.begin(), by_len.end(),
                     [](const LengthRow* a, const LengthRow* b) { return a->tokens < b->tokens; });
    if (by_len.back()->converged) {
        const auto target = by_len.back()->set_hash;
        std::size_t from = by_len.back()->tokens;
        for (auto it = by_len.rbegin(); it != by_len.rend(); ++it) {
            if (!(*it)->converged || (*it)->set_hash != target) break;
            from = (*it)->tokens;
        }
        sweep.stable_from = from;
    }
    return sweep;
}

std::string length_csv(const LengthSweep& sweep) {
    std::ostringstream out;
    out << "tokens,n_star,converged,set_hash\n";
    for (const auto& r : sweep.rows) {
        out << r.tokens << ',';
        if (r.converged) out << r.n_star;
        out << ',' << (r.converged ? "true" : "false") << ',' << hex64(r.set_hash) << '\n';
    }
    return out.str();
}

LengthSweep run_token_length_sweep(const ExperimentConfig& cfg) {
    check_paths(cfg);
    const auto bundle = load_model(cfg.model_path);
    const auto corpus = read_corpus(cfg.probe_path, bundle.config());
    const auto sweep = token_length_sweep(bundle, corpus.lines, cfg.noise, cfg.search);
    write_text(cfg.out_dir / "token_length.csv", length_csv(sweep));
    return sweep;
}

namespace {

ParamRow param_row(double value, const CriticalSetReport& r) {
    return {value, r.converged, r.n_star, r.delta_at_n_star, neuron_set_hash(r.critical_set)};
}

}  // namespace

ParameterSweep parameter_sweep(const ModelBundle& bundle, const TokenSequence& probe, const NoiseConfig& base,
                               const SearchConfig& search, const std::vector<double>& alphas,
                               const std::vector<int>& ks) {
    if (alphas.empty() && ks.empty()) throw ConfigError("parameter sweep needs an alpha or K axis");
    ParameterSweep sweep;
    for (double a : alphas) {
        NoiseConfig n = base;
        n.alpha = a;
        sweep.alpha_rows.push_back(param_row(a, identify(bundle, probe, n, search).report));
    }
    for (int k : ks) {
        NoiseConfig n = base;
        n.k_samples = k;
        sweep.k_rows.push_back(param_row(k, identify(bundle, probe, n, search).report));
    }
    return sweep;
}

std::string param_csv(const std::string& column, const std::vector<ParamRow>& rows) {
    std::ostringstream out;
    out << column << ",n_star,converged,delta,set_hash\n";
    for (const auto& r : rows) {
        out << csv_number(r.value) << ',';
        if (r.converged) out << r.n_star;
        out << ',' << (r.converged ? "true" : "false") << ',' << csv_number(r.delta.delta) << ','
            << hex64(r.set_hash) << '\n';
    }
    return out.str();
}

ParameterSweep run_parameter_sweep(const ExperimentConfig& cfg) {
    check_paths(cfg);
    const auto bundle = load_model(cfg.model_path);
    const auto probe = read_probe(cfg.probe_path, bundle.config());
    const auto sweep = parameter_sweep(bundle, probe, cfg.noise, cfg.search, cfg.alphas, cfg.ks);
    if (!cfg.alphas.empty()) write_text(cfg.out_dir / "alpha_sweep.csv", param_csv("alpha", sweep.alpha_rows));
    if (!cfg.ks.empty()) write_text(cfg.out_dir / "k_sweep.csv", param_csv("k", sweep.k_rows));
    return sweep;
}

std::vector<ThresholdRow> threshold_table(const ModelBundle& bundle, const TokenSequence& probe,
                                          const ImportanceRanking& ranking, const SearchConfig& search,
                                          const std::vector<double>& epsilons) {
    if (epsilons.empty()) throw ConfigError("epsilon list is empty");
    std::vector<ThresholdRow> rows;
    for (double eps : epsilons) {
        SearchConfig s = search;
        s.epsilon = eps;
        const auto r = greedy_search(bundle, probe, ranking, s);
        rows.push_back({eps, r.converged, r.n_star});
    }
    return rows;
}

std::string threshold_csv(const std::vector<ThresholdRow>& rows, int budget) {
    std::ostringstream out;
    out << "epsilon,n_star\n";
    for (const auto& r : rows) {
        out << csv_number(r.epsilon) << ',';
        if (r.converged) {
            out << r.n_star;
        } else {
            out << budget << '+';
        }
        out << '\n';
    }
    return out.str();
}

std::vector<ThresholdRow> run_threshold_table(const ExperimentConfig& cfg) {
    check_paths(cfg);
    const auto bundle = load_model(cfg.model_path);
    const auto probe = read_probe(cfg.probe_path, bundle.config());
    const auto ranking = score_neurons(bundle, probe, cfg.noise);
    const auto rows = threshold_table(bundle, probe, ranking, cfg.search, cfg.epsilons);
    const auto budget = resolve(cfg.search, neuron_count(bundle.config())).max_n;
    write_text(cfg.out_dir / "threshold_table.csv", threshold_csv(rows, budget));
    return rows;
}

}  // namespace lesion
