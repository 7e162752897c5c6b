// Command-line front end for critical-neuron identification experiments.
//
// Exit codes: 0 success (converged), 3 success but the search did not
// converge within its budget, 1 error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lesion/baselines.hpp"
#include "lesion/error.hpp"
#include "lesion/harness.hpp"
#include "lesion/model_io.hpp"
#include "lesion/report.hpp"
#include "lesion/tokenizer.hpp"

namespace {

using namespace lesion;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNotConverged = 3;

// Appends "--key value..." for every key of a flat JSON object whose flag is
// not already on the command line, so explicit flags win over the file.
std::vector<std::string> merge_config_file(std::vector<std::string> args) {
    std::string path;
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
        if (args[i] == "--config") {
            path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
    }
    if (path.empty()) return args;
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file '" + path + "'");
    nlohmann::json cfg;
    try {
        in >> cfg;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    if (!cfg.is_object()) throw InputError("config file '" + path + "' must hold a JSON object");

    std::set<std::string> given;
    for (const auto& a : args) {
        if (a.rfind("--", 0) == 0) given.insert(a.substr(0, a.find('=')));
    }
    auto scalar = [](const nlohmann::json& v) {
        if (v.is_string()) return v.get<std::string>();
        return v.dump();
    };
    for (const auto& [key, value] : cfg.items()) {
        const std::string flag = "--" + key;
        if (given.count(flag)) continue;
        if (value.is_boolean()) {
            if (value.get<bool>()) args.push_back(flag);
        } else if (value.is_array()) {
            args.push_back(flag);
            for (const auto& v : value) args.push_back(scalar(v));
        } else if (!value.is_null()) {
            args.push_back(flag);
            args.push_back(scalar(value));
        }
    }
    return args;
}

struct NoiseFlags {
    double alpha = 5.0;
    int samples = 100;
    std::string reduction = "mean";
};

void add_noise_flags(CLI::App* cmd, NoiseFlags& f) {
    cmd->add_option("--alpha", f.alpha, "Noise scale alpha")->capture_default_str();
    cmd->add_option("--samples", f.samples, "Monte Carlo samples K")->capture_default_str();
    cmd->add_option("--reduction", f.reduction, "Position reduction: mean|max|last")->capture_default_str();
}

void add_search_flags(CLI::App* cmd, SearchConfig& s) {
    cmd->add_option("--epsilon", s.epsilon, "Criticality threshold (log10 PPL ratio)")->capture_default_str();
    cmd->add_option("--step", s.step, "Prefix step size")->capture_default_str();
    cmd->add_option("--max-n", s.max_n, "Search budget (0 = min(|N|, 1000))")->capture_default_str();
}

NoiseConfig to_noise(const NoiseFlags& f, std::uint64_t seed) {
    NoiseConfig n;
    n.alpha = f.alpha;
    n.k_samples = f.samples;
    n.seed = seed;
    n.reduction = parse_reduction(f.reduction);
    validate(n);
    return n;
}

void print_identify_summary(const Identification& id) {
    const auto& r = id.report;
    if (r.converged) {
        std::printf("converged: n* = %d, delta = %s, ppl %s -> %s\n", r.n_star,
                    csv_number(r.delta_at_n_star.delta).c_str(), csv_number(r.original.ppl).c_str(),
                    csv_number(r.masked.ppl).c_str());
        for (const auto& n : r.critical_set) std::printf("  %s\n", to_string(n).c_str());
    } else {
        std::printf("not converged within %d neurons (last delta = %s)\n", r.config.max_n,
                    csv_number(r.delta_at_n_star.delta).c_str());
    }
}

int run(int argc, char** argv) {
    CLI::App app{"Perturbation-based critical neuron identification on toy transformers"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");
    std::string config_unused;
    app.add_option("--config", config_unused, "JSON file mirroring the flags; flags override it");

    std::uint64_t seed = 0;
    NoiseFlags noise;
    SearchConfig search;
    std::string model, probe, corpus, out, set_path;

    // gen-model
    auto* gen = app.add_subcommand("gen-model", "Generate a seeded Gaussian model (NLF1)");
    ModelConfig mc;
    mc.n_layers = 2;
    mc.d_model = 64;
    mc.n_heads = 4;
    mc.d_mlp = 128;
    MassiveActivation massive;
    massive.channels = 0;
    gen->add_option("--layers", mc.n_layers)->capture_default_str();
    gen->add_option("--dim", mc.d_model)->capture_default_str();
    gen->add_option("--heads", mc.n_heads)->capture_default_str();
    gen->add_option("--mlp-dim", mc.d_mlp)->capture_default_str();
    gen->add_option("--vocab", mc.vocab_size)->capture_default_str();
    gen->add_option("--max-seq-len", mc.max_seq_len)->capture_default_str();
    gen->add_option("--norm-eps", mc.norm_eps)->capture_default_str();
    gen->add_flag("--tie-embeddings", mc.tie_embeddings);
    gen->add_option("--seed", seed)->capture_default_str();
    gen->add_option("--out", out)->required();
    gen->add_option("--massive-channels", massive.channels, "Plant this many massive-activation channels (0 = none)")
        ->capture_default_str();
    gen->add_option("--gate-gain", massive.gate_gain)->capture_default_str();
    gen->add_option("--down-gain", massive.down_gain)->capture_default_str();
    gen->add_option("--head-gain", massive.head_gain)->capture_default_str();
    gen->add_option("--plant-seed", massive.seed)->capture_default_str();

    // identify
    auto* ident = app.add_subcommand("identify", "Stage 1 ranking + Stage 2 greedy search");
    ident->add_option("--model", model)->required();
    ident->add_option("--probe", probe)->required();
    ident->add_option("--corpus", corpus, "Optional corpus for clean vs masked PPL");
    ident->add_option("--seed", seed)->capture_default_str();
    ident->add_option("--out-dir", out)->required();
    add_noise_flags(ident, noise);
    add_search_flags(ident, search);

    // phase-curve
    auto* curve = app.add_subcommand("phase-curve", "Full prefix-masking curve");
    int n_max = 100;
    curve->add_option("--model", model)->required();
    curve->add_option("--probe", probe)->required();
    curve->add_option("--n-max", n_max)->capture_default_str();
    curve->add_option("--step", search.step)->capture_default_str();
    curve->add_option("--seed", seed)->capture_default_str();
    curve->add_option("--out", out, "CSV path")->required();
    add_noise_flags(curve, noise);

    // sweep-beta
    auto* beta = app.add_subcommand("sweep-beta", "Scale a critical set by each beta");
    std::vector<double> betas = kDefaultBetas;
    beta->add_option("--model", model)->required();
    beta->add_option("--probe", probe)->required();
    beta->add_option("--corpus", corpus, "Evaluate on this corpus instead of the probe");
    beta->add_option("--set", set_path, "report.json from identify")->required();
    beta->add_option("--betas", betas)->delimiter(',')->capture_default_str();
    beta->add_option("--out", out, "Output directory")->required();

    // sweep-params
    auto* params = app.add_subcommand("sweep-params", "n* as a function of alpha or K");
    std::vector<double> alphas;
    std::vector<int> ks;
    params->add_option("--model", model)->required();
    params->add_option("--probe", probe)->required();
    params->add_option("--alphas", alphas)->delimiter(',');
    params->add_option("--ks", ks)->delimiter(',');
    params->add_option("--seed", seed)->capture_default_str();
    params->add_option("--out", out, "Output directory")->required();
    add_noise_flags(params, noise);
    add_search_flags(params, search);

    // sweep-length
    auto* length = app.add_subcommand("sweep-length", "n* per probe prefix (one prefix per line)");
    length->add_option("--model", model)->required();
    length->add_option("--prefixes", probe)->required();
    length->add_option("--seed", seed)->capture_default_str();
    length->add_option("--out", out, "Output directory")->required();
    add_noise_flags(length, noise);
    add_search_flags(length, search);

    // threshold-table
    auto* thresh = app.add_subcommand("threshold-table", "n* for each epsilon from one Stage-1 pass");
    std::vector<double> epsilons = kDefaultEpsilons;
    thresh->add_option("--model", model)->required();
    thresh->add_option("--probe", probe)->required();
    thresh->add_option("--epsilons", epsilons)->delimiter(',')->capture_default_str();
    thresh->add_option("--seed", seed)->capture_default_str();
    thresh->add_option("--step", search.step)->capture_default_str();
    thresh->add_option("--max-n", search.max_n)->capture_default_str();
    thresh->add_option("--out", out, "Output directory")->required();
    add_noise_flags(thresh, noise);

    // baseline
    auto* base = app.add_subcommand("baseline", "PPL curves for random / AM / GM / perturbation rankings");
    std::vector<std::string> strategies{"random", "am", "gm", "perturb"};
    int trials = 10;
    double h = 1e-3;
    base->add_option("--model", model)->required();
    base->add_option("--probe", probe)->required();
    base->add_option("--corpus", corpus, "Score curves on this corpus instead of the probe");
    base->add_option("--strategy", strategies, "random|am|gm|perturb (repeatable)")->delimiter(',');
    base->add_option("--n-max", n_max)->capture_default_str();
    base->add_option("--step", search.step)->capture_default_str();
    base->add_option("--trials", trials)->capture_default_str();
    base->add_option("--fd-step", h, "Finite-difference step for gm")->capture_default_str();
    base->add_option("--seed", seed)->capture_default_str();
    base->add_option("--out", out, "Output directory")->required();
    add_noise_flags(base, noise);

    // eval-ppl
    auto* eval = app.add_subcommand("eval-ppl", "Corpus perplexity, optionally with a critical set masked");
    std::string mask_path;
    eval->add_option("--model", model)->required();
    eval->add_option("--corpus", corpus)->required();
    eval->add_option("--mask", mask_path, "report.json whose critical_set is masked");

    // stability
    auto* stab = app.add_subcommand("stability", "Cross-seed overlap of Stage-1 rankings");
    int n_seeds = 5;
    std::size_t top_n = 10;
    stab->add_option("--model", model)->required();
    stab->add_option("--probe", probe)->required();
    stab->add_option("--seeds", n_seeds)->capture_default_str();
    stab->add_option("--top-n", top_n)->capture_default_str();
    stab->add_option("--seed", seed)->capture_default_str();
    add_noise_flags(stab, noise);

    std::vector<std::string> args(argv + 1, argv + argc);
    args = merge_config_file(std::move(args));
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    ExperimentConfig cfg;
    cfg.model_path = model;
    cfg.probe_path = probe;
    if (!corpus.empty()) cfg.corpus_path = corpus;
    cfg.out_dir = out;
    cfg.search = search;

    if (*gen) {
        auto bundle = generate_model(mc, seed);
        if (massive.channels > 0) {
            PlantedSite site;
            bundle = plant_massive_activation(bundle, massive, &site);
            std::printf("planted bias channel %d;", site.bias_channel);
            for (std::size_t k = 0; k < site.residual_channels.size(); ++k) {
                std::printf(" residual %d <- hidden %d;", site.residual_channels[k], site.hidden_units[k]);
            }
            std::printf("\n");
        }
        save_model(bundle, out);
        std::printf("wrote %s (content hash %s, %zu neurons)\n", out.c_str(), hex64(bundle.content_hash()).c_str(),
                    neuron_count(bundle.config()));
        return kExitOk;
    }
    cfg.noise = to_noise(noise, seed);

    if (*ident) {
        const auto id = run_identify(cfg);
        print_identify_summary(id);
        return id.report.converged ? kExitOk : kExitNotConverged;
    }
    if (*curve) {
        check_paths(cfg);
        const auto bundle = load_model(cfg.model_path);
        const auto tokens = read_probe(cfg.probe_path, bundle.config());
        const auto ranking = score_neurons(bundle, tokens, cfg.noise);
        write_text(out, phase_curve_csv(phase_curve(bundle, tokens, ranking, n_max, search.step)));
        return kExitOk;
    }
    if (*beta) {
        cfg.betas = betas;
        const auto rows = run_beta_sweep(cfg, read_critical_set(set_path));
        std::fputs(beta_csv(rows).c_str(), stdout);
        return kExitOk;
    }
    if (*params) {
        cfg.alphas = alphas;
        cfg.ks = ks;
        const auto sweep = run_parameter_sweep(cfg);
        if (!sweep.alpha_rows.empty()) std::fputs(param_csv("alpha", sweep.alpha_rows).c_str(), stdout);
        if (!sweep.k_rows.empty()) std::fputs(param_csv("k", sweep.k_rows).c_str(), stdout);
        return kExitOk;
    }
    if (*length) {
        const auto sweep = run_token_length_sweep(cfg);
        std::fputs(length_csv(sweep).c_str(), stdout);
        if (sweep.stable_from) {
            std::printf("critical set stable for T >= %zu\n", *sweep.stable_from);
        } else {
            std::printf("critical set not stable at the longest prefix\n");
        }
        return kExitOk;
    }
    if (*thresh) {
        cfg.epsilons = epsilons;
        const auto rows = run_threshold_table(cfg);
        std::fputs(threshold_csv(rows, resolve(cfg.search, neuron_count(load_model(cfg.model_path).config())).max_n)
                       .c_str(),
                   stdout);
        return kExitOk;
    }
    if (*base) {
        check_paths(cfg);
        const auto bundle = load_model(cfg.model_path);
        const auto tokens = read_probe(cfg.probe_path, bundle.config());
        std::vector<TokenSequence> eval_set;
        if (cfg.corpus_path) {
            eval_set = read_corpus(*cfg.corpus_path, bundle.config()).lines;
        } else {
            eval_set.push_back(tokens);
        }
        StrategyCurveOptions opts;
        opts.n_max = n_max;
        opts.step = search.step;
        opts.seed = seed;
        opts.noise = cfg.noise;
        opts.h = h;
        nlohmann::json manifest;
        manifest["model_hash"] = hex64(bundle.content_hash());
        manifest["probe_hash"] = hex64(probe_hash(tokens));
        manifest["score_aggregation"] = "mean over positions";
        manifest["random_average"] = "log space";
        manifest["curves"] = nlohmann::json::array();
        for (const auto& name : strategies) {
            const Strategy s = parse_strategy(name);
            opts.trials = s == Strategy::Random ? trials : 1;
            const auto points = strategy_curve(bundle, tokens, eval_set, s, opts);
            const std::string file = "baseline_" + name + ".csv";
            write_text(cfg.out_dir / file, strategy_csv(points));
            manifest["curves"].push_back({{"strategy", name}, {"file", file}, {"trials", opts.trials}});
        }
        manifest["config"] = {{"n_max", n_max}, {"step", search.step}, {"seed", seed}, {"h", h},
                              {"noise", to_json(cfg.noise)}};
        write_json(cfg.out_dir / "baselines.json", manifest);
        return kExitOk;
    }
    if (*eval) {
        if (!std::filesystem::exists(model)) throw InputError("model '" + model + "' does not exist");
        const auto bundle = load_model(model);
        const auto lines = read_corpus(corpus, bundle.config());
        nlohmann::json j;
        j["lines"] = lines.lines.size();
        j["skipped_lines"] = lines.skipped;
        j["original"] = to_json(corpus_perplexity(bundle, lines.lines));
        if (!mask_path.empty()) {
            const auto set = read_critical_set(mask_path);
            j["masked_neurons"] = set.size();
            j["masked"] = to_json(corpus_perplexity(bundle, lines.lines, InterventionSpec::mask(set)));
        }
        std::printf("%s\n", j.dump(2).c_str());
        return kExitOk;
    }
    if (*stab) {
        check_paths(cfg);
        const auto bundle = load_model(cfg.model_path);
        const auto tokens = read_probe(cfg.probe_path, bundle.config());
        const auto rep = ranking_stability(bundle, tokens, cfg.noise, n_seeds, top_n);
        nlohmann::json j = {{"top_n", rep.top_n},
                            {"seeds", rep.seeds},
                            {"jaccard", rep.jaccard},
                            {"spearman", rep.spearman},
                            {"mean_jaccard", rep.mean_jaccard},
                            {"min_jaccard", rep.min_jaccard},
                            {"mean_spearman", rep.mean_spearman}};
        std::printf("%s\n", j.dump(2).c_str());
        return kExitOk;
    }
    return kExitError;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const lesion::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
    }
    return kExitError;
}
