#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lesion/baselines.hpp"
#include "lesion/search.hpp"

namespace lesion {

// Scaling factors of the beta-sweep table, in emission order.
inline const std::vector<double> kDefaultBetas{1.0, 0.0, -5.0, -1.0, 0.3, 0.5, 0.8, 5.0};
inline const std::vector<double> kDefaultEpsilons{0.8, 1.0, 2.0, 3.0, 10.0, 20.0};

struct ExperimentConfig {
    std::filesystem::path model_path;
    std::filesystem::path probe_path;
    std::optional<std::filesystem::path> corpus_path;
    std::filesystem::path out_dir = "out";
    NoiseConfig noise;
    SearchConfig search;
    std::vector<double> alphas;
    std::vector<int> ks;
    std::vector<double> betas = kDefaultBetas;
    std::vector<double> epsilons = kDefaultEpsilons;
};

// Checks that every referenced input path exists.
void check_paths(const ExperimentConfig& cfg);

// Probe text: the whole file with one trailing newline removed.
std::string read_probe_text(const std::filesystem::path& path);
TokenSequence read_probe(const std::filesystem::path& path, const ModelConfig& config);

struct LayerCount {
    int layer = 0;
    int down_proj = 0;  // MLP_DOWN_OUT
    int other = 0;      // MLP_ACT + ATTN_O_OUT
};

std::vector<LayerCount> layer_distribution(const ModelConfig& config, const std::vector<NeuronId>& set);
std::string layer_distribution_csv(const std::vector<LayerCount>& counts);  // layer,down_proj,other,total

struct CorpusComparison {
    PerplexityReport original;
    PerplexityReport masked;
    std::size_t lines = 0;
    std::size_t skipped = 0;
};

struct Identification {
    ImportanceRanking ranking;
    CriticalSetReport report;
    std::vector<LayerCount> layers;
    std::optional<CorpusComparison> corpus;
};

// Stage 1 then Stage 2 on one probe.
Identification identify(const ModelBundle& bundle, const TokenSequence& probe, const NoiseConfig& noise,
                        const SearchConfig& search);

// Full JSON report: results plus the config echo and content hashes.
nlohmann::json report_json(const Identification& id, const ModelBundle& bundle, const TokenSequence& probe,
                           const ExperimentConfig& cfg);

// Writes report.json, phase_curve.csv, layers.csv, ranking.csv into cfg.out_dir.
Identification run_identify(const ExperimentConfig& cfg);

struct BetaRow {
    double beta = 1.0;
    PerplexityReport ppl;
    Degradation delta;
};

// Scales `critical_set` by each beta and scores `eval` against the unmodified model.
std::vector<BetaRow> beta_sweep(const ModelBundle& bundle, std::span<const TokenSequence> eval,
                                const std::vector<NeuronId>& critical_set, const std::vector<double>& betas);
std::string beta_csv(const std::vector<BetaRow>& rows);  // beta,ppl,delta

// Evaluates the corpus when configured, otherwise the probe. Writes beta_sweep.csv.
std::vector<BetaRow> run_beta_sweep(const ExperimentConfig& cfg, const std::vector<NeuronId>& critical_set);

struct LengthRow {
    std::size_t tokens = 0;
    bool converged = false;
    int n_star = 0;
    std::uint64_t set_hash = 0;
};

struct LengthSweep {
    std::vector<LengthRow> rows;
    // Smallest T from which every longer prefix converged to the same set.
    std::optional<std::size_t> stable_from;
};

LengthSweep token_length_sweep(const ModelBundle& bundle, const std::vector<TokenSequence>& prefixes,
                               const NoiseConfig& noise, const SearchConfig& search);
std::string length_csv(const LengthSweep& sweep);  // tokens,n_star,converged,set_hash

// Each non-blank line of cfg.probe_path is one prefix. Writes token_length.csv.
LengthSweep run_token_length_sweep(const ExperimentConfig& cfg);

struct ParamRow {
    double value = 0.0;
    bool converged = false;
    int n_star = 0;
    Degradation delta;
    std::uint64_t set_hash = 0;
};

struct ParameterSweep {
    std::vector<ParamRow> alpha_rows;  // K fixed at cfg.noise.k_samples
    std::vector<ParamRow> k_rows;      // alpha fixed at cfg.noise.alpha
};

ParameterSweep parameter_sweep(const ModelBundle& bundle, const TokenSequence& probe, const NoiseConfig& base,
                               const SearchConfig& search, const std::vector<double>& alphas,
                               const std::vector<int>& ks);
std::string param_csv(const std::string& column, const std::vector<ParamRow>& rows);

// Writes alpha_sweep.csv and/or k_sweep.csv.
ParameterSweep run_parameter_sweep(const ExperimentConfig& cfg);

struct ThresholdRow {
    double epsilon = 1.0;
    bool converged = false;
    int n_star = 0;
};

// One Stage-1 ranking shared by every epsilon.
std::vector<ThresholdRow> threshold_table(const ModelBundle& bundle, const TokenSequence& probe,
                                          const ImportanceRanking& ranking, const SearchConfig& search,
                                          const std::vector<double>& epsilons);

// Non-converged cells read "<max_n>+", e.g. "1000+".
std::string threshold_csv(const std::vector<ThresholdRow>& rows, int budget);  // epsilon,n_star

std::vector<ThresholdRow> run_threshold_table(const ExperimentConfig& cfg);

}  // namespace lesion
