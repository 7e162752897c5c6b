#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lesion/baselines.hpp"
#include "lesion/search.hpp"

namespace lesion {

// Non-finite reals are written as the strings "inf" / "-inf" / "nan".
nlohmann::json json_number(double v);
double number_from_json(const nlohmann::json& j);

std::string hex64(std::uint64_t v);

// {"layer": int, "site": "mlp_down_out"|"mlp_act"|"attn_o_out", "index": int}
nlohmann::json to_json(const NeuronId& id);
NeuronId neuron_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PerplexityReport& r);
nlohmann::json to_json(const NoiseConfig& n);
nlohmann::json to_json(const SearchConfig& s);

// Hash of a neuron set, order-independent (XXH64 over the canonical sorted ids).
std::uint64_t neuron_set_hash(std::vector<NeuronId> ids);

// Fixed-format decimal rendering for CSV cells (%.17g, inf/nan spelled out).
std::string csv_number(double v);

std::string ranking_csv(const ImportanceRanking& ranking);                 // layer,site,index,score,rank
std::string phase_curve_csv(const std::vector<CurvePoint>& curve);        // n,ppl_masked,delta
std::string strategy_csv(const std::vector<StrategyPoint>& curve);        // n,mean_ppl,trials

// Reads the critical_set array of a report written by the identify command.
std::vector<NeuronId> read_critical_set(const std::filesystem::path& report_path);

void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace lesion
