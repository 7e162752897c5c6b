#include "lesion/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lesion/error.hpp"
#include "lesion/xxhash64.hpp"

namespace lesion {

nlohmann::json json_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double number_from_json(const nlohmann::json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return INFINITY;
        if (s == "-inf") return -INFINITY;
        if (s == "nan") return NAN;
    }
    throw InputError("expected a number in JSON, got " + j.dump());
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

nlohmann::json to_json(const NeuronId& id) {
    return {{"layer", id.layer()}, {"site", std::string(site_name(id.kind()))}, {"index", id.index}};
}

NeuronId neuron_from_json(const nlohmann::json& j) {
    try {
        NeuronId id;
        id.site.layer = j.at("layer").get<int>();
        id.site.kind = parse_site_kind(j.at("site").get<std::string>());
        id.index = j.at("index").get<int>();
        return id;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed neuron id: ") + e.what());
    }
}

nlohmann::json to_json(const PerplexityReport& r) {
    return {{"ppl", json_number(r.ppl)},
            {"mean_nll", r.mean_nll},
            {"n_predicted", r.n_predicted},
            {"underflow", r.underflow}};
}

nlohmann::json to_json(const NoiseConfig& n) {
    return {{"alpha", n.alpha},
            {"k_samples", n.k_samples},
            {"seed", n.seed},
            {"position_reduction", std::string(reduction_name(n.reduction))}};
}

nlohmann::json to_json(const SearchConfig& s) {
    return {{"epsilon", s.epsilon}, {"step", s.step}, {"max_n", s.max_n}};
}

std::uint64_t neuron_set_hash(std::vector<NeuronId> ids) {
    std::sort(ids.begin(), ids.end());
    std::string text;
    for (const auto& id : ids) text += to_string(id) + ";";
    return xxh64(text);
}

std::string csv_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string ranking_csv(const ImportanceRanking& ranking) {
    std::ostringstream out;
    out << "layer,site,index,score,rank\n";
    for (std::size_t r = 0; r < ranking.entries.size(); ++r) {
        const auto& e = ranking.entries[r];
        out << e.id.layer() << ',' << site_name(e.id.kind()) << ',' << e.id.index << ','
            << csv_number(e.score) << ',' << r + 1 << '\n';
    }
    return out.str();
}

std::string phase_curve_csv(const std::vector<CurvePoint>& curve) {
    std::ostringstream out;
    out << "n,ppl_masked,delta\n";
    for (const auto& p : curve) {
        out << p.n << ',' << csv_number(p.masked.ppl) << ',' << csv_number(p.delta.delta) << '\n';
    }
    return out.str();
}

std::string strategy_csv(const std::vector<StrategyPoint>& curve) {
    std::ostringstream out;
    out << "n,mean_ppl,trials\n";
    for (const auto& p : curve) out << p.n << ',' << csv_number(p.mean_ppl) << ',' << p.trials << '\n';
    return out.str();
}

std::vector<NeuronId> read_critical_set(const std::filesystem::path& report_path) {
    std::ifstream in(report_path);
    if (!in) throw InputError("cannot open report '" + report_path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("report '" + report_path.string() + "' is not valid JSON: " + e.what());
    }
    if (!j.contains("critical_set") || !j["critical_set"].is_array()) {
        throw InputError("report '" + report_path.string() + "' has no critical_set array");
    }
    std::vector<NeuronId> out;
    for (const auto& e : j["critical_set"]) out.push_back(neuron_from_json(e));
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    write_text(path, j.dump(2) + "\n");
}

}  // namespace lesion
