#include "lesion/neuron.hpp"

#include <algorithm>
#include <cmath>

#include "lesion/error.hpp"

namespace lesion {

std::string_view site_name(SiteKind kind) {
    switch (kind) {
        case SiteKind::MlpDownOut: return "mlp_down_out";
        case SiteKind::MlpAct: return "mlp_act";
        case SiteKind::AttnOOut: return "attn_o_out";
    }
    return "unknown";
}

SiteKind parse_site_kind(std::string_view name) {
    for (SiteKind kind : kSiteKinds) {
        if (site_name(kind) == name) return kind;
    }
    throw AddressingError("unknown site kind '" + std::string(name) + "'");
}

std::string to_string(const NeuronId& id) {
    return "L" + std::to_string(id.layer()) + "." + std::string(site_name(id.kind())) + "[" +
           std::to_string(id.index) + "]";
}

std::size_t site_width(const ModelConfig& config, SiteKind kind) {
    switch (kind) {
        case SiteKind::MlpDownOut:
        case SiteKind::AttnOOut: return static_cast<std::size_t>(config.d_model);
        case SiteKind::MlpAct: return static_cast<std::size_t>(config.d_mlp);
    }
    return 0;
}

std::size_t neuron_count(const ModelConfig& config) {
    return static_cast<std::size_t>(config.n_layers) *
           (2 * static_cast<std::size_t>(config.d_model) + static_cast<std::size_t>(config.d_mlp));
}

std::vector<SiteId> all_sites(const ModelConfig& config) {
    std::vector<SiteId> sites;
    sites.reserve(static_cast<std::size_t>(config.n_layers) * kSiteKinds.size());
    for (int l = 0; l < config.n_layers; ++l) {
        for (SiteKind kind : kSiteKinds) sites.push_back({l, kind});
    }
    return sites;
}

std::vector<NeuronId> enumerate_neurons(const ModelConfig& config) {
    std::vector<NeuronId> out;
    out.reserve(neuron_count(config));
    for (const SiteId& site : all_sites(config)) {
        const int width = static_cast<int>(site_width(config, site.kind));
        for (int i = 0; i < width; ++i) out.push_back({site, i});
    }
    return out;
}

void check_address(const ModelConfig& config, const SiteId& site) {
    if (site.layer < 0 || site.layer >= config.n_layers) {
        throw AddressingError("layer " + std::to_string(site.layer) + " out of range [0, " +
                              std::to_string(config.n_layers) + ")");
    }
    if (static_cast<std::uint8_t>(site.kind) > static_cast<std::uint8_t>(SiteKind::AttnOOut)) {
        throw AddressingError("invalid site kind");
    }
}

void check_address(const ModelConfig& config, const NeuronId& id) {
    check_address(config, id.site);
    const auto width = site_width(config, id.kind());
    if (id.index < 0 || static_cast<std::size_t>(id.index) >= width) {
        throw AddressingError("neuron " + to_string(id) + " index out of range [0, " +
                              std::to_string(width) + ")");
    }
}

std::size_t flat_index(const ModelConfig& config, const NeuronId& id) {
    check_address(config, id);
    const std::size_t per_layer = neuron_count(config) / static_cast<std::size_t>(config.n_layers);
    std::size_t offset = static_cast<std::size_t>(id.layer()) * per_layer;
    for (SiteKind kind : kSiteKinds) {
        if (kind == id.kind()) break;
        offset += site_width(config, kind);
    }
    return offset + static_cast<std::size_t>(id.index);
}

NeuronId neuron_at(const ModelConfig& config, std::size_t flat) {
    if (flat >= neuron_count(config)) {
        throw AddressingError("flat neuron index " + std::to_string(flat) + " out of range");
    }
    const std::size_t per_layer = neuron_count(config) / static_cast<std::size_t>(config.n_layers);
    NeuronId id;
    id.site.layer = static_cast<int>(flat / per_layer);
    std::size_t rest = flat % per_layer;
    for (SiteKind kind : kSiteKinds) {
        const std::size_t width = site_width(config, kind);
        if (rest < width) {
            id.site.kind = kind;
            id.index = static_cast<int>(rest);
            return id;
        }
        rest -= width;
    }
    throw AddressingError("flat neuron index decoding failed");
}

InterventionSpec::InterventionSpec(std::vector<NeuronId> neurons, double beta, double offset)
    : neurons_(std::move(neurons)), beta_(beta), offset_(offset) {
    if (!std::isfinite(beta_) || !std::isfinite(offset_)) {
        throw InputError("intervention scaling factor and offset must be finite");
    }
    std::sort(neurons_.begin(), neurons_.end());
    neurons_.erase(std::unique(neurons_.begin(), neurons_.end()), neurons_.end());
}

std::vector<int> InterventionSpec::indices_at(const SiteId& site) const {
    std::vector<int> out;
    const auto first = std::lower_bound(neurons_.begin(), neurons_.end(), NeuronId{site, 0},
                                        [](const NeuronId& a, const NeuronId& b) { return a < b; });
    for (auto it = first; it != neurons_.end() && it->site == site; ++it) out.push_back(it->index);
    return out;
}

void apply_to_channels(std::span<float> row, std::span<const int> indices, double beta,
                       double offset) {
    const auto b = static_cast<float>(beta);
    const auto o = static_cast<float>(offset);
    for (int i : indices) {
        float& v = row[static_cast<std::size_t>(i)];
        if (beta == 0.0) {
            v = 0.0f;
        } else if (beta != 1.0) {
            v *= b;
        }
        if (offset != 0.0) v += o;
    }
}

void apply_intervention(std::span<float> row, const InterventionSpec& spec, const SiteId& site) {
    const auto indices = spec.indices_at(site);
    for (int i : indices) {
        if (static_cast<std::size_t>(i) >= row.size()) {
            throw AddressingError("channel " + std::to_string(i) + " outside activation row of width " +
                                  std::to_string(row.size()));
        }
    }
    apply_to_channels(row, indices, spec.beta(), spec.offset());
}

}  // namespace lesion
