#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lesion/config.hpp"

namespace lesion {

// Activation sites addressable per layer. Enumerator order is the canonical
// neuron order within a layer.
enum class SiteKind : std::uint8_t {
    MlpDownOut = 0,  // down_proj output, width d_model
    MlpAct = 1,      // silu(gate) * up, width d_mlp
    AttnOOut = 2,    // o_proj output, width d_model
};

inline constexpr std::array<SiteKind, 3> kSiteKinds{SiteKind::MlpDownOut, SiteKind::MlpAct,
                                                    SiteKind::AttnOOut};

std::string_view site_name(SiteKind kind);
SiteKind parse_site_kind(std::string_view name);

struct SiteId {
    int layer = 0;
    SiteKind kind = SiteKind::MlpDownOut;

    auto operator<=>(const SiteId&) const = default;
};

struct NeuronId {
    SiteId site;
    int index = 0;

    int layer() const { return site.layer; }
    SiteKind kind() const { return site.kind; }

    // Canonical order: layer, then site kind, then index.
    auto operator<=>(const NeuronId&) const = default;
};

std::string to_string(const NeuronId& id);

std::size_t site_width(const ModelConfig& config, SiteKind kind);
std::size_t neuron_count(const ModelConfig& config);

// All sites of the model in canonical order.
std::vector<SiteId> all_sites(const ModelConfig& config);

std::vector<NeuronId> enumerate_neurons(const ModelConfig& config);

// Position of `id` within enumerate_neurons(config). Throws AddressingError.
std::size_t flat_index(const ModelConfig& config, const NeuronId& id);
NeuronId neuron_at(const ModelConfig& config, std::size_t flat);

void check_address(const ModelConfig& config, const NeuronId& id);
void check_address(const ModelConfig& config, const SiteId& site);

// Affine rewrite v -> beta * v + offset of a set of channels, applied at every
// sequence position. Masking is beta = 0, offset = 0; pure scaling keeps
// offset = 0; the additive mode used by finite differences is beta = 1.
// An empty neuron set is the identity.
class InterventionSpec {
public:
    InterventionSpec() = default;
    InterventionSpec(std::vector<NeuronId> neurons, double beta, double offset = 0.0);

    static InterventionSpec none() { return {}; }
    static InterventionSpec mask(std::vector<NeuronId> neurons) { return {std::move(neurons), 0.0}; }
    static InterventionSpec scale(std::vector<NeuronId> neurons, double beta) {
        return {std::move(neurons), beta};
    }
    static InterventionSpec shift(std::vector<NeuronId> neurons, double delta) {
        return {std::move(neurons), 1.0, delta};
    }

    // Sorted canonically, duplicates removed.
    const std::vector<NeuronId>& neurons() const { return neurons_; }
    double beta() const { return beta_; }
    double offset() const { return offset_; }
    bool empty() const { return neurons_.empty(); }

    // Indices of the channels at `site` touched by this spec, ascending.
    std::vector<int> indices_at(const SiteId& site) const;

private:
    std::vector<NeuronId> neurons_;
    double beta_ = 1.0;
    double offset_ = 0.0;
};

// Rewrites the channels of `row` listed in `indices`.
void apply_to_channels(std::span<float> row, std::span<const int> indices, double beta,
                       double offset);

// Rewrites the channels of `spec` that live at `site`; other channels are untouched.
void apply_intervention(std::span<float> row, const InterventionSpec& spec, const SiteId& site);

}  // namespace lesion
