#include "lesion/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include "lesion/error.hpp"
#include "lesion/model_io.hpp"
#include "lesion/random.hpp"
#include "lesion/xxhash64.hpp"

namespace lesion {

void validate(const ModelConfig& c) {
    auto positive = [](int v, const char* name) {
        if (v < 1) throw ConfigError(std::string(name) + " must be >= 1, got " + std::to_string(v));
    };
    positive(c.n_layers, "n_layers");
    positive(c.d_model, "d_model");
    positive(c.n_heads, "n_heads");
    positive(c.d_mlp, "d_mlp");
    positive(c.vocab_size, "vocab_size");
    positive(c.max_seq_len, "max_seq_len");
    if (c.d_model % c.n_heads != 0) {
        throw ConfigError("d_model (" + std::to_string(c.d_model) + ") is not divisible by n_heads (" +
                          std::to_string(c.n_heads) + ")");
    }
    if (!(c.norm_eps > 0.0) || !std::isfinite(c.norm_eps)) {
        throw ConfigError("norm_eps must be a small positive real");
    }
}

namespace {

std::atomic<std::uint64_t> g_forward_calls{0};

TensorView view(std::string name, std::size_t rows, std::size_t cols, std::span<const float> values) {
    return TensorView{std::move(name), rows, cols, values};
}

std::vector<TensorView> layout_impl(const ModelConfig& c, const ModelWeights* w) {
    const auto d = static_cast<std::size_t>(c.d_model);
    const auto m = static_cast<std::size_t>(c.d_mlp);
    const auto v = static_cast<std::size_t>(c.vocab_size);
    auto vals = [&](const auto& container) -> std::span<const float> {
        if (w == nullptr) return {};
        if constexpr (std::is_same_v<std::decay_t<decltype(container)>, Matrix>) {
            return container.data;
        } else {
            return container;
        }
    };
    std::vector<TensorView> out;
    out.push_back(view("embed_tokens", v, d, w ? vals(w->embed_tokens) : std::span<const float>{}));
    for (int l = 0; l < c.n_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        const LayerWeights* lw = w ? &w->layers[static_cast<std::size_t>(l)] : nullptr;
        auto lv = [&](auto member) -> std::span<const float> {
            if (lw == nullptr) return {};
            return vals(lw->*member);
        };
        out.push_back(view(p + "attn_norm", 1, d, lv(&LayerWeights::attn_norm)));
        out.push_back(view(p + "attn.q_proj", d, d, lv(&LayerWeights::q_proj)));
        out.push_back(view(p + "attn.k_proj", d, d, lv(&LayerWeights::k_proj)));
        out.push_back(view(p + "attn.v_proj", d, d, lv(&LayerWeights::v_proj)));
        out.push_back(view(p + "attn.o_proj", d, d, lv(&LayerWeights::o_proj)));
        out.push_back(view(p + "mlp_norm", 1, d, lv(&LayerWeights::mlp_norm)));
        out.push_back(view(p + "mlp.gate_proj", m, d, lv(&LayerWeights::gate_proj)));
        out.push_back(view(p + "mlp.up_proj", m, d, lv(&LayerWeights::up_proj)));
        out.push_back(view(p + "mlp.down_proj", d, m, lv(&LayerWeights::down_proj)));
    }
    out.push_back(view("final_norm", 1, d, w ? vals(w->final_norm) : std::span<const float>{}));
    if (!c.tie_embeddings) {
        out.push_back(view("lm_head", v, d, w ? vals(w->lm_head) : std::span<const float>{}));
    }
    return out;
}

}  // namespace

std::vector<TensorView> tensor_layout(const ModelConfig& config) {
    validate(config);
    return layout_impl(config, nullptr);
}

ModelBundle::ModelBundle(ModelConfig config, ModelWeights weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
    validate(config_);
    if (weights_.layers.size() != static_cast<std::size_t>(config_.n_layers)) {
        throw FormatError("weights have " + std::to_string(weights_.layers.size()) +
                          " layers, config says " + std::to_string(config_.n_layers));
    }
    if (config_.tie_embeddings && !weights_.lm_head.data.empty()) {
        throw FormatError("lm_head must be empty when embeddings are tied");
    }
    const auto expected = layout_impl(config_, nullptr);
    const auto actual = layout_impl(config_, &weights_);
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto want = expected[i].rows * expected[i].cols;
        if (actual[i].values.size() != want) {
            throw FormatError("tensor '" + expected[i].name + "' has " +
                              std::to_string(actual[i].values.size()) + " values, expected " +
                              std::to_string(want));
        }
        for (float v : actual[i].values) {
            if (!std::isfinite(v)) throw FormatError("tensor '" + expected[i].name + "' has a non-finite value");
        }
    }
    auto check_matrix_shape = [](const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
        if (m.rows != rows || m.cols != cols) {
            throw FormatError(std::string("tensor '") + name + "' has shape " + std::to_string(m.rows) +
                              "x" + std::to_string(m.cols) + ", expected " + std::to_string(rows) + "x" +
                              std::to_string(cols));
        }
    };
    const auto d = static_cast<std::size_t>(config_.d_model);
    const auto m = static_cast<std::size_t>(config_.d_mlp);
    const auto v = static_cast<std::size_t>(config_.vocab_size);
    check_matrix_shape(weights_.embed_tokens, v, d, "embed_tokens");
    for (const auto& layer : weights_.layers) {
        check_matrix_shape(layer.q_proj, d, d, "q_proj");
        check_matrix_shape(layer.k_proj, d, d, "k_proj");
        check_matrix_shape(layer.v_proj, d, d, "v_proj");
        check_matrix_shape(layer.o_proj, d, d, "o_proj");
        check_matrix_shape(layer.gate_proj, m, d, "gate_proj");
        check_matrix_shape(layer.up_proj, m, d, "up_proj");
        check_matrix_shape(layer.down_proj, d, m, "down_proj");
    }
    if (!config_.tie_embeddings) check_matrix_shape(weights_.lm_head, v, d, "lm_head");
    content_hash_ = xxh64(encode_payload(config_, actual));
}

std::vector<TensorView> ModelBundle::tensors() const { return layout_impl(config_, &weights_); }

ModelBundle generate_model(const ModelConfig& config, std::uint64_t seed) {
    validate(config);
    const auto d = static_cast<std::size_t>(config.d_model);
    const auto m = static_cast<std::size_t>(config.d_mlp);
    const auto v = static_cast<std::size_t>(config.vocab_size);

    std::uint64_t stream = 0;
    auto gaussian = [&](std::size_t rows, std::size_t cols, double fan_in) {
        Matrix out(rows, cols);
        CounterStream rng(seed, stream++);
        const double scale = 1.0 / std::sqrt(fan_in);
        for (float& x : out.data) x = static_cast<float>(scale * rng.next_normal());
        return out;
    };
    auto ones = [&](std::size_t n) {
        ++stream;
        return std::vector<float>(n, 1.0f);
    };

    ModelWeights w;
    w.embed_tokens = gaussian(v, d, 1.0);
    w.layers.resize(static_cast<std::size_t>(config.n_layers));
    for (auto& layer : w.layers) {
        layer.attn_norm = ones(d);
        layer.q_proj = gaussian(d, d, static_cast<double>(d));
        layer.k_proj = gaussian(d, d, static_cast<double>(d));
        layer.v_proj = gaussian(d, d, static_cast<double>(d));
        layer.o_proj = gaussian(d, d, static_cast<double>(d));
        layer.mlp_norm = ones(d);
        layer.gate_proj = gaussian(m, d, static_cast<double>(d));
        layer.up_proj = gaussian(m, d, static_cast<double>(d));
        layer.down_proj = gaussian(d, m, static_cast<double>(m));
    }
    w.final_norm = ones(d);
    if (!config.tie_embeddings) w.lm_head = gaussian(v, d, static_cast<double>(d));
    return ModelBundle(config, std::move(w));
}

ModelBundle plant_massive_activation(const ModelBundle& base, const MassiveActivation& params,
                                     PlantedSite* planted) {
    const ModelConfig& c = base.config();
    if (params.channels < 1 || params.channels + 1 > c.d_model || params.channels > c.d_mlp) {
        throw ConfigError("cannot plant " + std::to_string(params.channels) +
                          " massive channels in d_model=" + std::to_string(c.d_model));
    }
    ModelWeights w = base.weights();

    // Partial Fisher-Yates draws of distinct residual channels and hidden units.
    CounterStream rng(params.seed, 0x4d41535349564531ULL);
    auto draw = [&](int n, int k) {
        std::vector<int> pool(static_cast<std::size_t>(n));
        std::iota(pool.begin(), pool.end(), 0);
        for (int i = 0; i < k; ++i) {
            const auto j = i + static_cast<int>(rng.next_word() % static_cast<std::uint64_t>(n - i));
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        }
        pool.resize(static_cast<std::size_t>(k));
        return pool;
    };
    PlantedSite site;
    auto residual = draw(c.d_model, params.channels + 1);
    site.bias_channel = residual.back();
    residual.pop_back();
    site.residual_channels = residual;
    site.hidden_units = draw(c.d_mlp, params.channels);

    const auto bias = static_cast<std::size_t>(site.bias_channel);
    for (std::size_t r = 0; r < w.embed_tokens.rows; ++r) {
        w.embed_tokens(r, bias) = params.embed_bias;
        for (int ch : site.residual_channels) w.embed_tokens(r, static_cast<std::size_t>(ch)) = 0.0f;
    }
    LayerWeights& first = w.layers.front();
    for (std::size_t k = 0; k < site.hidden_units.size(); ++k) {
        const auto u = static_cast<std::size_t>(site.hidden_units[k]);
        const auto ch = static_cast<std::size_t>(site.residual_channels[k]);
        for (std::size_t i = 0; i < first.gate_proj.cols; ++i) {
            first.gate_proj(u, i) = 0.0f;
            first.up_proj(u, i) = 0.0f;
        }
        first.gate_proj(u, bias) = params.gate_gain;
        first.up_proj(u, bias) = params.gate_gain;
        for (std::size_t r = 0; r < first.down_proj.rows; ++r) first.down_proj(r, u) = 0.0f;
        first.down_proj(ch, u) = params.down_gain;
    }

    std::fill(w.final_norm.begin(), w.final_norm.end(), params.head_gain);
    if (!c.tie_embeddings) {
        // Tied heads read the zeroed embedding columns already.
        for (std::size_t r = 0; r < w.lm_head.rows; ++r) {
            for (int ch : site.residual_channels) w.lm_head(r, static_cast<std::size_t>(ch)) = 0.0f;
        }
    }
    if (planted) *planted = std::move(site);
    return ModelBundle(c, std::move(w));
}

void check_tokens(const ModelConfig& config, const TokenSequence& tokens) {
    if (tokens.ids.empty()) throw InputError("token sequence is empty");
    if (tokens.size() > static_cast<std::size_t>(config.max_seq_len)) {
        throw LengthError("sequence length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                          std::to_string(config.max_seq_len));
    }
    for (int id : tokens.ids) {
        if (id < 0 || id >= config.vocab_size) {
            throw InputError("token id " + std::to_string(id) + " outside vocabulary of size " +
                             std::to_string(config.vocab_size));
        }
    }
}

Matrix embed(const ModelBundle& bundle, const TokenSequence& tokens) {
    check_tokens(bundle.config(), tokens);
    const auto& table = bundle.weights().embed_tokens;
    Matrix out(tokens.size(), table.cols);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const auto src = table.row(static_cast<std::size_t>(tokens.ids[t]));
        std::copy(src.begin(), src.end(), out.row(t).begin());
    }
    return out;
}

namespace {

void rms_norm(std::span<const float> x, std::span<const float> gain, float eps, std::span<float> out) {
    float ss = 0.0f;
    for (float v : x) ss += v * v;
    const float inv = 1.0f / std::sqrt(ss / static_cast<float>(x.size()) + eps);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gain[i];
}

// out[o] = sum_i w[o][i] * x[i]
void matvec(const Matrix& w, std::span<const float> x, std::span<float> out) {
    for (std::size_t o = 0; o < w.rows; ++o) {
        const float* row = w.data.data() + o * w.cols;
        float acc = 0.0f;
        for (std::size_t i = 0; i < w.cols; ++i) acc += row[i] * x[i];
        out[o] = acc;
    }
}

// Half-split rotary embedding: pairs (i, i + half) inside each head.
void apply_rope(std::span<float> v, int n_heads, int head_dim, std::size_t pos) {
    const int half = head_dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(static_cast<double>(kRopeTheta), -2.0 * i / head_dim);
        const double angle = static_cast<double>(pos) * freq;
        const auto c = static_cast<float>(std::cos(angle));
        const auto s = static_cast<float>(std::sin(angle));
        for (int h = 0; h < n_heads; ++h) {
            float& a = v[static_cast<std::size_t>(h * head_dim + i)];
            float& b = v[static_cast<std::size_t>(h * head_dim + i + half)];
            const float a0 = a;
            const float b0 = b;
            a = a0 * c - b0 * s;
            b = a0 * s + b0 * c;
        }
    }
}

float silu(float x) { return x / (1.0f + std::exp(-x)); }

struct SitePlan {
    std::vector<int> indices;
    bool capture = false;
};

}  // namespace

ForwardResult forward(const ModelBundle& bundle, const Matrix& embeddings,
                      const InterventionSpec& intervention, std::span<const SiteId> capture) {
    g_forward_calls.fetch_add(1, std::memory_order_relaxed);
    const ModelConfig& c = bundle.config();
    const ModelWeights& w = bundle.weights();
    const std::size_t T = embeddings.rows;
    const auto d = static_cast<std::size_t>(c.d_model);
    const auto m = static_cast<std::size_t>(c.d_mlp);
    if (T < 1 || T > static_cast<std::size_t>(c.max_seq_len)) {
        throw LengthError("sequence length " + std::to_string(T) + " outside [1, max_seq_len=" +
                          std::to_string(c.max_seq_len) + "]");
    }
    if (embeddings.cols != d) {
        throw InputError("embedding width " + std::to_string(embeddings.cols) + " != d_model " +
                         std::to_string(d));
    }

    // plan[layer][kind]
    std::vector<std::array<SitePlan, kSiteKinds.size()>> plan(static_cast<std::size_t>(c.n_layers));
    for (const NeuronId& id : intervention.neurons()) {
        check_address(c, id);
        plan[static_cast<std::size_t>(id.layer())][static_cast<std::size_t>(id.kind())].indices.push_back(id.index);
    }
    ForwardResult result;
    for (const SiteId& site : capture) {
        check_address(c, site);
        plan[static_cast<std::size_t>(site.layer)][static_cast<std::size_t>(site.kind)].capture = true;
        result.tape[site] = Matrix(T, site_width(c, site.kind));
    }
    const double beta = intervention.beta();
    const double offset = intervention.offset();
    auto intervene = [&](int layer, SiteKind kind, std::size_t t, std::span<float> row) {
        const SitePlan& p = plan[static_cast<std::size_t>(layer)][static_cast<std::size_t>(kind)];
        if (!p.indices.empty()) apply_to_channels(row, p.indices, beta, offset);
        if (p.capture) {
            auto dst = result.tape[SiteId{layer, kind}].row(t);
            std::copy(row.begin(), row.end(), dst.begin());
        }
    };

    const auto eps = static_cast<float>(c.norm_eps);
    const int n_heads = c.n_heads;
    const int head_dim = c.head_dim();
    const float attn_scale = 1.0f / std::sqrt(static_cast<float>(head_dim));

    Matrix x = embeddings;
    Matrix normed(T, d);
    Matrix q(T, d), k(T, d), v(T, d);
    std::vector<float> mixed(d), proj(d), gate(m), up(m), scores(T);

    for (int l = 0; l < c.n_layers; ++l) {
        const LayerWeights& lw = w.layers[static_cast<std::size_t>(l)];

        for (std::size_t t = 0; t < T; ++t) {
            rms_norm(x.row(t), lw.attn_norm, eps, normed.row(t));
            matvec(lw.q_proj, normed.row(t), q.row(t));
            matvec(lw.k_proj, normed.row(t), k.row(t));
            matvec(lw.v_proj, normed.row(t), v.row(t));
            apply_rope(q.row(t), n_heads, head_dim, t);
            apply_rope(k.row(t), n_heads, head_dim, t);
        }
        for (std::size_t t = 0; t < T; ++t) {
            std::fill(mixed.begin(), mixed.end(), 0.0f);
            for (int h = 0; h < n_heads; ++h) {
                const std::size_t off = static_cast<std::size_t>(h * head_dim);
                float max_score = -INFINITY;
                for (std::size_t s = 0; s <= t; ++s) {
                    float dot = 0.0f;
                    for (int i = 0; i < head_dim; ++i) dot += q(t, off + i) * k(s, off + i);
                    scores[s] = dot * attn_scale;
                    max_score = std::max(max_score, scores[s]);
                }
                float denom = 0.0f;
                for (std::size_t s = 0; s <= t; ++s) {
                    scores[s] = std::exp(scores[s] - max_score);
                    denom += scores[s];
                }
                for (std::size_t s = 0; s <= t; ++s) {
                    const float p = scores[s] / denom;
                    for (int i = 0; i < head_dim; ++i) mixed[off + i] += p * v(s, off + i);
                }
            }
            matvec(lw.o_proj, mixed, proj);
            intervene(l, SiteKind::AttnOOut, t, proj);
            auto xr = x.row(t);
            for (std::size_t i = 0; i < d; ++i) xr[i] += proj[i];
        }

        for (std::size_t t = 0; t < T; ++t) {
            auto xr = x.row(t);
            rms_norm(xr, lw.mlp_norm, eps, normed.row(t));
            matvec(lw.gate_proj, normed.row(t), gate);
            matvec(lw.up_proj, normed.row(t), up);
            for (std::size_t j = 0; j < m; ++j) gate[j] = silu(gate[j]) * up[j];
            intervene(l, SiteKind::MlpAct, t, gate);
            matvec(lw.down_proj, gate, proj);
            intervene(l, SiteKind::MlpDownOut, t, proj);
            for (std::size_t i = 0; i < d; ++i) xr[i] += proj[i];
        }
    }

    const Matrix& head = bundle.output_head();
    result.logits = Matrix(T, head.rows);
    for (std::size_t t = 0; t < T; ++t) {
        rms_norm(x.row(t), w.final_norm, eps, normed.row(t));
        matvec(head, normed.row(t), result.logits.row(t));
    }
    return result;
}

std::uint64_t forward_call_count() { return g_forward_calls.load(std::memory_order_relaxed); }
void reset_forward_call_count() { g_forward_calls.store(0, std::memory_order_relaxed); }

}  // namespace lesion
