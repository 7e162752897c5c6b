#include "lesion/model_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "lesion/error.hpp"
#include "lesion/xxhash64.hpp"

namespace lesion {
namespace {

static_assert(std::numeric_limits<float>::is_iec559, "binary32 floats required");

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::byte* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint32_t>(p[i]);
    return v;
}

std::uint64_t get_u64(const std::byte* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint64_t>(p[i]);
    return v;
}

// Reads a fixed-size integer field with bounds/type checks.
int int_field(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_number_integer()) {
        throw FormatError(std::string("NLF1 config: missing or non-integer field '") + key + "'");
    }
    const auto v = j.at(key).get<std::int64_t>();
    if (v < 1 || v > (1 << 24)) {
        throw FormatError(std::string("NLF1 config: field '") + key + "' out of range");
    }
    return static_cast<int>(v);
}

void fill_tensor(std::span<float> dst, const std::byte*& p, const std::string& name) {
    for (float& v : dst) {
        v = std::bit_cast<float>(get_u32(p));
        p += 4;
        if (!std::isfinite(v)) throw FormatError("NLF1: non-finite value in tensor '" + name + "'");
    }
}

}  // namespace

std::vector<std::byte> encode_payload(const ModelConfig& config,
                                      const std::vector<TensorView>& tensors) {
    nlohmann::json header = {
        {"n_layers", config.n_layers},       {"d_model", config.d_model},
        {"n_heads", config.n_heads},         {"d_mlp", config.d_mlp},
        {"vocab_size", config.vocab_size},   {"max_seq_len", config.max_seq_len},
        {"norm_eps", config.norm_eps},       {"tie_embeddings", config.tie_embeddings},
    };
    auto order = nlohmann::json::array();
    std::size_t n_values = 0;
    for (const auto& t : tensors) {
        order.push_back(t.name);
        n_values += t.values.size();
    }
    header["tensor_order"] = std::move(order);
    const std::string text = header.dump();

    std::vector<std::byte> out;
    out.reserve(8 + text.size() + 4 * n_values + 8);
    for (char c : kNlfMagic) out.push_back(static_cast<std::byte>(c));
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    for (char c : text) out.push_back(static_cast<std::byte>(c));
    for (const auto& t : tensors) {
        for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

std::vector<std::byte> encode_model(const ModelBundle& bundle) {
    auto out = encode_payload(bundle.config(), bundle.tensors());
    put_u64(out, xxh64(out));
    return out;
}

ModelBundle decode_model(std::span<const std::byte> bytes) {
    if (bytes.size() < 16) throw FormatError("NLF1: file too short");
    if (std::memcmp(bytes.data(), kNlfMagic, 4) != 0) throw FormatError("NLF1: bad magic");
    const std::uint32_t json_len = get_u32(bytes.data() + 4);
    if (json_len > bytes.size() - 16) throw FormatError("NLF1: truncated config block");

    const std::uint64_t stored = get_u64(bytes.data() + bytes.size() - 8);
    const std::uint64_t actual = xxh64(bytes.first(bytes.size() - 8));

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(
            std::string_view(reinterpret_cast<const char*>(bytes.data() + 8), json_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("NLF1: config block is not valid JSON: ") + e.what());
    }
    if (!header.is_object()) throw FormatError("NLF1: config block is not a JSON object");

    ModelConfig config;
    config.n_layers = int_field(header, "n_layers");
    config.d_model = int_field(header, "d_model");
    config.n_heads = int_field(header, "n_heads");
    config.d_mlp = int_field(header, "d_mlp");
    config.vocab_size = int_field(header, "vocab_size");
    config.max_seq_len = int_field(header, "max_seq_len");
    if (!header.contains("norm_eps") || !header["norm_eps"].is_number()) {
        throw FormatError("NLF1 config: missing field 'norm_eps'");
    }
    config.norm_eps = header["norm_eps"].get<double>();
    if (!header.contains("tie_embeddings") || !header["tie_embeddings"].is_boolean()) {
        throw FormatError("NLF1 config: missing field 'tie_embeddings'");
    }
    config.tie_embeddings = header["tie_embeddings"].get<bool>();
    try {
        validate(config);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("NLF1 config: ") + e.what());
    }

    const auto layout = tensor_layout(config);
    if (!header.contains("tensor_order") || !header["tensor_order"].is_array() ||
        header["tensor_order"].size() != layout.size()) {
        throw FormatError("NLF1 config: tensor_order does not match the architecture");
    }
    std::size_t expected_values = 0;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& name = header["tensor_order"][i];
        if (!name.is_string() || name.get<std::string>() != layout[i].name) {
            throw FormatError("NLF1: tensor_order entry " + std::to_string(i) + " should be '" +
                              layout[i].name + "'");
        }
        expected_values += layout[i].rows * layout[i].cols;
    }
    const std::size_t body = bytes.size() - 16 - json_len;
    if (body != 4 * expected_values) {
        throw FormatError("NLF1: tensor data is " + std::to_string(body) + " bytes, expected " +
                          std::to_string(4 * expected_values) + " (truncated or shape mismatch)");
    }
    const std::byte* p = bytes.data() + 8 + json_len;
    const auto d = static_cast<std::size_t>(config.d_model);
    const auto v = static_cast<std::size_t>(config.vocab_size);
    const auto m = static_cast<std::size_t>(config.d_mlp);
    ModelWeights w;
    auto read_matrix = [&](Matrix& dst, std::size_t rows, std::size_t cols, const std::string& name) {
        dst = Matrix(rows, cols);
        fill_tensor(dst.data, p, name);
    };
    auto read_vector = [&](std::vector<float>& dst, std::size_t n, const std::string& name) {
        dst.assign(n, 0.0f);
        fill_tensor(dst, p, name);
    };
    std::size_t k = 0;
    read_matrix(w.embed_tokens, v, d, layout[k++].name);
    w.layers.resize(static_cast<std::size_t>(config.n_layers));
    for (auto& layer : w.layers) {
        read_vector(layer.attn_norm, d, layout[k++].name);
        read_matrix(layer.q_proj, d, d, layout[k++].name);
        read_matrix(layer.k_proj, d, d, layout[k++].name);
        read_matrix(layer.v_proj, d, d, layout[k++].name);
        read_matrix(layer.o_proj, d, d, layout[k++].name);
        read_vector(layer.mlp_norm, d, layout[k++].name);
        read_matrix(layer.gate_proj, m, d, layout[k++].name);
        read_matrix(layer.up_proj, m, d, layout[k++].name);
        read_matrix(layer.down_proj, d, m, layout[k++].name);
    }
    read_vector(w.final_norm, d, layout[k++].name);
    if (!config.tie_embeddings) read_matrix(w.lm_head, v, d, layout[k++].name);
    if (stored != actual) throw FormatError("NLF1: digest mismatch (file corrupted)");
    return ModelBundle(config, std::move(w));
}

void save_model(const ModelBundle& bundle, const std::filesystem::path& path) {
    const auto bytes = encode_model(bundle);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

ModelBundle load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open model file '" + path.string() + "'");
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_model(std::as_bytes(std::span(raw.data(), raw.size())));
}

}  // namespace lesion
