#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "bgnn/model.hpp"
#include "bgnn/normstats.hpp"

namespace bgnn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; byte swapping is not implemented");

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline const char* base64_alphabet() {
    return "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

inline std::string base64_encode(const unsigned char* data, std::size_t len) {
    const char* tab = base64_alphabet();
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        const unsigned b0 = data[i];
        const unsigned b1 = i + 1 < len ? data[i + 1] : 0;
        const unsigned b2 = i + 2 < len ? data[i + 2] : 0;
        out.push_back(tab[b0 >> 2]);
        out.push_back(tab[((b0 & 0x3) << 4) | (b1 >> 4)]);
        out.push_back(i + 1 < len ? tab[((b1 & 0xf) << 2) | (b2 >> 6)] : '=');
        out.push_back(i + 2 < len ? tab[b2 & 0x3f] : '=');
    }
    return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& text) {
    int lookup[256];
    std::fill(std::begin(lookup), std::end(lookup), -1);
    const char* tab = base64_alphabet();
    for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(tab[i])] = i;

    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    int bits = 0;
    int acc = 0;
    for (char c : text) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        const int v = lookup[static_cast<unsigned char>(c)];
        if (v < 0) throw CheckpointError("invalid base64 character");
        acc = (acc << 6) | v;
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<unsigned char>((acc >> bits) & 0xff));
        }
    }
    return out;
}

inline std::string encode_doubles(const std::vector<double>& values) {
    return base64_encode(reinterpret_cast<const unsigned char*>(values.data()),
                         values.size() * sizeof(double));
}

inline std::vector<double> decode_doubles(const std::string& text, std::size_t expected) {
    const auto bytes = base64_decode(text);
    if (bytes.size() != expected * sizeof(double))
        throw CheckpointError("parameter blob has wrong size");
    std::vector<double> values(expected);
    std::memcpy(values.data(), bytes.data(), bytes.size());
    return values;
}

} // namespace detail

inline void to_json(nlohmann::json& j, const NetConfig& cfg) {
    j = {{"layers", cfg.layers},
         {"node_width", cfg.node_width},
         {"edge_width", cfg.edge_width},
         {"boundary_feature_boost", cfg.boundary_feature_boost},
         {"seed", cfg.seed}};
}

inline void from_json(const nlohmann::json& j, NetConfig& cfg) {
    cfg.layers = j.value("layers", cfg.layers);
    cfg.node_width = j.value("node_width", cfg.node_width);
    cfg.edge_width = j.value("edge_width", cfg.edge_width);
    cfg.boundary_feature_boost = j.value("boundary_feature_boost", cfg.boundary_feature_boost);
    cfg.seed = j.value("seed", cfg.seed);
}

inline std::string to_string(EdgeFeatureLaw law) {
    switch (law) {
        case EdgeFeatureLaw::Plain: return "plain";
        case EdgeFeatureLaw::InverseFirst: return "inverse_first";
        case EdgeFeatureLaw::InverseSquare: return "inverse_square";
    }
    return "plain";
}

inline EdgeFeatureLaw edge_feature_law_from_string(const std::string& s) {
    if (s == "plain") return EdgeFeatureLaw::Plain;
    if (s == "inverse_first") return EdgeFeatureLaw::InverseFirst;
    if (s == "inverse_square") return EdgeFeatureLaw::InverseSquare;
    throw CheckpointError("unknown edge feature law: " + s);
}

inline std::string to_string(BoundaryMode mode) {
    switch (mode) {
        case BoundaryMode::VirtualPerPair: return "virtual_per_pair";
        case BoundaryMode::SuperNodePerTriangle: return "super_node_per_triangle";
        case BoundaryMode::SampledBoundary: return "sampled_boundary";
    }
    return "virtual_per_pair";
}

inline BoundaryMode boundary_mode_from_string(const std::string& s) {
    if (s == "virtual_per_pair") return BoundaryMode::VirtualPerPair;
    if (s == "super_node_per_triangle") return BoundaryMode::SuperNodePerTriangle;
    if (s == "sampled_boundary") return BoundaryMode::SampledBoundary;
    throw CheckpointError("unknown boundary mode: " + s);
}

inline void to_json(nlohmann::json& j, const GraphConfig& cfg) {
    j = {{"r_cutoff", cfg.r_cutoff},
         {"r_tilde_cutoff", cfg.r_tilde_cutoff},
         {"history", cfg.history},
         {"edge_feature_law", to_string(cfg.edge_feature_law)},
         {"boundary_mode", to_string(cfg.boundary_mode)},
         {"boundary_spacing", cfg.boundary_spacing},
         {"bidirectional_boundary", cfg.bidirectional_boundary}};
}

inline void from_json(const nlohmann::json& j, GraphConfig& cfg) {
    cfg.r_cutoff = j.value("r_cutoff", cfg.r_cutoff);
    cfg.r_tilde_cutoff = j.value("r_tilde_cutoff", cfg.r_tilde_cutoff);
    cfg.history = j.value("history", cfg.history);
    if (j.contains("edge_feature_law"))
        cfg.edge_feature_law = edge_feature_law_from_string(j.at("edge_feature_law").get<std::string>());
    if (j.contains("boundary_mode"))
        cfg.boundary_mode = boundary_mode_from_string(j.at("boundary_mode").get<std::string>());
    cfg.boundary_spacing = j.value("boundary_spacing", cfg.boundary_spacing);
    cfg.bidirectional_boundary = j.value("bidirectional_boundary", cfg.bidirectional_boundary);
}

inline void to_json(nlohmann::json& j, const NormStats& stats) {
    j = {{"node_mean", stats.node_mean},     {"node_std", stats.node_std},
         {"edge_mean", stats.edge_mean},     {"edge_std", stats.edge_std},
         {"target_mean", stats.target_mean}, {"target_std", stats.target_std}};
}

inline void from_json(const nlohmann::json& j, NormStats& stats) {
    stats.node_mean = j.at("node_mean").get<std::vector<double>>();
    stats.node_std = j.at("node_std").get<std::vector<double>>();
    stats.edge_mean = j.at("edge_mean").get<std::vector<double>>();
    stats.edge_std = j.at("edge_std").get<std::vector<double>>();
    stats.target_mean = j.at("target_mean").get<std::vector<double>>();
    stats.target_std = j.at("target_std").get<std::vector<double>>();
}

// Everything needed to run a trained model.
struct Checkpoint {
    ModelParams params;
    NormStats stats;
    GraphConfig graph;
};

constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
    nlohmann::json j;
    j["format"] = "bgnn-checkpoint";
    j["version"] = kCheckpointVersion;
    j["net"] = ckpt.params.config;
    j["graph"] = ckpt.graph;
    j["feature_widths"] = {{"node", ckpt.params.node_feature_width},
                           {"edge", ckpt.params.edge_feature_width}};
    j["normalization"] = ckpt.stats;

    nlohmann::json blobs = nlohmann::json::object();
    for_each_param(ckpt.params, [&](const std::string& name, const Tensor2& t) {
        blobs[name] = {{"rows", t.rows}, {"cols", t.cols}, {"data", detail::encode_doubles(t.data)}};
    });
    j["params"] = std::move(blobs);
    return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != "bgnn-checkpoint")
        throw CheckpointError("not a checkpoint file");
    if (j.value("version", 0) != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version");

    Checkpoint ckpt;
    const NetConfig net = j.at("net").get<NetConfig>();
    ckpt.graph = j.at("graph").get<GraphConfig>();
    ckpt.stats = j.at("normalization").get<NormStats>();
    const int node_width = j.at("feature_widths").at("node").get<int>();
    const int edge_width = j.at("feature_widths").at("edge").get<int>();

    ckpt.params = init_params(net, node_width, edge_width);
    const auto& blobs = j.at("params");
    for_each_param(ckpt.params, [&](const std::string& name, Tensor2& t) {
        const auto& blob = blobs.at(name);
        if (blob.at("rows").get<int>() != t.rows || blob.at("cols").get<int>() != t.cols)
            throw CheckpointError("parameter " + name + " has unexpected shape");
        t.data = detail::decode_doubles(blob.at("data").get<std::string>(), t.size());
    });
    return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw CheckpointError("cannot write checkpoint: " + path);
    out << checkpoint_to_json(ckpt).dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    return checkpoint_from_json(nlohmann::json::parse(in));
}

} // namespace bgnn
