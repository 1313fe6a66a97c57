#pragma once

#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "bgnn/graph.hpp"
#include "bgnn/nn.hpp"

namespace bgnn {

struct ModelError : std::runtime_error {
    explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

struct NetConfig {
    int layers = 3;     // message passing rounds
    int node_width = 64;
    int edge_width = 64;
    double boundary_feature_boost = 3.0; // virtual copies of the 7 boundary-indicator columns
    std::uint64_t seed = 0;

    void validate() const {
        if (layers < 1) throw ModelError("NetConfig: need at least one message passing layer");
        if (node_width < 1 || edge_width < 1) throw ModelError("NetConfig: widths must be positive");
        if (!(boundary_feature_boost >= 1.0)) throw ModelError("NetConfig: boost must be >= 1");
    }
};

struct MessagePassingLayer {
    MlpParams edge_mlp; // phi-hat
    MlpParams node_mlp; // psi-hat
};

struct ModelParams {
    NetConfig config;
    int node_feature_width = 0;
    int edge_feature_width = 0;
    MlpParams node_encoder; // no layer norm
    MlpParams edge_encoder; // no layer norm
    std::vector<MessagePassingLayer> layers;
    MlpParams decoder; // no layer norm, 3 outputs

    void alloc_grads() {
        node_encoder.alloc_grads();
        edge_encoder.alloc_grads();
        for (auto& l : layers) { l.edge_mlp.alloc_grads(); l.node_mlp.alloc_grads(); }
        decoder.alloc_grads();
    }
    void zero_grads() {
        node_encoder.zero_grads();
        edge_encoder.zero_grads();
        for (auto& l : layers) { l.edge_mlp.zero_grads(); l.node_mlp.zero_grads(); }
        decoder.zero_grads();
    }
};

// Number of trailing node-feature columns that mark boundaries: the type
// indicator plus the six ordered-normal components.
constexpr int kBoundaryIndicatorColumns = 7;

// Weights are N(0, 2 / fan_in), with the node encoder's fan-in enlarged by
// (boost - 1) virtual copies of each boundary-indicator column. Deterministic
// per seed: every block draws from its own labelled stream.
inline ModelParams init_params(const NetConfig& cfg, int node_feature_width, int edge_feature_width) {
    cfg.validate();
    if (node_feature_width <= kBoundaryIndicatorColumns)
        throw ModelError("init_params: node feature width too small");

    ModelParams params;
    params.config = cfg;
    params.node_feature_width = node_feature_width;
    params.edge_feature_width = edge_feature_width;

    const double boost_extra = (cfg.boundary_feature_boost - 1.0) * kBoundaryIndicatorColumns;

    {
        Rng rng = Rng::stream(cfg.seed, "init/node_encoder");
        params.node_encoder = make_mlp(node_feature_width, cfg.node_width, cfg.node_width, false, rng, boost_extra);
    }
    {
        Rng rng = Rng::stream(cfg.seed, "init/edge_encoder");
        params.edge_encoder = make_mlp(edge_feature_width, cfg.edge_width, cfg.edge_width, false, rng);
    }
    params.layers.resize(cfg.layers);
    for (int l = 0; l < cfg.layers; ++l) {
        {
            Rng rng = Rng::stream(cfg.seed, "init/layer" + std::to_string(l) + "/edge");
            params.layers[l].edge_mlp =
                make_mlp(2 * cfg.node_width + cfg.edge_width, cfg.edge_width, cfg.edge_width, true, rng);
        }
        {
            Rng rng = Rng::stream(cfg.seed, "init/layer" + std::to_string(l) + "/node");
            params.layers[l].node_mlp =
                make_mlp(cfg.node_width + cfg.edge_width, cfg.node_width, cfg.node_width, true, rng);
        }
    }
    {
        Rng rng = Rng::stream(cfg.seed, "init/decoder");
        params.decoder = make_mlp(cfg.node_width, cfg.node_width, 3, false, rng);
    }
    return params;
}

// Visits every parameter tensor in a fixed order under a stable name.
template <typename Params, typename Fn>
void for_each_param(Params& params, Fn&& fn) {
    const auto visit_mlp = [&](const std::string& prefix, auto& mlp) {
        fn(prefix + ".w1", mlp.w1);
        fn(prefix + ".b1", mlp.b1);
        fn(prefix + ".w2", mlp.w2);
        fn(prefix + ".b2", mlp.b2);
        if (mlp.has_layer_norm) {
            fn(prefix + ".ln_gain", mlp.ln_gain);
            fn(prefix + ".ln_bias", mlp.ln_bias);
        }
    };
    visit_mlp("node_encoder", params.node_encoder);
    visit_mlp("edge_encoder", params.edge_encoder);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        visit_mlp("layers." + std::to_string(l) + ".edge_mlp", params.layers[l].edge_mlp);
        visit_mlp("layers." + std::to_string(l) + ".node_mlp", params.layers[l].node_mlp);
    }
    visit_mlp("decoder", params.decoder);
}

struct LayerCache {
    Tensor2 edge_concat;
    MlpCache edge_mlp;
    Tensor2 messages;   // after residual
    Tensor2 aggregated; // per-node mean of incoming messages
    Tensor2 node_concat;
    MlpCache node_mlp;
    Tensor2 h; // node embeddings after this layer
};

struct ForwardCache {
    const BoundaryGraph* graph = nullptr;
    MlpCache node_enc;
    MlpCache edge_enc;
    std::vector<LayerCache> layers;
    MlpCache decoder;
    Tensor2 decoder_input;
    Tensor2 output; // [num_real] x 3
    // Nodes with no incoming edges keep their embedding through a layer;
    // their aggregate is the zero vector and no update is applied.
    std::vector<char> has_incoming;
};

namespace detail {

// Mean of incoming messages per node. Summation follows a value-sorted order,
// which makes the result independent of edge enumeration (and hence exactly
// permutation-equivariant).
inline void aggregate_mean(const BoundaryGraph& graph, const Tensor2& messages, Tensor2& out) {
    out = Tensor2(graph.num_nodes(), messages.cols);
    std::vector<int> order;
    for (int node = 0; node < graph.num_nodes(); ++node) {
        const auto& inc = graph.incoming[node];
        if (inc.empty()) continue;
        order.assign(inc.begin(), inc.end());
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            const double* ra = messages.row(a);
            const double* rb = messages.row(b);
            for (int c = 0; c < messages.cols; ++c) {
                if (ra[c] < rb[c]) return true;
                if (ra[c] > rb[c]) return false;
            }
            return false;
        });
        double* dst = out.row(node);
        for (int e : order) {
            const double* src = messages.row(e);
            for (int c = 0; c < messages.cols; ++c) dst[c] += src[c];
        }
        const double inv = 1.0 / static_cast<double>(inc.size());
        for (int c = 0; c < messages.cols; ++c) dst[c] *= inv;
    }
}

inline void concat_rows(const double* a, int na, const double* b, int nb, double* dst) {
    for (int i = 0; i < na; ++i) dst[i] = a[i];
    for (int i = 0; i < nb; ++i) dst[na + i] = b[i];
}

} // namespace detail

// Encode, L rounds of message passing with residual connections on both
// updates, then decode real-node embeddings into (normalized) accelerations.
// Callers pass normalized feature matrices; build_graph output can be fed
// directly for unnormalized use.
inline Tensor2 forward(const BoundaryGraph& graph, const ModelParams& params, const Tensor2& node_feats,
                       const Tensor2& edge_feats, ForwardCache& cache) {
    if (node_feats.cols != params.node_feature_width)
        throw ModelError("forward: node feature width mismatch");
    if (edge_feats.cols != params.edge_feature_width)
        throw ModelError("forward: edge feature width mismatch");
    if (node_feats.rows != graph.num_nodes() || edge_feats.rows != static_cast<int>(graph.edges.size()))
        throw ModelError("forward: feature row count mismatch");

    cache.graph = &graph;
    cache.has_incoming.resize(graph.num_nodes());
    for (int i = 0; i < graph.num_nodes(); ++i) cache.has_incoming[i] = !graph.incoming[i].empty();

    mlp_forward(params.node_encoder, node_feats, cache.node_enc);
    mlp_forward(params.edge_encoder, edge_feats, cache.edge_enc);

    const int nw = params.config.node_width;
    const int ew = params.config.edge_width;
    const int num_edges = edge_feats.rows;

    cache.layers.clear();
    cache.layers.resize(params.layers.size());
    const Tensor2* h = &cache.node_enc.out;
    const Tensor2* m = &cache.edge_enc.out;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        LayerCache& lc = cache.layers[l];

        lc.edge_concat = Tensor2(num_edges, 2 * nw + ew);
        for (int e = 0; e < num_edges; ++e) {
            const Edge& edge = graph.edges[e];
            double* dst = lc.edge_concat.row(e);
            detail::concat_rows(h->row(edge.receiver), nw, h->row(edge.sender), nw, dst);
            const double* me = m->row(e);
            for (int c = 0; c < ew; ++c) dst[2 * nw + c] = me[c];
        }
        mlp_forward(params.layers[l].edge_mlp, lc.edge_concat, lc.edge_mlp);
        lc.messages = lc.edge_mlp.out;
        for (int e = 0; e < num_edges; ++e) {
            double* dst = lc.messages.row(e);
            const double* res = m->row(e);
            for (int c = 0; c < ew; ++c) dst[c] += res[c];
        }

        detail::aggregate_mean(graph, lc.messages, lc.aggregated);

        lc.node_concat = Tensor2(graph.num_nodes(), nw + ew);
        for (int i = 0; i < graph.num_nodes(); ++i)
            detail::concat_rows(h->row(i), nw, lc.aggregated.row(i), ew, lc.node_concat.row(i));
        mlp_forward(params.layers[l].node_mlp, lc.node_concat, lc.node_mlp);

        lc.h = *h;
        for (int i = 0; i < graph.num_nodes(); ++i) {
            if (!cache.has_incoming[i]) continue; // no messages: embedding passes through
            double* dst = lc.h.row(i);
            const double* upd = lc.node_mlp.out.row(i);
            for (int c = 0; c < nw; ++c) dst[c] += upd[c];
        }

        h = &lc.h;
        m = &lc.messages;
    }

    cache.decoder_input = Tensor2(graph.num_real(), nw);
    for (int i = 0; i < graph.num_real(); ++i)
        for (int c = 0; c < nw; ++c) cache.decoder_input.at(i, c) = h->at(i, c);
    mlp_forward(params.decoder, cache.decoder_input, cache.decoder);
    cache.output = cache.decoder.out;
    return cache.output;
}

struct InputGradients {
    Tensor2 node_features;
    Tensor2 edge_features;
};

// Exact reverse pass of forward(); accumulates parameter gradients into the
// grad buffers of `params` and returns gradients w.r.t. the input features.
inline InputGradients backward(const ForwardCache& cache, ModelParams& params, const Tensor2& d_output) {
    const BoundaryGraph& graph = *cache.graph;
    if (!same_shape(d_output, cache.output)) throw ModelError("backward: upstream gradient shape mismatch");

    const int nw = params.config.node_width;
    const int ew = params.config.edge_width;
    const int num_edges = static_cast<int>(graph.edges.size());

    Tensor2 d_decoder_in;
    mlp_backward(params.decoder, cache.decoder, d_output, d_decoder_in);

    // d_h: gradient w.r.t. the final node embeddings.
    Tensor2 d_h(graph.num_nodes(), nw);
    for (int i = 0; i < graph.num_real(); ++i)
        for (int c = 0; c < nw; ++c) d_h.at(i, c) = d_decoder_in.at(i, c);

    Tensor2 d_m(num_edges, ew); // gradient w.r.t. messages of the layer below

    for (int l = static_cast<int>(params.layers.size()) - 1; l >= 0; --l) {
        const LayerCache& lc = cache.layers[l];

        // Node update: h' = h + psi(concat(h, agg)) for nodes with incoming
        // edges; pass-through otherwise.
        Tensor2 d_update = Tensor2(graph.num_nodes(), nw);
        for (int i = 0; i < graph.num_nodes(); ++i)
            if (cache.has_incoming[i])
                for (int c = 0; c < nw; ++c) d_update.at(i, c) = d_h.at(i, c);

        Tensor2 d_node_concat;
        mlp_backward(params.layers[l].node_mlp, lc.node_mlp, d_update, d_node_concat);

        Tensor2 d_h_prev(graph.num_nodes(), nw);
        Tensor2 d_agg(graph.num_nodes(), ew);
        for (int i = 0; i < graph.num_nodes(); ++i) {
            const double* src = d_node_concat.row(i);
            double* dh = d_h_prev.row(i);
            double* da = d_agg.row(i);
            for (int c = 0; c < nw; ++c) dh[c] = src[c] + d_h.at(i, c); // residual path
            for (int c = 0; c < ew; ++c) da[c] = src[nw + c];
        }

        // Mean aggregation distributes 1/deg to each incoming edge.
        Tensor2 d_messages(num_edges, ew);
        for (int i = 0; i < graph.num_nodes(); ++i) {
            const auto& inc = graph.incoming[i];
            if (inc.empty()) continue;
            const double inv = 1.0 / static_cast<double>(inc.size());
            const double* da = d_agg.row(i);
            for (int e : inc) {
                double* dst = d_messages.row(e);
                for (int c = 0; c < ew; ++c) dst[c] += da[c] * inv;
            }
        }
        // Plus the contribution of messages fed into the next layer (or loss).
        for (std::size_t i = 0; i < d_messages.data.size(); ++i) d_messages.data[i] += d_m.data[i];

        Tensor2 d_edge_concat;
        mlp_backward(params.layers[l].edge_mlp, lc.edge_mlp, d_messages, d_edge_concat);

        // Residual on the edge update.
        d_m = d_messages;

        for (int e = 0; e < num_edges; ++e) {
            const Edge& edge = graph.edges[e];
            const double* src = d_edge_concat.row(e);
            double* drecv = d_h_prev.row(edge.receiver);
            double* dsend = d_h_prev.row(edge.sender);
            for (int c = 0; c < nw; ++c) {
                drecv[c] += src[c];
                dsend[c] += src[nw + c];
            }
            double* dm = d_m.row(e);
            for (int c = 0; c < ew; ++c) dm[c] += src[2 * nw + c];
        }

        d_h = std::move(d_h_prev);
    }

    InputGradients grads;
    mlp_backward(params.node_encoder, cache.node_enc, d_h, grads.node_features);
    mlp_backward(params.edge_encoder, cache.edge_enc, d_m, grads.edge_features);
    return grads;
}

} // namespace bgnn
