#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "bgnn/model.hpp"
#include "bgnn/rng.hpp"

using namespace bgnn;

namespace {

TriMesh floor_mesh() {
    return make_mesh({{-10, -10, 0}, {10, -10, 0}, {10, 10, 0}, {-10, 10, 0}},
                     {{0, 1, 2}, {0, 2, 3}});
}

FrameWindow random_window(Rng& rng, int n, int history, double z_lo = 0.02, double z_hi = 0.8) {
    FrameWindow window;
    window.dt = 0.05;
    window.particle_radius = 0.05;
    std::vector<Vec3> frame;
    for (int i = 0; i < n; ++i)
        frame.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(z_lo, z_hi)});
    window.frames.assign(history + 1, frame);
    for (int f = 0; f < history; ++f)
        for (auto& p : window.frames[f]) {
            p.x += rng.uniform(-0.02, 0.02);
            p.y += rng.uniform(-0.02, 0.02);
            p.z += rng.uniform(-0.01, 0.01);
        }
    return window;
}

GraphConfig graph_config(int history) {
    GraphConfig cfg;
    cfg.r_cutoff = 0.6;
    cfg.r_tilde_cutoff = 0.4;
    cfg.history = history;
    return cfg;
}

// Scalar probe loss: a fixed random weighting of the outputs.
double probe_loss(const Tensor2& out, const Tensor2& weights) {
    double loss = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) loss += out.data[i] * weights.data[i];
    return loss;
}

} // namespace

TEST_CASE("layer norm: forward examples") {
    Tensor2 gain(1, 4), bias(1, 4);
    gain.fill(1.0);
    bias.fill(0.25);

    // Constant row: zero-centered, output equals the bias.
    Tensor2 x(1, 4);
    x.fill(7.5);
    Tensor2 y;
    LayerNormCache cache;
    layer_norm_forward(x, gain, bias, 1.0, y, cache);
    for (int c = 0; c < 4; ++c) CHECK(y.at(0, c) == Catch::Approx(0.25).margin(1e-15));

    // Unit-variance row passes through as eps -> 0.
    Tensor2 pm(1, 2);
    pm.at(0, 0) = 1.0;
    pm.at(0, 1) = -1.0;
    Tensor2 gain2(1, 2), bias2(1, 2);
    gain2.fill(1.0);
    layer_norm_forward(pm, gain2, bias2, 1e-14, y, cache);
    CHECK(y.at(0, 0) == Catch::Approx(1.0).margin(1e-9));
    CHECK(y.at(0, 1) == Catch::Approx(-1.0).margin(1e-9));
}

TEST_CASE("layer norm: gradients match finite differences") {
    Rng rng(2024);
    const int rows = 3, cols = 5;
    Tensor2 x(rows, cols), gain(1, cols), bias(1, cols), weights(rows, cols);
    for (auto& v : x.data) v = rng.normal();
    for (auto& v : gain.data) v = 1.0 + 0.3 * rng.normal();
    for (auto& v : bias.data) v = 0.1 * rng.normal();
    for (auto& v : weights.data) v = rng.normal();
    const double eps = 1.0;

    gain.alloc_grad();
    bias.alloc_grad();
    Tensor2 y, dx;
    LayerNormCache cache;
    layer_norm_forward(x, gain, bias, eps, y, cache);
    layer_norm_backward(x, gain, bias, eps, cache, weights, dx);

    const double h = 1e-6;
    const auto fd = [&](double& slot) {
        const double saved = slot;
        Tensor2 yp, ym;
        LayerNormCache c2;
        slot = saved + h;
        layer_norm_forward(x, gain, bias, eps, yp, c2);
        slot = saved - h;
        layer_norm_forward(x, gain, bias, eps, ym, c2);
        slot = saved;
        return (probe_loss(yp, weights) - probe_loss(ym, weights)) / (2.0 * h);
    };
    for (std::size_t i = 0; i < x.data.size(); ++i)
        CHECK(dx.data[i] == Catch::Approx(fd(x.data[i])).epsilon(1e-6).margin(1e-9));
    for (int c = 0; c < cols; ++c) {
        CHECK(gain.grad[c] == Catch::Approx(fd(gain.data[c])).epsilon(1e-6).margin(1e-9));
        CHECK(bias.grad[c] == Catch::Approx(fd(bias.data[c])).epsilon(1e-6).margin(1e-9));
    }
}

TEST_CASE("dense layer: dL/dW = g x^T") {
    Tensor2 x(1, 3), w(2, 3), b(1, 2);
    x.at(0, 0) = 1.0; x.at(0, 1) = -2.0; x.at(0, 2) = 0.5;
    for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] = 0.1 * static_cast<double>(i + 1);
    w.alloc_grad();
    b.alloc_grad();

    Tensor2 y;
    dense_forward(x, w, b, y);
    CHECK(y.at(0, 0) == Catch::Approx(0.1 - 0.4 + 0.15).margin(1e-15));

    Tensor2 g(1, 2), dx;
    g.at(0, 0) = 2.0;
    g.at(0, 1) = -3.0;
    dense_backward(x, w, b, g, dx);
    CHECK(w.grad_at(0, 0) == 2.0 * 1.0);
    CHECK(w.grad_at(0, 1) == 2.0 * -2.0);
    CHECK(w.grad_at(1, 2) == -3.0 * 0.5);
    CHECK(b.grad[0] == 2.0);
    CHECK(b.grad[1] == -3.0);
    CHECK(dx.at(0, 0) == Catch::Approx(2.0 * 0.1 - 3.0 * 0.4).margin(1e-15));
}

TEST_CASE("init: deterministic and boosted fan-in") {
    NetConfig cfg;
    cfg.layers = 2;
    cfg.node_width = 16;
    cfg.edge_width = 8;
    cfg.seed = 42;

    const ModelParams a = init_params(cfg, 22, 4);
    const ModelParams b = init_params(cfg, 22, 4);
    CHECK(std::memcmp(a.node_encoder.w1.data.data(), b.node_encoder.w1.data.data(),
                      a.node_encoder.w1.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.decoder.w2.data.data(), b.decoder.w2.data.data(),
                      a.decoder.w2.size() * sizeof(double)) == 0);

    // boost = 3 with 7 boundary columns: fan_in_effective = 22 + 2*7 = 36.
    // The draw stddev shrinks accordingly versus boost = 1.
    NetConfig boosted = cfg;
    boosted.boundary_feature_boost = 3.0;
    NetConfig plain = cfg;
    plain.boundary_feature_boost = 1.0;
    const ModelParams pb = init_params(boosted, 22, 4);
    const ModelParams pp = init_params(plain, 22, 4);
    const auto sample_std = [](const Tensor2& w) {
        double sq = 0.0;
        for (double v : w.data) sq += v * v;
        return std::sqrt(sq / static_cast<double>(w.data.size()));
    };
    const double ratio = sample_std(pb.node_encoder.w1) / sample_std(pp.node_encoder.w1);
    CHECK(ratio == Catch::Approx(std::sqrt(22.0 / 36.0)).epsilon(0.02));
    // Only the node encoder is affected.
    CHECK(sample_std(pb.edge_encoder.w1) == sample_std(pp.edge_encoder.w1));

    CHECK(pb.layers.size() == 2);
    CHECK(pb.decoder.w2.rows == 3);
    CHECK(pb.layers[0].edge_mlp.has_layer_norm);
    CHECK(!pb.node_encoder.has_layer_norm);
    CHECK(!pb.decoder.has_layer_norm);
}

TEST_CASE("forward: isolated real node reduces to decoder(encoder(features))") {
    Rng rng(8);
    FrameWindow window = random_window(rng, 1, 2, 5.0, 6.0); // far above the floor: no contacts
    NetConfig cfg;
    cfg.layers = 3;
    cfg.node_width = 8;
    cfg.edge_width = 8;
    cfg.seed = 7;
    const GraphConfig gcfg = graph_config(2);
    const auto graph = build_graph(window, floor_mesh(), gcfg);
    REQUIRE(graph.edges.empty());
    REQUIRE(graph.num_virtual() == 0);

    const ModelParams params = init_params(cfg, gcfg.node_feature_width(), 4);
    ForwardCache cache;
    const Tensor2 out = forward(graph, params, graph.node_features, graph.edge_features, cache);

    MlpCache enc, dec;
    mlp_forward(params.node_encoder, graph.node_features, enc);
    mlp_forward(params.decoder, enc.out, dec);
    REQUIRE(out.rows == 1);
    for (int c = 0; c < 3; ++c) CHECK(out.at(0, c) == dec.out.at(0, c));
}

TEST_CASE("forward: two disconnected copies produce identical outputs") {
    Rng rng(9);
    FrameWindow window = random_window(rng, 6, 2);
    // Clone the scene far away so the copies cannot interact.
    FrameWindow doubled = window;
    for (std::size_t f = 0; f < window.frames.size(); ++f)
        for (const Vec3& p : window.frames[f])
            doubled.frames[f].push_back(p + Vec3{100.0, 0.0, 0.0});
    // Keep the boundary identical for both copies: translate a copy of the
    // floor too far to matter, so use a floor that spans both.
    TriMesh mesh = make_mesh({{-10, -10, 0}, {120, -10, 0}, {120, 10, 0}, {-10, 10, 0}},
                             {{0, 1, 2}, {0, 2, 3}});

    NetConfig cfg;
    cfg.layers = 2;
    cfg.node_width = 8;
    cfg.edge_width = 8;
    cfg.seed = 3;
    const GraphConfig gcfg = graph_config(2);
    const ModelParams params = init_params(cfg, gcfg.node_feature_width(), 4);

    const auto g1 = build_graph(window, mesh, gcfg);
    const auto g2 = build_graph(doubled, mesh, gcfg);
    ForwardCache c1, c2;
    const Tensor2 o1 = forward(g1, params, g1.node_features, g1.edge_features, c1);
    const Tensor2 o2 = forward(g2, params, g2.node_features, g2.edge_features, c2);

    const int n = static_cast<int>(window.particle_count());
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) {
            CHECK(o2.at(i, c) == Catch::Approx(o1.at(i, c)).margin(1e-12));
            CHECK(o2.at(n + i, c) == Catch::Approx(o1.at(i, c)).margin(1e-12));
        }
}

TEST_CASE("forward: permutation equivariance is exact") {
    Rng rng(10);
    FrameWindow window = random_window(rng, 12, 2);
    const int n = static_cast<int>(window.particle_count());

    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);

    FrameWindow permuted = window;
    for (std::size_t f = 0; f < window.frames.size(); ++f)
        for (int i = 0; i < n; ++i) permuted.frames[f][perm[i]] = window.frames[f][i];

    NetConfig cfg;
    cfg.layers = 3;
    cfg.node_width = 8;
    cfg.edge_width = 8;
    cfg.seed = 5;
    const GraphConfig gcfg = graph_config(2);
    const ModelParams params = init_params(cfg, gcfg.node_feature_width(), 4);

    const auto g1 = build_graph(window, floor_mesh(), gcfg);
    const auto g2 = build_graph(permuted, floor_mesh(), gcfg);
    ForwardCache c1, c2;
    const Tensor2 o1 = forward(g1, params, g1.node_features, g1.edge_features, c1);
    const Tensor2 o2 = forward(g2, params, g2.node_features, g2.edge_features, c2);

    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) REQUIRE(o2.at(perm[i], c) == o1.at(i, c));
}

TEST_CASE("forward: winding flip leaves the output bitwise unchanged") {
    Rng rng(12);
    FrameWindow window = random_window(rng, 10, 2);
    TriMesh mesh = floor_mesh();
    TriMesh flipped = mesh;
    std::swap(flipped.faces[1][1], flipped.faces[1][2]);
    flipped.build_derived();

    NetConfig cfg;
    cfg.layers = 2;
    cfg.node_width = 8;
    cfg.edge_width = 8;
    cfg.seed = 21;
    const GraphConfig gcfg = graph_config(2);
    const ModelParams params = init_params(cfg, gcfg.node_feature_width(), 4);

    const auto g1 = build_graph(window, mesh, gcfg);
    const auto g2 = build_graph(window, flipped, gcfg);
    REQUIRE(g1.num_virtual() > 0);
    REQUIRE(g1.num_virtual() == g2.num_virtual());

    ForwardCache c1, c2;
    const Tensor2 o1 = forward(g1, params, g1.node_features, g1.edge_features, c1);
    const Tensor2 o2 = forward(g2, params, g2.node_features, g2.edge_features, c2);
    REQUIRE(o1.data.size() == o2.data.size());
    CHECK(std::memcmp(o1.data.data(), o2.data.data(), o1.data.size() * sizeof(double)) == 0);
}

TEST_CASE("backward: zero upstream gradient gives zero parameter gradients") {
    Rng rng(13);
    FrameWindow window = random_window(rng, 5, 1);
    const GraphConfig gcfg = graph_config(1);
    NetConfig cfg;
    cfg.layers = 1;
    cfg.node_width = 4;
    cfg.edge_width = 4;
    cfg.seed = 2;
    ModelParams params = init_params(cfg, gcfg.node_feature_width(), 4);
    params.alloc_grads();

    const auto graph = build_graph(window, floor_mesh(), gcfg);
    ForwardCache cache;
    const Tensor2 out = forward(graph, params, graph.node_features, graph.edge_features, cache);
    Tensor2 zero(out.rows, out.cols);
    backward(cache, params, zero);
    for_each_param(params, [](const std::string&, Tensor2& t) {
        for (double g : t.grad) CHECK(g == 0.0);
    });
}

TEST_CASE("backward: analytic gradients match central finite differences") {
    Rng rng(14);
    FrameWindow window = random_window(rng, 8, 2, 0.02, 0.5);
    const GraphConfig gcfg = graph_config(2);
    NetConfig cfg;
    cfg.layers = 2;
    cfg.node_width = 6;
    cfg.edge_width = 5;
    cfg.seed = 77;
    ModelParams params = init_params(cfg, gcfg.node_feature_width(), 4);
    params.alloc_grads();

    const auto graph = build_graph(window, floor_mesh(), gcfg);
    REQUIRE(graph.num_virtual() > 0);
    REQUIRE(!graph.edges.empty());

    ForwardCache cache;
    const Tensor2 out = forward(graph, params, graph.node_features, graph.edge_features, cache);
    Tensor2 weights(out.rows, out.cols);
    for (auto& v : weights.data) v = rng.normal();

    backward(cache, params, weights);

    const double h = 1e-5;
    int checked = 0;
    for_each_param(params, [&](const std::string& name, Tensor2& t) {
        // Probe a deterministic subset of each block to keep the test quick.
        const std::size_t stride = std::max<std::size_t>(1, t.data.size() / 8);
        for (std::size_t i = 0; i < t.data.size(); i += stride) {
            const double saved = t.data[i];
            ForwardCache fc;
            t.data[i] = saved + h;
            const double lp = probe_loss(forward(graph, params, graph.node_features, graph.edge_features, fc), weights);
            t.data[i] = saved - h;
            const double lm = probe_loss(forward(graph, params, graph.node_features, graph.edge_features, fc), weights);
            t.data[i] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double analytic = t.grad[i];
            const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-4});
            INFO(name << "[" << i << "] analytic " << analytic << " fd " << fd);
            REQUIRE(std::abs(analytic - fd) / denom < 1e-4);
            ++checked;
        }
    });
    CHECK(checked > 100);
}

TEST_CASE("forward: deterministic across repeated calls") {
    Rng rng(15);
    FrameWindow window = random_window(rng, 10, 2);
    const GraphConfig gcfg = graph_config(2);
    NetConfig cfg;
    cfg.seed = 1;
    cfg.layers = 2;
    cfg.node_width = 8;
    cfg.edge_width = 8;
    const ModelParams params = init_params(cfg, gcfg.node_feature_width(), 4);
    const auto graph = build_graph(window, floor_mesh(), gcfg);
    ForwardCache c1, c2;
    const Tensor2 o1 = forward(graph, params, graph.node_features, graph.edge_features, c1);
    const Tensor2 o2 = forward(graph, params, graph.node_features, graph.edge_features, c2);
    CHECK(std::memcmp(o1.data.data(), o2.data.data(), o1.data.size() * sizeof(double)) == 0);
}
