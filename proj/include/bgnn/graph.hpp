#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <unordered_map>
#include <vector>

#include "bgnn/mesh.hpp"
#include "bgnn/parallel.hpp"
#include "bgnn/tensor.hpp"

namespace bgnn {

struct GraphError : std::runtime_error {
    explicit GraphError(const std::string& what) : std::runtime_error(what) {}
};

// Positions of all particles for the current step plus the previous `C` steps;
// frames are ordered oldest first, so frames.back() is the current one.
struct FrameWindow {
    std::vector<std::vector<Vec3>> frames;
    double dt = 0.0;
    double particle_radius = 0.0;

    int history() const { return static_cast<int>(frames.size()) - 1; } // C
    std::size_t particle_count() const { return frames.empty() ? 0 : frames.back().size(); }
    const std::vector<Vec3>& current() const { return frames.back(); }

    void validate() const {
        if (frames.size() < 2) throw GraphError("FrameWindow: need at least C+1 = 2 frames");
        if (!(dt > 0.0)) throw GraphError("FrameWindow: dt must be positive");
        const std::size_t n = frames.back().size();
        for (const auto& f : frames) {
            if (f.size() != n) throw GraphError("FrameWindow: particle count mismatch across frames");
            for (const Vec3& p : f)
                if (!is_finite(p)) throw GraphError("FrameWindow: non-finite particle position");
        }
    }
};

enum class EdgeFeatureLaw { Plain, InverseFirst, InverseSquare };
enum class BoundaryMode { VirtualPerPair, SuperNodePerTriangle, SampledBoundary };

struct GraphConfig {
    double r_cutoff = 0.0;
    double r_tilde_cutoff = 0.0;
    int history = 5; // C: number of velocity-history entries
    EdgeFeatureLaw edge_feature_law = EdgeFeatureLaw::Plain;
    BoundaryMode boundary_mode = BoundaryMode::VirtualPerPair;
    double boundary_spacing = 0.0; // SampledBoundary only
    bool bidirectional_boundary = false;

    // Distance floor for the inverse-law features; coincident senders and
    // receivers are clamped instead of raising.
    static constexpr double distance_floor = 1e-9;

    int node_feature_width() const { return 3 * history + 7; }
    static constexpr int edge_feature_width = 4;

    void validate() const {
        if (!(r_cutoff > 0.0) || !(r_tilde_cutoff > 0.0))
            throw GraphError("GraphConfig: cutoff radii must be positive");
        if (history < 1) throw GraphError("GraphConfig: history must be >= 1");
        if (boundary_mode == BoundaryMode::SampledBoundary && !(boundary_spacing > 0.0))
            throw GraphError("GraphConfig: boundary_spacing must be positive in SampledBoundary mode");
    }
};

struct RealNode {
    int index = 0;
    Vec3 position;
    std::vector<Vec3> velocity_history; // C entries, oldest first
};

struct VirtualNode {
    int index = 0;          // node id in the combined graph
    Vec3 position;          // closest point on the source triangle
    int source_triangle = -1;
    int target_particle = -1; // -1 in modes without a single target
    OrderedNormalPair normal_pair;
};

enum class EdgeKind { RealReal, VirtualToReal, RealToVirtual };

struct Edge {
    int sender = 0;
    int receiver = 0;
    EdgeKind kind = EdgeKind::RealReal;
};

struct BoundaryGraph {
    std::vector<RealNode> real_nodes;
    std::vector<VirtualNode> virtual_nodes;
    std::vector<Edge> edges;
    Tensor2 node_features; // [n + n_virtual] x (3C + 7)
    Tensor2 edge_features; // [edges] x 4
    std::vector<std::vector<int>> incoming; // edge indices grouped by receiver

    int num_real() const { return static_cast<int>(real_nodes.size()); }
    int num_virtual() const { return static_cast<int>(virtual_nodes.size()); }
    int num_nodes() const { return num_real() + num_virtual(); }
};

// Exactly {(i, j) : i < j, |x_i - x_j| <= radius}, via a uniform cell list
// with cell edge = radius. Falls back to the quadratic scan when the lattice
// would not fit the packed cell key.
inline std::vector<std::pair<int, int>> neighbor_pairs(const std::vector<Vec3>& positions, double radius) {
    if (!(radius > 0.0)) throw GraphError("neighbor_pairs: radius must be positive");
    std::vector<std::pair<int, int>> pairs;
    const int n = static_cast<int>(positions.size());
    if (n < 2) return pairs;
    const double r_sq = radius * radius;

    Vec3 lo = positions[0];
    Vec3 hi = positions[0];
    for (const Vec3& p : positions) {
        lo.x = std::min(lo.x, p.x); lo.y = std::min(lo.y, p.y); lo.z = std::min(lo.z, p.z);
        hi.x = std::max(hi.x, p.x); hi.y = std::max(hi.y, p.y); hi.z = std::max(hi.z, p.z);
    }
    const double max_extent = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
    constexpr double max_cells_per_axis = 1024.0 * 1024.0;
    if (max_extent / radius >= max_cells_per_axis) {
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (dist_sq(positions[i], positions[j]) <= r_sq) pairs.emplace_back(i, j);
        return pairs;
    }

    const auto cell_of = [&](const Vec3& p) {
        const auto c = [&](double v, double l) { return static_cast<std::int64_t>(std::floor((v - l) / radius)); };
        return std::array<std::int64_t, 3>{c(p.x, lo.x), c(p.y, lo.y), c(p.z, lo.z)};
    };
    const auto pack = [](std::int64_t cx, std::int64_t cy, std::int64_t cz) {
        return static_cast<std::uint64_t>(cx & 0x1fffff) |
               (static_cast<std::uint64_t>(cy & 0x1fffff) << 21) |
               (static_cast<std::uint64_t>(cz & 0x1fffff) << 42);
    };

    std::unordered_map<std::uint64_t, std::vector<int>> cells;
    cells.reserve(static_cast<std::size_t>(n) * 2);
    for (int i = 0; i < n; ++i) {
        const auto c = cell_of(positions[i]);
        cells[pack(c[0], c[1], c[2])].push_back(i);
    }

    std::vector<int> found;
    for (int i = 0; i < n; ++i) {
        const auto c = cell_of(positions[i]);
        found.clear();
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    const auto it = cells.find(pack(c[0] + dx, c[1] + dy, c[2] + dz));
                    if (it == cells.end()) continue;
                    for (int j : it->second)
                        if (j > i && dist_sq(positions[i], positions[j]) <= r_sq) found.push_back(j);
                }
        std::sort(found.begin(), found.end());
        for (int j : found) pairs.emplace_back(i, j);
    }
    return pairs;
}

// Deterministic barycentric lattice over every triangle with point spacing at
// most `spacing`; always includes the triangle corners.
inline std::vector<Vec3> sample_boundary(const TriMesh& mesh, double spacing) {
    if (!(spacing > 0.0)) throw GraphError("sample_boundary: spacing must be positive");
    std::vector<Vec3> points;
    for (const Triangle& tri : mesh.tris) {
        const double longest = std::max({norm(tri.e0), norm(tri.e1), norm(tri.e1 - tri.e0)});
        const int k = std::max(1, static_cast<int>(std::ceil(longest / spacing)));
        for (int i = 0; i <= k; ++i)
            for (int j = 0; j <= k - i; ++j)
                points.push_back(tri.point_at(static_cast<double>(i) / k, static_cast<double>(j) / k));
    }
    return points;
}

// Per-triangle variant of sample_boundary used by the SampledBoundary graph
// mode, which needs the source triangle of each sample.
inline std::vector<std::pair<int, Vec3>> sample_boundary_with_faces(const TriMesh& mesh, double spacing) {
    std::vector<std::pair<int, Vec3>> points;
    for (std::size_t f = 0; f < mesh.tris.size(); ++f) {
        const Triangle& tri = mesh.tris[f];
        const double longest = std::max({norm(tri.e0), norm(tri.e1), norm(tri.e1 - tri.e0)});
        const int k = std::max(1, static_cast<int>(std::ceil(longest / spacing)));
        for (int i = 0; i <= k; ++i)
            for (int j = 0; j <= k - i; ++j)
                points.emplace_back(static_cast<int>(f),
                                    tri.point_at(static_cast<double>(i) / k, static_cast<double>(j) / k));
    }
    return points;
}

// Edge feature layout: [scalar, delta...] with delta = x_receiver - x_sender.
//   Plain:         [|d|^2,   d]
//   InverseFirst:  [1/|d|,   d/|d|^2]
//   InverseSquare: [1/|d|^2, d/|d|^3]
inline void edge_features(const Vec3& x_sender, const Vec3& x_receiver, const GraphConfig& cfg,
                          double* out) {
    const Vec3 delta = x_receiver - x_sender;
    switch (cfg.edge_feature_law) {
        case EdgeFeatureLaw::Plain: {
            out[0] = norm_sq(delta);
            out[1] = delta.x; out[2] = delta.y; out[3] = delta.z;
            return;
        }
        case EdgeFeatureLaw::InverseFirst: {
            const double d = std::max(norm(delta), GraphConfig::distance_floor);
            out[0] = 1.0 / d;
            const double inv_sq = 1.0 / (d * d);
            out[1] = delta.x * inv_sq; out[2] = delta.y * inv_sq; out[3] = delta.z * inv_sq;
            return;
        }
        case EdgeFeatureLaw::InverseSquare: {
            const double d = std::max(norm(delta), GraphConfig::distance_floor);
            out[0] = 1.0 / (d * d);
            const double inv_cube = 1.0 / (d * d * d);
            out[1] = delta.x * inv_cube; out[2] = delta.y * inv_cube; out[3] = delta.z * inv_cube;
            return;
        }
    }
}

// Node feature layout, identical width for real and virtual nodes
// (null-padded): [C*3 velocity history | type indicator | 6 normal-pair
// components]. Velocities are zero for virtual nodes, normals zero for real
// nodes.
inline void node_features(const RealNode& node, int history, double* out) {
    const int width = 3 * history + 7;
    std::fill(out, out + width, 0.0);
    for (int k = 0; k < history; ++k) {
        out[3 * k] = node.velocity_history[k].x;
        out[3 * k + 1] = node.velocity_history[k].y;
        out[3 * k + 2] = node.velocity_history[k].z;
    }
    out[3 * history] = 0.0; // type indicator: real
}

inline void node_features(const VirtualNode& node, int history, double* out) {
    const int width = 3 * history + 7;
    std::fill(out, out + width, 0.0);
    out[3 * history] = 1.0; // type indicator: virtual
    out[3 * history + 1] = node.normal_pair.first.x;
    out[3 * history + 2] = node.normal_pair.first.y;
    out[3 * history + 3] = node.normal_pair.first.z;
    out[3 * history + 4] = node.normal_pair.second.x;
    out[3 * history + 5] = node.normal_pair.second.y;
    out[3 * history + 6] = node.normal_pair.second.z;
}

namespace detail {

struct BoundaryContact {
    int source_triangle = -1;
    Vec3 closest; // minimizing point on the triangle
};

} // namespace detail

// Algorithm: (1) real nodes with velocity histories, (2) bidirectional
// particle-particle edges within r_cutoff, (3) per-(particle, triangle)
// virtual nodes at the closest boundary point within r_tilde_cutoff with one
// edge from the virtual sender to the real receiver, (4) null-padded feature
// matrices with type indicators.
inline BoundaryGraph build_graph(const FrameWindow& window, const TriMesh& mesh, const GraphConfig& cfg) {
    cfg.validate();
    window.validate();
    if (window.history() != cfg.history)
        throw GraphError("build_graph: window has " + std::to_string(window.history()) +
                         " history frames, config expects " + std::to_string(cfg.history));

    const int n = static_cast<int>(window.particle_count());
    const int C = cfg.history;
    const std::vector<Vec3>& current = window.current();

    BoundaryGraph graph;
    graph.real_nodes.resize(n);
    for (int i = 0; i < n; ++i) {
        RealNode& node = graph.real_nodes[i];
        node.index = i;
        node.position = current[i];
        node.velocity_history.resize(C);
        for (int k = 0; k < C; ++k)
            node.velocity_history[k] = (window.frames[k + 1][i] - window.frames[k][i]) / window.dt;
    }

    // Sender/receiver positions recorded per edge as it is created; for
    // super-node boundary edges these are the per-pair closest points rather
    // than the node position, so the edge still carries the minimum
    // triangle-point distance.
    std::vector<std::pair<Vec3, Vec3>> edge_geometry;
    const auto push_edge = [&](int sender, int receiver, EdgeKind kind, const Vec3& xs, const Vec3& xr) {
        graph.edges.push_back({sender, receiver, kind});
        edge_geometry.emplace_back(xs, xr);
    };
    const auto push_boundary_edges = [&](int virtual_id, int particle, const Vec3& boundary_point) {
        push_edge(virtual_id, particle, EdgeKind::VirtualToReal, boundary_point, current[particle]);
        if (cfg.bidirectional_boundary)
            push_edge(particle, virtual_id, EdgeKind::RealToVirtual, current[particle], boundary_point);
    };

    // Particle-particle edges, both directions per pair.
    for (const auto& [i, j] : neighbor_pairs(current, cfg.r_cutoff)) {
        push_edge(i, j, EdgeKind::RealReal, current[i], current[j]);
        push_edge(j, i, EdgeKind::RealReal, current[j], current[i]);
    }

    const double r_tilde_sq = cfg.r_tilde_cutoff * cfg.r_tilde_cutoff;
    const auto add_virtual = [&](const Vec3& position, int face, int target) {
        VirtualNode vn;
        vn.index = n + graph.num_virtual();
        vn.position = position;
        vn.source_triangle = face;
        vn.target_particle = target;
        vn.normal_pair = mesh.normal_pairs[face];
        graph.virtual_nodes.push_back(vn);
        return vn.index;
    };

    if (cfg.boundary_mode == BoundaryMode::SampledBoundary) {
        const auto samples = sample_boundary_with_faces(mesh, cfg.boundary_spacing);
        std::vector<std::vector<int>> in_range(samples.size());
        parallel_for(samples.size(), [&](std::size_t s) {
            for (int i = 0; i < n; ++i)
                if (dist_sq(samples[s].second, current[i]) <= r_tilde_sq) in_range[s].push_back(i);
        });
        for (std::size_t s = 0; s < samples.size(); ++s) {
            if (in_range[s].empty()) continue;
            const int id = add_virtual(samples[s].second, samples[s].first, -1);
            for (int i : in_range[s]) push_boundary_edges(id, i, samples[s].second);
        }
    } else {
        // Per-particle triangle scans are independent; results are merged in
        // particle-index order so the graph does not depend on thread count.
        std::vector<std::vector<detail::BoundaryContact>> per_particle(n);
        parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
            for (std::size_t f = 0; f < mesh.tris.size(); ++f) {
                const ClosestPointResult cp = closest_point_on_triangle(current[i], mesh.tris[f]);
                if (cp.dist_sq <= r_tilde_sq)
                    per_particle[i].push_back({static_cast<int>(f), cp.point});
            }
        });

        if (cfg.boundary_mode == BoundaryMode::VirtualPerPair) {
            for (int i = 0; i < n; ++i)
                for (const auto& contact : per_particle[i]) {
                    const int id = add_virtual(contact.closest, contact.source_triangle, i);
                    push_boundary_edges(id, i, contact.closest);
                }
        } else { // SuperNodePerTriangle
            std::vector<std::vector<std::pair<int, Vec3>>> by_face(mesh.tris.size());
            for (int i = 0; i < n; ++i)
                for (const auto& contact : per_particle[i])
                    by_face[contact.source_triangle].emplace_back(i, contact.closest);
            for (std::size_t f = 0; f < by_face.size(); ++f) {
                if (by_face[f].empty()) continue;
                const int id = add_virtual(mesh.tris[f].centroid(), static_cast<int>(f), -1);
                for (const auto& [particle, closest] : by_face[f]) push_boundary_edges(id, particle, closest);
            }
        }
    }

    // Feature assembly.
    graph.node_features = Tensor2(graph.num_nodes(), cfg.node_feature_width());
    for (int i = 0; i < n; ++i) node_features(graph.real_nodes[i], C, graph.node_features.row(i));
    for (int v = 0; v < graph.num_virtual(); ++v)
        node_features(graph.virtual_nodes[v], C, graph.node_features.row(n + v));

    graph.edge_features = Tensor2(static_cast<int>(graph.edges.size()), GraphConfig::edge_feature_width);
    for (std::size_t e = 0; e < graph.edges.size(); ++e)
        edge_features(edge_geometry[e].first, edge_geometry[e].second, cfg,
                      graph.edge_features.row(static_cast<int>(e)));

    graph.incoming.assign(graph.num_nodes(), {});
    for (std::size_t e = 0; e < graph.edges.size(); ++e)
        graph.incoming[graph.edges[e].receiver].push_back(static_cast<int>(e));

    return graph;
}

// Edge-count bookkeeping in the presentation of the boundary-growth report:
// |V| real nodes, |E| undirected particle-particle pairs, |E~| boundary edges,
// and the percent increase 100 * |E~| / |E|.
struct EdgeGrowthStats {
    long num_real_nodes = 0;
    long num_real_pairs = 0;
    long num_boundary_edges = 0;
    double percent_increase = 0.0;
};

inline EdgeGrowthStats edge_growth_stats(const BoundaryGraph& graph) {
    EdgeGrowthStats stats;
    stats.num_real_nodes = graph.num_real();
    long real_directed = 0;
    for (const Edge& e : graph.edges) {
        if (e.kind == EdgeKind::RealReal) ++real_directed;
        else if (e.kind == EdgeKind::VirtualToReal) ++stats.num_boundary_edges;
    }
    stats.num_real_pairs = real_directed / 2;
    stats.percent_increase = stats.num_real_pairs == 0
                                 ? 0.0
                                 : 100.0 * static_cast<double>(stats.num_boundary_edges) /
                                       static_cast<double>(stats.num_real_pairs);
    return stats;
}

// Debug dump: NODES and EDGES sections with ids, kinds, coordinates and raw
// features.
inline void write_graph_csv(const BoundaryGraph& graph, std::ostream& out) {
    char buf[64];
    const auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << "NODES\n";
    out << "id,kind,x,y,z";
    for (int c = 0; c < graph.node_features.cols; ++c) out << ",f" << c;
    out << "\n";
    for (int i = 0; i < graph.num_nodes(); ++i) {
        const bool real = i < graph.num_real();
        const Vec3 pos = real ? graph.real_nodes[i].position : graph.virtual_nodes[i - graph.num_real()].position;
        out << i << ',' << (real ? "real" : "virtual") << ',' << num(pos.x) << ',' << num(pos.y) << ','
            << num(pos.z);
        for (int c = 0; c < graph.node_features.cols; ++c) out << ',' << num(graph.node_features.at(i, c));
        out << '\n';
    }
    out << "EDGES\n";
    out << "sender,receiver,kind";
    for (int c = 0; c < graph.edge_features.cols; ++c) out << ",f" << c;
    out << "\n";
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
        const Edge& edge = graph.edges[e];
        const char* kind = edge.kind == EdgeKind::RealReal
                               ? "real-real"
                               : (edge.kind == EdgeKind::VirtualToReal ? "virtual-real" : "real-virtual");
        out << edge.sender << ',' << edge.receiver << ',' << kind;
        for (int c = 0; c < graph.edge_features.cols; ++c)
            out << ',' << num(graph.edge_features.at(static_cast<int>(e), c));
        out << '\n';
    }
}

} // namespace bgnn
