#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "bgnn/dynamics.hpp"
#include "bgnn/mesh.hpp"
#include "bgnn/rng.hpp"

namespace bgnn {

struct AnalyticsError : std::runtime_error {
    explicit AnalyticsError(const std::string& what) : std::runtime_error(what) {}
};

// --- Mixing entropy --------------------------------------------------------

// Axis-aligned grid over a bounding box with per-particle class labels (+1 /
// -1) assigned once from the initial frame by a median split along an axis.
struct EntropyGrid {
    Vec3 lo, hi;
    int nx = 10, ny = 10, nz = 10;
    std::vector<int> labels;

    int cell_count() const { return nx * ny * nz; }

    int cell_of(const Vec3& p) const {
        const auto axis_cell = [](double v, double lo_v, double hi_v, int cells) {
            if (cells <= 1) return 0;
            const double w = (hi_v - lo_v) / cells;
            int c = static_cast<int>(std::floor((v - lo_v) / w));
            // Out-of-box particles count toward the nearest boundary cell.
            return std::clamp(c, 0, cells - 1);
        };
        const int cx = axis_cell(p.x, lo.x, hi.x, nx);
        const int cy = axis_cell(p.y, lo.y, hi.y, ny);
        const int cz = axis_cell(p.z, lo.z, hi.z, nz);
        return (cx * ny + cy) * nz + cz;
    }
};

// Labels from the median split of the initial frame along `axis` (0=x,1=y,2=z):
// above the median is +1, at or below is -1.
inline std::vector<int> median_split_labels(const std::vector<Vec3>& frame0, int axis) {
    if (frame0.empty()) throw AnalyticsError("median_split_labels: empty frame");
    std::vector<double> coords(frame0.size());
    for (std::size_t i = 0; i < frame0.size(); ++i)
        coords[i] = axis == 0 ? frame0[i].x : (axis == 1 ? frame0[i].y : frame0[i].z);
    std::vector<double> sorted = coords;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = coords[i] > median ? 1 : -1;
    return labels;
}

inline EntropyGrid make_entropy_grid(const std::vector<Vec3>& frame0, const Aabb& box, int nx, int ny,
                                     int nz, int axis = 2) {
    if (nx < 1 || ny < 1 || nz < 1) throw AnalyticsError("make_entropy_grid: need >= 1 cell per axis");
    EntropyGrid grid;
    grid.lo = box.lo;
    grid.hi = box.hi;
    grid.nx = nx;
    grid.ny = ny;
    grid.nz = nz;
    grid.labels = median_split_labels(frame0, axis);
    return grid;
}

// Particle-number weighted average of per-cell binary class entropies:
// S = sum_g n(g) * s(g) / sum_g n(g), s(g) = -sum_c f_c log f_c, natural log,
// 0 log 0 = 0. Always in [0, ln 2].
inline double mixing_entropy(const std::vector<Vec3>& frame, const EntropyGrid& grid) {
    if (frame.size() != grid.labels.size())
        throw AnalyticsError("mixing_entropy: frame size does not match label count");
    std::vector<int> plus(grid.cell_count(), 0), minus(grid.cell_count(), 0);
    for (std::size_t i = 0; i < frame.size(); ++i) {
        const int cell = grid.cell_of(frame[i]);
        (grid.labels[i] > 0 ? plus[cell] : minus[cell])++;
    }
    double weighted = 0.0;
    for (int c = 0; c < grid.cell_count(); ++c) {
        const int n = plus[c] + minus[c];
        if (n == 0) continue;
        double s = 0.0;
        for (const int k : {plus[c], minus[c]}) {
            if (k == 0) continue;
            const double f = static_cast<double>(k) / n;
            s -= f * std::log(f);
        }
        weighted += static_cast<double>(n) * s;
    }
    return weighted / static_cast<double>(frame.size());
}

// --- Flow profiles ----------------------------------------------------------

// Particle-averaged position and flow per frame; the flow is the consecutive
// difference of mean positions over dt, with a zero leading entry so both
// series have the trajectory's length.
struct FlowProfile {
    std::vector<Vec3> mean_position;
    std::vector<Vec3> mean_flow;
};

inline FlowProfile flow_profile(const Trajectory& traj) {
    if (traj.frames.empty()) throw AnalyticsError("flow_profile: empty trajectory");
    FlowProfile prof;
    prof.mean_position.reserve(traj.frames.size());
    for (const auto& frame : traj.frames) {
        Vec3 mean{0, 0, 0};
        for (const Vec3& p : frame) mean += p;
        prof.mean_position.push_back(mean / static_cast<double>(frame.size()));
    }
    prof.mean_flow.assign(traj.frames.size(), Vec3{0, 0, 0});
    for (std::size_t t = 1; t < prof.mean_position.size(); ++t)
        prof.mean_flow[t] = (prof.mean_position[t] - prof.mean_position[t - 1]) / traj.dt;
    return prof;
}

// --- Earth Mover's Distance --------------------------------------------------

namespace detail {

// Exact rectangular assignment via shortest augmenting paths with potentials
// (Jonker-Volgenant style), O(n^3). Returns the minimal total cost.
inline double solve_assignment(const std::vector<double>& cost, int n) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * static_cast<std::size_t>(n) + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j) total += cost[(p[j] - 1) * static_cast<std::size_t>(n) + (j - 1)];
    return total;
}

} // namespace detail

constexpr int kEmdDefaultCap = 512;

// Minimal mean transport cost between two equal-size point sets under
// Euclidean ground cost: an exact optimal assignment.
inline double emd(const std::vector<Vec3>& a, const std::vector<Vec3>& b, int cap = kEmdDefaultCap) {
    if (a.size() != b.size()) throw AnalyticsError("emd: point sets must have equal size");
    if (a.empty()) throw AnalyticsError("emd: empty point sets");
    if (static_cast<int>(a.size()) > cap)
        throw AnalyticsError("emd: set size " + std::to_string(a.size()) + " exceeds cap " +
                             std::to_string(cap));
    const int n = static_cast<int>(a.size());
    std::vector<double> cost(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) cost[static_cast<std::size_t>(i) * n + j] = dist(a[i], b[j]);
    return detail::solve_assignment(cost, n) / static_cast<double>(n);
}

// Deterministic common subsample for EMD on sets beyond the cap.
inline void emd_subsample(std::vector<Vec3>& a, std::vector<Vec3>& b, int cap, std::uint64_t seed) {
    if (a.size() != b.size()) throw AnalyticsError("emd_subsample: size mismatch");
    if (static_cast<int>(a.size()) <= cap) return;
    std::vector<std::size_t> idx(a.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng = Rng::stream(seed, "emd/subsample");
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    std::vector<Vec3> na, nb;
    na.reserve(cap);
    nb.reserve(cap);
    for (std::size_t i : idx) {
        na.push_back(a[i]);
        nb.push_back(b[i]);
    }
    a = std::move(na);
    b = std::move(nb);
}

// --- Containment -------------------------------------------------------------

namespace detail {

enum class RayHit { Miss, Hit, Degenerate };

// Moeller-Trumbore with conservative degeneracy reporting: hits too close to
// an edge, vertex, or the ray origin are flagged so the caller can re-cast.
inline RayHit ray_triangle(const Vec3& origin, const Vec3& dir, const Triangle& tri) {
    constexpr double eps = 1e-12;
    const Vec3 h = cross(dir, tri.e1);
    const double det = dot(tri.e0, h);
    const double scale = norm(tri.e0) * norm(tri.e1);
    if (std::abs(det) <= eps * scale) return RayHit::Degenerate; // parallel or grazing
    const double inv = 1.0 / det;
    const Vec3 s = origin - tri.b;
    const double u = dot(s, h) * inv;
    const Vec3 q = cross(s, tri.e0);
    const double v = dot(dir, q) * inv;
    const double t = dot(tri.e1, q) * inv;
    constexpr double edge_tol = 1e-9;
    if (u < -edge_tol || v < -edge_tol || u + v > 1.0 + edge_tol) return RayHit::Miss;
    if (t < -edge_tol) return RayHit::Miss;
    if (u < edge_tol || v < edge_tol || u + v > 1.0 - edge_tol || t < edge_tol)
        return RayHit::Degenerate; // too close to call: jitter and retry
    return RayHit::Hit;
}

} // namespace detail

// Strict inside test by ray parity with deterministic ray jitter on degenerate
// hits. Requires a watertight mesh.
inline bool point_inside(const TriMesh& mesh, const Vec3& p) {
    const Aabb box = mesh_aabb(mesh);
    if (p.x <= box.lo.x || p.x >= box.hi.x || p.y <= box.lo.y || p.y >= box.hi.y || p.z <= box.lo.z ||
        p.z >= box.hi.z)
        return false;

    for (int attempt = 0; attempt < 64; ++attempt) {
        // Deterministic direction sequence; the first is axis-aligned.
        Vec3 dir{1.0, 0.0, 0.0};
        if (attempt > 0) {
            Rng rng(splitmix64(0x5eedULL + attempt));
            dir = {rng.uniform(0.2, 1.0), rng.uniform(-1, 1), rng.uniform(-1, 1)};
            dir = dir / norm(dir);
        }
        int crossings = 0;
        bool degenerate = false;
        for (const Triangle& tri : mesh.tris) {
            switch (detail::ray_triangle(p, dir, tri)) {
                case detail::RayHit::Hit: ++crossings; break;
                case detail::RayHit::Degenerate: degenerate = true; break;
                case detail::RayHit::Miss: break;
            }
            if (degenerate) break;
        }
        if (!degenerate) return crossings % 2 == 1;
    }
    throw AnalyticsError("point_inside: no clean ray after bounded retries");
}

// Fraction of particle centers strictly inside the watertight mesh.
inline double containment_fraction(const std::vector<Vec3>& frame, const TriMesh& mesh) {
    require_watertight(mesh);
    if (frame.empty()) return 1.0;
    long inside = 0;
    for (const Vec3& p : frame) inside += point_inside(mesh, p) ? 1 : 0;
    return static_cast<double>(inside) / static_cast<double>(frame.size());
}

} // namespace bgnn
