#pragma once

// Test-only oracles, kept independent of the implementation paths they check.

#include <algorithm>
#include <cmath>
#include <vector>

#include "bgnn/geometry.hpp"
#include "bgnn/vec3.hpp"

namespace oracle {

// Minimum of q(u0, u1) = |t(u0, u1) - p|^2 over a dense barycentric lattice
// with `grid` samples per axis (feasible region only). The quadratic is walked
// with forward differences along each row.
inline double grid_min_dist_sq(const bgnn::Vec3& p, const bgnn::Triangle& tri, int grid) {
    using namespace bgnn;
    const Vec3 d = tri.b - p;
    const double a00 = dot(tri.e0, tri.e0);
    const double a01 = dot(tri.e0, tri.e1);
    const double a11 = dot(tri.e1, tri.e1);
    const double b0 = dot(tri.e0, d);
    const double b1 = dot(tri.e1, d);
    const double c = dot(d, d);

    const double h = 1.0 / static_cast<double>(grid - 1);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid; ++i) {
        const double u0 = i * h;
        // q(u0, u1) along the row as a quadratic in u1.
        double q = a00 * u0 * u0 + 2.0 * b0 * u0 + c; // u1 = 0
        double dq = a11 * h * h + 2.0 * a01 * u0 * h + 2.0 * b1 * h;
        const double ddq = 2.0 * a11 * h * h;
        const int jmax = grid - 1 - i;
        for (int j = 0; j <= jmax; ++j) {
            if (q < best) best = q;
            q += dq;
            dq += ddq;
        }
    }
    return best;
}

// Worst directional derivative of q at the result over the extreme feasible
// directions of its region (unit 2-norm directions in parameter space).
// Nonnegative (up to rounding) iff the point satisfies the KKT conditions.
inline double kkt_residual(const bgnn::Vec3& p, const bgnn::Triangle& tri,
                           const bgnn::ClosestPointResult& res) {
    using namespace bgnn;
    const Vec3 d = tri.b - p;
    const double a00 = dot(tri.e0, tri.e0);
    const double a01 = dot(tri.e0, tri.e1);
    const double a11 = dot(tri.e1, tri.e1);
    const double b0 = dot(tri.e0, d);
    const double b1 = dot(tri.e1, d);

    const double g0 = 2.0 * (a00 * res.u0p + a01 * res.u1p + b0);
    const double g1 = 2.0 * (a01 * res.u0p + a11 * res.u1p + b1);

    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    std::vector<std::pair<double, double>> dirs;
    switch (res.region) {
        case Region::Interior:
            dirs = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
            break;
        case Region::Edge0: // u1 = 0 active
            dirs = {{1, 0}, {-1, 0}, {0, 1}};
            break;
        case Region::Edge1: // u0 = 0 active
            dirs = {{0, 1}, {0, -1}, {1, 0}};
            break;
        case Region::Edge01: // u0 + u1 = 1 active
            dirs = {{inv_sqrt2, -inv_sqrt2}, {-inv_sqrt2, inv_sqrt2}, {-inv_sqrt2, -inv_sqrt2}};
            break;
        case Region::VertexB:
            dirs = {{1, 0}, {0, 1}};
            break;
        case Region::VertexE0End:
            dirs = {{-1, 0}, {-inv_sqrt2, inv_sqrt2}};
            break;
        case Region::VertexE1End:
            dirs = {{0, -1}, {inv_sqrt2, -inv_sqrt2}};
            break;
    }
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& [d0, d1] : dirs) worst = std::min(worst, g0 * d0 + g1 * d1);
    return worst;
}

// Exactly the set {(i, j) : i < j, |x_i - x_j| <= radius} by the double loop.
inline std::vector<std::pair<int, int>> brute_force_pairs(const std::vector<bgnn::Vec3>& pts, double radius) {
    std::vector<std::pair<int, int>> pairs;
    const double r_sq = radius * radius;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            if (bgnn::dist_sq(pts[i], pts[j]) <= r_sq) pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
    return pairs;
}

// Minimal mean transport cost over all n! assignments.
inline double exhaustive_emd(const std::vector<bgnn::Vec3>& a, const std::vector<bgnn::Vec3>& b) {
    const int n = static_cast<int>(a.size());
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (int i = 0; i < n; ++i) total += bgnn::dist(a[i], b[perm[i]]);
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / n;
}

} // namespace oracle
