#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>

#include "bgnn/vec3.hpp"

namespace bgnn {

struct GeometryError : std::runtime_error {
    explicit GeometryError(const std::string& what) : std::runtime_error(what) {}
};

// Triangle parameterized as t(u0, u1) = b + u0*e0 + u1*e1 with
// u0 >= 0, u1 >= 0, u0 + u1 <= 1.
struct Triangle {
    Vec3 b;
    Vec3 e0;
    Vec3 e1;

    Vec3 point_at(double u0, double u1) const { return b + (u0 * e0 + u1 * e1); }
    Vec3 vertex0() const { return b; }
    Vec3 vertex1() const { return b + e0; }
    Vec3 vertex2() const { return b + e1; }
    Vec3 centroid() const { return b + (e0 + e1) / 3.0; }
};

inline Triangle triangle_from_vertices(const Vec3& v0, const Vec3& v1, const Vec3& v2) {
    return Triangle{v0, v1 - v0, v2 - v0};
}

// Degenerate when the parallelogram area vanishes relative to the edge scale.
inline bool is_degenerate(const Triangle& t) {
    const double scale = std::max(norm_sq(t.e0), norm_sq(t.e1));
    return !(norm(cross(t.e0, t.e1)) >= 1e-12 * scale);
}

inline void require_nondegenerate(const Triangle& t) {
    if (is_degenerate(t)) throw GeometryError("degenerate triangle: |e0 x e1| below tolerance");
}

// Which part of the constraint set the closest point lies on.
enum class Region {
    Interior,    // u0 > 0, u1 > 0, u0 + u1 < 1
    Edge01,      // u0 + u1 = 1
    Edge0,       // u1 = 0 (along e0)
    Edge1,       // u0 = 0 (along e1)
    VertexB,     // (0, 0)
    VertexE0End, // (1, 0)
    VertexE1End  // (0, 1)
};

inline const char* region_name(Region r) {
    switch (r) {
        case Region::Interior: return "Interior";
        case Region::Edge01: return "Edge01";
        case Region::Edge0: return "Edge0";
        case Region::Edge1: return "Edge1";
        case Region::VertexB: return "Vertex_b";
        case Region::VertexE0End: return "Vertex_e0end";
        case Region::VertexE1End: return "Vertex_e1end";
    }
    return "?";
}

struct ClosestPointResult {
    double u0p = 0.0;
    double u1p = 0.0;
    Vec3 point;
    double dist_sq = 0.0;
    Region region = Region::Interior;
};

namespace detail {

// Minimizer of a*u^2 + 2*b*u over u in [0, 1], a > 0.
inline double edge_param(double a, double b) {
    if (b >= 0.0) return 0.0;
    if (-b >= a) return 1.0;
    return -b / a;
}

// Minimizer along u0 + u1 = 1, expressed through both barycentric numerators so
// that swapping (e0, e1) swaps (u0, u1) bitwise.
inline void hyp_params(double a00, double a01, double a11, double b0, double b1,
                       double& u0, double& u1) {
    const double n0 = (a11 - a01) + (b1 - b0);
    const double n1 = (a00 - a01) + (b0 - b1);
    if (n0 <= 0.0) { u0 = 0.0; u1 = 1.0; return; }
    if (n1 <= 0.0) { u0 = 1.0; u1 = 0.0; return; }
    const double den = n0 + n1; // = |e0 - e1|^2
    u0 = n0 / den;
    u1 = n1 / den;
    if (u0 + u1 < 1.0) { // keep the pair on the edge under floating-point rounding
        if (n0 <= n1) u1 = 1.0 - u0;
        else u0 = 1.0 - u1;
    }
}

inline Region classify_region(double u0, double u1) {
    if (u0 > 0.0 && u1 > 0.0 && u0 + u1 < 1.0) return Region::Interior;
    if (u0 == 0.0 && u1 == 0.0) return Region::VertexB;
    if (u1 == 0.0 && u0 == 1.0) return Region::VertexE0End;
    if (u0 == 0.0 && u1 == 1.0) return Region::VertexE1End;
    if (u1 == 0.0) return Region::Edge0;
    if (u0 == 0.0) return Region::Edge1;
    return Region::Edge01;
}

} // namespace detail

// Closest point of a triangle to p: minimizes q(u0, u1) = |t(u0, u1) - p|^2
// over the constraint set. Closed-form region classification; the
// unconstrained minimizer is computed first, then the active constraint set is
// resolved with exact 1D sub-minimizations.
inline ClosestPointResult closest_point_on_triangle(const Vec3& p, const Triangle& tri) {
    require_nondegenerate(tri);

    const Vec3 d = tri.b - p;
    const double a00 = dot(tri.e0, tri.e0);
    const double a01 = dot(tri.e0, tri.e1);
    const double a11 = dot(tri.e1, tri.e1);
    const double b0 = dot(tri.e0, d);
    const double b1 = dot(tri.e1, d);

    const double det = a00 * a11 - a01 * a01; // = |e0 x e1|^2 > 0
    const double s = a01 * b1 - a11 * b0;     // u0 numerator of the unconstrained minimizer
    const double t = a01 * b0 - a00 * b1;     // u1 numerator

    double u0 = 0.0;
    double u1 = 0.0;
    if (s + t <= det) {
        if (s < 0.0) {
            if (t < 0.0) {
                // Nearest the base vertex; at most one of b0, b1 is negative here.
                if (b0 < 0.0) { u0 = detail::edge_param(a00, b0); }
                else { u1 = detail::edge_param(a11, b1); }
            } else {
                u1 = detail::edge_param(a11, b1);
            }
        } else if (t < 0.0) {
            u0 = detail::edge_param(a00, b0);
        } else {
            u0 = s / det;
            u1 = t / det;
        }
    } else {
        if (s < 0.0) {
            // Near (0, 1): either the hypotenuse or the e1 edge is active.
            if ((a01 + b0) < (a11 + b1)) detail::hyp_params(a00, a01, a11, b0, b1, u0, u1);
            else { u1 = detail::edge_param(a11, b1); }
        } else if (t < 0.0) {
            // Near (1, 0): mirror of the case above.
            if ((a01 + b1) < (a00 + b0)) detail::hyp_params(a00, a01, a11, b0, b1, u0, u1);
            else { u0 = detail::edge_param(a00, b0); }
        } else {
            detail::hyp_params(a00, a01, a11, b0, b1, u0, u1);
        }
    }

    ClosestPointResult res;
    res.u0p = u0;
    res.u1p = u1;
    res.point = tri.point_at(u0, u1);
    res.dist_sq = dist_sq(res.point, p);
    res.region = detail::classify_region(u0, u1);
    return res;
}

inline Vec3 triangle_normal(const Triangle& tri) {
    require_nondegenerate(tri);
    return normalized(cross(tri.e0, tri.e1));
}

// f_o(n) = sum_i 3^(i-1) * (sgn(n_i) + 1), an integer in [0, 26] that depends
// only on the component sign pattern. f_o(n) + f_o(-n) = 26, and 13 is attained
// only by the zero vector, so {n, -n} always orders strictly.
inline int partial_order_value(const Vec3& n) {
    const auto sgn = [](double v) { return (v > 0.0) - (v < 0.0); };
    return (sgn(n.x) + 1) + 3 * (sgn(n.y) + 1) + 9 * (sgn(n.z) + 1);
}

// Both orientations of a unit normal, sorted ascending by f_o. The pair is
// bitwise identical whether built from n or from -n.
struct OrderedNormalPair {
    Vec3 first;
    Vec3 second;
};

inline bool operator==(const OrderedNormalPair& a, const OrderedNormalPair& b) {
    return a.first == b.first && a.second == b.second;
}

inline OrderedNormalPair ordered_normal_pair(const Vec3& n) {
    const double len = norm(n);
    if (!(len > 0.0)) throw GeometryError("ordered_normal_pair: zero normal vector");
    // Adding 0.0 maps -0.0 to +0.0, so the pair is bitwise identical no matter
    // which orientation (or zero-sign pattern) the caller passes in.
    const auto canonical = [](const Vec3& v) { return Vec3{v.x + 0.0, v.y + 0.0, v.z + 0.0}; };
    const Vec3 unit = canonical(n / len);
    const Vec3 anti = canonical(-unit);
    OrderedNormalPair pair;
    const bool unit_first = partial_order_value(unit) <= partial_order_value(anti);
    pair.first = unit_first ? unit : anti;
    pair.second = unit_first ? anti : unit;
    return pair;
}

// Householder reflection Ref_n(v) = v - 2 (v.n)/(n.n) n.
inline Vec3 reflect(const Vec3& v, const Vec3& n) {
    const double nn = dot(n, n);
    if (!(nn > 0.0)) throw GeometryError("reflect: zero normal vector");
    return v - (2.0 * dot(v, n) / nn) * n;
}

} // namespace bgnn
