#pragma once

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bgnn/geometry.hpp"

namespace bgnn {

struct MeshError : std::runtime_error {
    explicit MeshError(const std::string& what) : std::runtime_error(what) {}
};

// Triangulated boundary surface: vertex table, triangle index table, and the
// per-face derived frame (b, e0, e1) plus the orientation-independent normal
// pair.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    // Derived, rebuilt by build_derived().
    std::vector<Triangle> tris;
    std::vector<OrderedNormalPair> normal_pairs;

    std::size_t face_count() const { return faces.size(); }
    bool empty() const { return faces.empty(); }

    void build_derived() {
        tris.clear();
        normal_pairs.clear();
        tris.reserve(faces.size());
        normal_pairs.reserve(faces.size());
        const int nv = static_cast<int>(vertices.size());
        for (std::size_t f = 0; f < faces.size(); ++f) {
            const auto& [i, j, k] = faces[f];
            if (i < 0 || j < 0 || k < 0 || i >= nv || j >= nv || k >= nv)
                throw MeshError("face " + std::to_string(f) + ": vertex index out of range");
            const Triangle tri = triangle_from_vertices(vertices[i], vertices[j], vertices[k]);
            if (is_degenerate(tri))
                throw MeshError("face " + std::to_string(f) + ": degenerate triangle");
            tris.push_back(tri);
            normal_pairs.push_back(ordered_normal_pair(cross(tri.e0, tri.e1)));
        }
    }
};

inline TriMesh make_mesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces) {
    TriMesh mesh;
    mesh.vertices = std::move(vertices);
    mesh.faces = std::move(faces);
    mesh.build_derived();
    return mesh;
}

struct Aabb {
    Vec3 lo{0, 0, 0};
    Vec3 hi{0, 0, 0};
};

inline Aabb mesh_aabb(const TriMesh& mesh) {
    if (mesh.vertices.empty()) throw MeshError("mesh_aabb: empty mesh");
    Aabb box{mesh.vertices[0], mesh.vertices[0]};
    for (const Vec3& v : mesh.vertices) {
        box.lo.x = std::min(box.lo.x, v.x);
        box.lo.y = std::min(box.lo.y, v.y);
        box.lo.z = std::min(box.lo.z, v.z);
        box.hi.x = std::max(box.hi.x, v.x);
        box.hi.y = std::max(box.hi.y, v.y);
        box.hi.z = std::max(box.hi.z, v.z);
    }
    return box;
}

// Boundary-edge audit: closed orientable surface iff every undirected edge is
// shared by exactly two faces with opposite directions.
inline bool is_watertight(const TriMesh& mesh) {
    std::map<std::pair<int, int>, int> directed;
    for (const auto& f : mesh.faces) {
        const int idx[4] = {f[0], f[1], f[2], f[0]};
        for (int e = 0; e < 3; ++e) {
            if (idx[e] == idx[e + 1]) return false;
            ++directed[{idx[e], idx[e + 1]}];
        }
    }
    for (const auto& [edge, count] : directed) {
        if (count != 1) return false;
        auto rev = directed.find({edge.second, edge.first});
        if (rev == directed.end() || rev->second != 1) return false;
    }
    return true;
}

inline void require_watertight(const TriMesh& mesh) {
    if (!is_watertight(mesh)) throw MeshError("mesh is not watertight (boundary-edge audit failed)");
}

// Rotation by angle about the axis (point, unit dir), applied to all vertices.
// angle == 0 returns the input unchanged so static schedules stay bitwise
// stable.
inline TriMesh rotate_mesh(const TriMesh& mesh, const Vec3& axis_point, const Vec3& axis_dir, double angle) {
    if (angle == 0.0) return mesh;
    const Vec3 k = normalized(axis_dir);
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    TriMesh out = mesh;
    for (Vec3& v : out.vertices) {
        const Vec3 r = v - axis_point;
        const Vec3 rot = r * c + cross(k, r) * s + k * (dot(k, r) * (1.0 - c));
        v = axis_point + rot;
    }
    out.build_derived();
    return out;
}

namespace detail {

inline bool parse_double(std::string_view tok, double& out) {
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> toks;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) toks.push_back(line.substr(i, j - i));
        i = j;
    }
    return toks;
}

} // namespace detail

// OBJ subset reader: `v x y z` and `f i j k` lines only (1-based indices,
// triangles only). Anything else is a parse error naming the line number.
inline TriMesh load_obj(std::istream& in, const std::string& source_name = "<obj>") {
    TriMesh mesh;
    std::string line;
    long line_no = 0;
    const auto fail = [&](const std::string& msg) {
        throw MeshError(source_name + ":" + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++line_no;
        const auto toks = detail::split_ws(line);
        if (toks.empty() || toks[0][0] == '#') continue;
        if (toks[0] == "v") {
            if (toks.size() != 4) fail("expected `v x y z`");
            Vec3 v;
            if (!detail::parse_double(toks[1], v.x) || !detail::parse_double(toks[2], v.y) ||
                !detail::parse_double(toks[3], v.z))
                fail("invalid vertex coordinate");
            mesh.vertices.push_back(v);
        } else if (toks[0] == "f") {
            if (toks.size() > 4) fail("polygon with more than 3 vertices (triangles only)");
            if (toks.size() != 4) fail("expected `f i j k`");
            std::array<int, 3> face{};
            for (int k = 0; k < 3; ++k) {
                int idx = 0;
                const auto tok = toks[k + 1];
                auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), idx);
                if (ec != std::errc() || ptr != tok.data() + tok.size())
                    fail("invalid face index (plain 1-based integers only)");
                if (idx < 1 || idx > static_cast<int>(mesh.vertices.size()))
                    fail("face index out of range");
                face[k] = idx - 1;
            }
            mesh.faces.push_back(face);
        } else {
            fail("unsupported line type `" + std::string(toks[0]) + "`");
        }
    }
    mesh.build_derived();
    return mesh;
}

inline TriMesh load_obj_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MeshError("cannot open mesh file: " + path);
    return load_obj(in, path);
}

inline void save_obj(const TriMesh& mesh, std::ostream& out) {
    char buf[128];
    for (const Vec3& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
        out << buf;
    }
    for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

inline void save_obj_file(const TriMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MeshError("cannot write mesh file: " + path);
    save_obj(mesh, out);
}

} // namespace bgnn
