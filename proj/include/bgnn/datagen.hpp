#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "bgnn/dataset.hpp"
#include "bgnn/geometry.hpp"
#include "bgnn/graph.hpp"
#include "bgnn/rng.hpp"

namespace bgnn {

struct DatagenError : std::runtime_error {
    explicit DatagenError(const std::string& what) : std::runtime_error(what) {}
};

enum class MeshKind { Box, HopperWedge, Drum };

inline std::string to_string(MeshKind kind) {
    switch (kind) {
        case MeshKind::Box: return "box";
        case MeshKind::HopperWedge: return "hopper";
        case MeshKind::Drum: return "drum";
    }
    return "box";
}

inline MeshKind mesh_kind_from_string(const std::string& s) {
    if (s == "box") return MeshKind::Box;
    if (s == "hopper") return MeshKind::HopperWedge;
    if (s == "drum") return MeshKind::Drum;
    throw DatagenError("unknown mesh kind: " + s);
}

struct SceneSpec {
    MeshKind kind = MeshKind::Box;

    // Box: full edge lengths, centered at the origin.
    Vec3 box_size{0.4, 0.4, 0.4};

    // Hopper wedge: side planes inclined at angles alpha, 180 - alpha to the
    // x-y plane (alpha in (90, 180) degrees; the acute wall-to-horizontal
    // angle is 180 - alpha), open slot outlet of half-width `hole_radius` at
    // z = 0, open top at z = height.
    double hopper_angle_deg = 135.0;
    double hopper_hole_radius = 0.05;
    double hopper_height = 0.4;
    double hopper_depth = 0.3;

    // Drum: cylinder about the y-axis.
    double drum_radius = 0.25;
    double drum_length = 0.4;
    int drum_facets = 32;

    int particle_count = 50;
    double particle_radius = 0.02;
    double dt = 0.005;
    Vec3 gravity{0, 0, -9.81};
    double restitution = 0.5;
    double contact_stiffness = 2000.0; // acceleration per meter of pair overlap
    std::uint64_t seed = 0;

    void validate() const {
        if (particle_count < 1) throw DatagenError("SceneSpec: particle_count must be positive");
        if (!(particle_radius > 0.0) || !(dt > 0.0)) throw DatagenError("SceneSpec: bad radius or dt");
        if (kind == MeshKind::HopperWedge && !(hopper_angle_deg > 90.0 && hopper_angle_deg < 180.0))
            throw DatagenError("SceneSpec: hopper angle must be in (90, 180) degrees");
        if (kind == MeshKind::Drum && drum_facets < 3) throw DatagenError("SceneSpec: need >= 3 drum facets");
    }
};

namespace detail {

inline TriMesh box_mesh(const Vec3& size) {
    const double hx = size.x / 2.0, hy = size.y / 2.0, hz = size.z / 2.0;
    const std::vector<Vec3> v{{-hx, -hy, -hz}, {hx, -hy, -hz}, {hx, hy, -hz}, {-hx, hy, -hz},
                              {-hx, -hy, hz},  {hx, -hy, hz},  {hx, hy, hz},  {-hx, hy, hz}};
    // Outward windings.
    const std::vector<std::array<int, 3>> f{{0, 2, 1}, {0, 3, 2},  // bottom
                                            {4, 5, 6}, {4, 6, 7},  // top
                                            {0, 1, 5}, {0, 5, 4},  // y = -hy
                                            {2, 3, 7}, {2, 7, 6},  // y = +hy
                                            {0, 4, 7}, {0, 7, 3},  // x = -hx
                                            {1, 2, 6}, {1, 6, 5}}; // x = +hx
    return make_mesh(v, f);
}

inline TriMesh hopper_mesh(const SceneSpec& spec) {
    const double r = spec.hopper_hole_radius;
    const double H = spec.hopper_height;
    const double D = spec.hopper_depth;
    const double slope = std::tan((180.0 - spec.hopper_angle_deg) * 3.14159265358979323846 / 180.0);
    const double W = H / slope; // horizontal run of the inclined walls
    const std::vector<Vec3> v{{-r, -D / 2, 0},     {r, -D / 2, 0},     {r, D / 2, 0},     {-r, D / 2, 0},
                              {-r - W, -D / 2, H}, {r + W, -D / 2, H}, {r + W, D / 2, H}, {-r - W, D / 2, H}};
    const std::vector<std::array<int, 3>> f{{0, 4, 7}, {0, 7, 3},  // inclined wall, -x side
                                            {1, 2, 6}, {1, 6, 5},  // inclined wall, +x side
                                            {0, 1, 5}, {0, 5, 4},  // side wall, y = -D/2
                                            {3, 7, 6}, {3, 6, 2}}; // side wall, y = +D/2
    return make_mesh(v, f);
}

inline TriMesh drum_mesh(const SceneSpec& spec) {
    const double R = spec.drum_radius;
    const double hl = spec.drum_length / 2.0;
    const int F = spec.drum_facets;
    std::vector<Vec3> v;
    for (int ring = 0; ring < 2; ++ring) {
        const double y = ring == 0 ? -hl : hl;
        for (int i = 0; i < F; ++i) {
            const double theta = 2.0 * 3.14159265358979323846 * i / F;
            v.push_back({R * std::cos(theta), y, R * std::sin(theta)});
        }
    }
    const int cA = 2 * F;     // center of the y = -hl cap
    const int cB = 2 * F + 1; // center of the y = +hl cap
    v.push_back({0, -hl, 0});
    v.push_back({0, hl, 0});

    std::vector<std::array<int, 3>> f;
    for (int i = 0; i < F; ++i) {
        const int j = (i + 1) % F;
        const int a0 = i, a1 = j;         // ring at -hl
        const int b0 = F + i, b1 = F + j; // ring at +hl
        f.push_back({a0, b0, b1});        // side, outward
        f.push_back({a0, b1, a1});
        f.push_back({cA, a0, a1}); // -y cap
        f.push_back({cB, b1, b0}); // +y cap
    }
    return make_mesh(v, f);
}

} // namespace detail

inline TriMesh gen_mesh(const SceneSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case MeshKind::Box: return detail::box_mesh(spec.box_size);
        case MeshKind::HopperWedge: return detail::hopper_mesh(spec);
        case MeshKind::Drum: return detail::drum_mesh(spec);
    }
    throw DatagenError("gen_mesh: unreachable");
}

namespace detail {

struct InsertionBox {
    Vec3 lo, hi;
};

// Particles are inserted into a predefined sub-region of each scene, well
// clear of the walls, and settle under gravity from there.
inline InsertionBox insertion_region(const SceneSpec& spec) {
    const double m = 2.0 * spec.particle_radius;
    switch (spec.kind) {
        case MeshKind::Box: {
            const double hx = spec.box_size.x / 2.0, hy = spec.box_size.y / 2.0, hz = spec.box_size.z / 2.0;
            return {{-hx + m, -hy + m, 0.0}, {hx - m, hy - m, hz - m}};
        }
        case MeshKind::HopperWedge: {
            const double H = spec.hopper_height;
            const double slope = std::tan((180.0 - spec.hopper_angle_deg) * 3.14159265358979323846 / 180.0);
            const double W = H / slope;
            const double half_x = spec.hopper_hole_radius + 0.4 * W;
            return {{-half_x, -spec.hopper_depth / 2 + m, 0.55 * H}, {half_x, spec.hopper_depth / 2 - m, 0.9 * H}};
        }
        case MeshKind::Drum: {
            const double a = spec.drum_radius / std::sqrt(2.0);
            return {{-a + m, -spec.drum_length / 2 + m, -a + m}, {a - m, spec.drum_length / 2 - m, -m}};
        }
    }
    throw DatagenError("insertion_region: unreachable");
}

} // namespace detail

// Uniform rejection sampling of non-overlapping particle centers inside the
// scene's insertion region.
inline std::vector<Vec3> initial_positions(const SceneSpec& spec, Rng& rng) {
    const detail::InsertionBox box = detail::insertion_region(spec);
    std::vector<Vec3> positions;
    const double min_dist_sq = 4.0 * spec.particle_radius * spec.particle_radius;
    const long max_attempts = 20000L * spec.particle_count;
    long attempts = 0;
    while (static_cast<int>(positions.size()) < spec.particle_count) {
        if (++attempts > max_attempts)
            throw DatagenError("initial_positions: failed to place particles without overlap");
        const Vec3 candidate{rng.uniform(box.lo.x, box.hi.x), rng.uniform(box.lo.y, box.hi.y),
                             rng.uniform(box.lo.z, box.hi.z)};
        bool ok = true;
        for (const Vec3& p : positions)
            if (dist_sq(p, candidate) < min_dist_sq) { ok = false; break; }
        if (ok) positions.push_back(candidate);
    }
    return positions;
}

// Synthetic granular oracle: semi-implicit Euler with gravity, linear-spring
// particle-particle repulsion on overlap, and reflective walls found through
// exact closest-point queries. Deterministic per seed. Intentionally simple;
// it provides a consistent, smooth target at desk scale.
inline Trajectory oracle_simulate_from(const SceneSpec& spec, const TriMesh& mesh, int steps,
                                       std::vector<Vec3> positions, std::vector<Vec3> velocities,
                                       std::vector<std::vector<Vec3>>* velocity_log = nullptr) {
    spec.validate();
    if (steps < 1) throw DatagenError("oracle_simulate: steps must be >= 1");
    const std::size_t n = positions.size();
    if (velocities.size() != n) throw DatagenError("oracle_simulate: state size mismatch");

    const double rho = spec.particle_radius;
    const double contact_dist = 2.0 * rho;

    Trajectory traj;
    traj.dt = spec.dt;
    traj.particle_radius = rho;
    traj.history = 5;
    traj.frames.reserve(steps + 1);
    traj.frames.push_back(positions);
    if (velocity_log) velocity_log->push_back(velocities);

    std::vector<Vec3> accel(n);
    struct WallContact {
        double dist_sq;
        int face;
    };
    std::vector<std::vector<WallContact>> wall_contacts(n);

    for (int step = 0; step < steps; ++step) {
        for (std::size_t i = 0; i < n; ++i) accel[i] = spec.gravity;

        for (const auto& [i, j] : neighbor_pairs(positions, contact_dist)) {
            const Vec3 delta = positions[i] - positions[j];
            const double d = norm(delta);
            if (!(d > 0.0) || d >= contact_dist) continue;
            const Vec3 dir = delta / d;
            const Vec3 push = spec.contact_stiffness * (contact_dist - d) * dir;
            accel[i] += push;
            accel[j] -= push;
        }

        const std::vector<Vec3> pre_step = positions;
        for (std::size_t i = 0; i < n; ++i) {
            velocities[i] += spec.dt * accel[i];
            positions[i] += spec.dt * velocities[i];
        }

        // Wall response: reflect the velocity about the contact normal with
        // restitution and project the particle out of penetration. Contacts
        // are re-evaluated sequentially (deepest first) so coplanar duplicates
        // and corners resolve cleanly.
        parallel_for(n, [&](std::size_t i) {
            wall_contacts[i].clear();
            for (std::size_t f = 0; f < mesh.tris.size(); ++f) {
                const auto cp = closest_point_on_triangle(positions[i], mesh.tris[f]);
                if (cp.dist_sq < rho * rho) wall_contacts[i].push_back({cp.dist_sq, static_cast<int>(f)});
            }
        });
        for (std::size_t i = 0; i < n; ++i) {
            auto& contacts = wall_contacts[i];
            if (contacts.empty()) continue;
            std::sort(contacts.begin(), contacts.end(), [](const WallContact& a, const WallContact& b) {
                return a.dist_sq != b.dist_sq ? a.dist_sq < b.dist_sq : a.face < b.face;
            });
            for (const WallContact& contact : contacts) {
                const auto cp = closest_point_on_triangle(positions[i], mesh.tris[contact.face]);
                if (cp.dist_sq >= rho * rho) continue;
                const double d = std::sqrt(cp.dist_sq);
                Vec3 normal;
                if (d > 1e-12 * rho)
                    normal = (positions[i] - cp.point) / d;
                else
                    normal = mesh.normal_pairs[contact.face].second;
                // Keep the response on the side the particle came from, so a
                // fast particle that crossed the wall plane within one step is
                // pushed back rather than ejected.
                if (dot(pre_step[i] - cp.point, normal) < 0.0) normal = -normal;
                const double approach = dot(velocities[i], normal);
                if (approach < 0.0)
                    velocities[i] -= (1.0 + spec.restitution) * approach * normal;
                positions[i] = cp.point + rho * normal;
            }
        }

        for (std::size_t i = 0; i < n; ++i)
            if (!is_finite(positions[i]) || !is_finite(velocities[i]))
                throw DatagenError("oracle_simulate: non-finite state at step " + std::to_string(step));

        traj.frames.push_back(positions);
        if (velocity_log) velocity_log->push_back(velocities);
    }
    return traj;
}

inline Trajectory oracle_simulate(const SceneSpec& spec, int steps) {
    const TriMesh mesh = gen_mesh(spec);
    Rng rng = Rng::stream(spec.seed, "oracle/init");
    std::vector<Vec3> positions = initial_positions(spec, rng);
    return oracle_simulate_from(spec, mesh, steps, std::move(positions),
                                std::vector<Vec3>(spec.particle_count, Vec3{0, 0, 0}));
}

// Keep every k-th frame; dt scales accordingly (training-stride
// post-processing).
inline Trajectory stride_trajectory(const Trajectory& traj, int stride) {
    if (stride < 1) throw DatagenError("stride_trajectory: stride must be >= 1");
    Trajectory out = traj;
    out.frames.clear();
    for (std::size_t f = 0; f < traj.frames.size(); f += stride) out.frames.push_back(traj.frames[f]);
    out.dt = traj.dt * stride;
    return out;
}

inline nlohmann::json scene_spec_json(const SceneSpec& spec) {
    return {{"kind", to_string(spec.kind)},
            {"box_size", {spec.box_size.x, spec.box_size.y, spec.box_size.z}},
            {"hopper_angle_deg", spec.hopper_angle_deg},
            {"hopper_hole_radius", spec.hopper_hole_radius},
            {"hopper_height", spec.hopper_height},
            {"hopper_depth", spec.hopper_depth},
            {"drum_radius", spec.drum_radius},
            {"drum_length", spec.drum_length},
            {"drum_facets", spec.drum_facets},
            {"particle_count", spec.particle_count},
            {"particle_radius", spec.particle_radius},
            {"dt", spec.dt},
            {"gravity", {spec.gravity.x, spec.gravity.y, spec.gravity.z}},
            {"restitution", spec.restitution},
            {"contact_stiffness", spec.contact_stiffness},
            {"seed", spec.seed}};
}

// Generates `n_trajectories` oracle runs of one scene family (per-trajectory
// seeds derived from the spec seed), writes mesh + trajectories + manifest
// under out_dir.
inline std::vector<std::string> generate_dataset(const SceneSpec& spec, int n_trajectories, int steps,
                                                 const std::string& out_dir, int stride = 1,
                                                 int history = 5) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const TriMesh mesh = gen_mesh(spec);
    save_obj_file(mesh, (fs::path(out_dir) / "mesh.obj").string());

    std::vector<std::string> traj_dirs;
    std::vector<std::pair<std::string, Split>> manifest;
    for (int k = 0; k < n_trajectories; ++k) {
        SceneSpec traj_spec = spec;
        traj_spec.seed = splitmix64(spec.seed ^ hash_label("traj/" + std::to_string(k)));
        Trajectory traj = oracle_simulate(traj_spec, steps);
        if (stride > 1) traj = stride_trajectory(traj, stride);
        traj.mesh_file = "../mesh.obj";
        traj.history = history;
        traj.generator_config = scene_spec_json(traj_spec).dump();

        char name[32];
        std::snprintf(name, sizeof(name), "traj_%03d", k);
        const std::string dir = (fs::path(out_dir) / name).string();
        save_trajectory(traj, dir);
        traj_dirs.push_back(dir);
        manifest.emplace_back(name, Split::Train);
    }
    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return traj_dirs;
}

// --- Reflection toy experiment data ---------------------------------------

enum class ReflectVariant { R1, R2, R3, R4 };

inline std::string to_string(ReflectVariant v) {
    switch (v) {
        case ReflectVariant::R1: return "R1";
        case ReflectVariant::R2: return "R2";
        case ReflectVariant::R3: return "R3";
        case ReflectVariant::R4: return "R4";
    }
    return "?";
}

struct ReflectionSample {
    Vec3 n;      // wall normal as provided (orientation matters for encoding)
    Vec3 v;      // incident ray
    Vec3 target; // reflect(v, n)
};

// Reflections at the four side walls of a cube; training orientation uses
// inward normals, `inverted` flips them all. Incident rays travel toward
// their wall (v has a component against the inward normal), which ties ray
// and wall together the way physical bounces inside the cube do. One stream
// drives both orientations, so same/inverted datasets pair up sample by
// sample.
inline std::vector<ReflectionSample> gen_reflection_dataset(int n_samples, bool inverted,
                                                            std::uint64_t seed) {
    if (n_samples < 1) throw DatagenError("gen_reflection_dataset: n_samples must be positive");
    static const Vec3 inward[4] = {{1, 0, 0}, {-1, 0, 0}, {0, 0, 1}, {0, 0, -1}}; // left/right/bottom/top
    Rng rng = Rng::stream(seed, "reflection");
    std::vector<ReflectionSample> samples;
    samples.reserve(n_samples);
    for (int k = 0; k < n_samples; ++k) {
        const int wall = rng.uniform_int(4);
        ReflectionSample s;
        do {
            s.v = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        } while (norm(s.v) < 1e-3 || dot(s.v, inward[wall]) > -1e-3);
        s.n = inverted ? -inward[wall] : inward[wall];
        s.target = reflect(s.v, s.n);
        samples.push_back(s);
    }
    return samples;
}

inline int reflect_feature_width(ReflectVariant variant) {
    switch (variant) {
        case ReflectVariant::R1: return 6; // n, v
        case ReflectVariant::R2: return 9; // n, -n, v
        case ReflectVariant::R3: return 6; // f_o-selected vector, v
        case ReflectVariant::R4: return 9; // f_o-ordered pair, v
    }
    return 0;
}

inline void encode_reflection(const ReflectionSample& s, ReflectVariant variant, double* out) {
    const auto put = [&out](const Vec3& v) {
        *out++ = v.x;
        *out++ = v.y;
        *out++ = v.z;
    };
    switch (variant) {
        case ReflectVariant::R1:
            put(s.n);
            break;
        case ReflectVariant::R2:
            put(s.n);
            put(-s.n);
            break;
        case ReflectVariant::R3:
            put(partial_order_value(s.n) <= partial_order_value(-s.n) ? s.n : -s.n);
            break;
        case ReflectVariant::R4: {
            const bool keep = partial_order_value(s.n) <= partial_order_value(-s.n);
            put(keep ? s.n : -s.n);
            put(keep ? -s.n : s.n);
            break;
        }
    }
    put(s.v);
}

} // namespace bgnn
