#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bgnn/model.hpp"
#include "bgnn/normstats.hpp"

namespace bgnn {

struct DynamicsError : std::runtime_error {
    explicit DynamicsError(const std::string& what) : std::runtime_error(what) {}
};

struct IntegratorState {
    std::vector<Vec3> positions;
    std::vector<Vec3> velocities;
    double dt = 0.0;
};

// v' = v + dt*a, then x' = x + dt*v' (position update uses the new velocity).
inline IntegratorState semi_implicit_euler(const IntegratorState& state, const std::vector<Vec3>& accel) {
    if (accel.size() != state.positions.size() || state.velocities.size() != state.positions.size())
        throw DynamicsError("semi_implicit_euler: shape mismatch");
    IntegratorState next = state;
    for (std::size_t i = 0; i < accel.size(); ++i) {
        next.velocities[i] = state.velocities[i] + state.dt * accel[i];
        next.positions[i] = state.positions[i] + state.dt * next.velocities[i];
    }
    return next;
}

// Discrete targets that make semi-implicit Euler an exact inverse:
// v_t = (x_t - x_{t-1}) / dt and a_t = (v_{t+1} - v_t) / dt.
inline std::vector<Vec3> frame_velocity(const std::vector<Vec3>& prev, const std::vector<Vec3>& curr, double dt) {
    std::vector<Vec3> v(curr.size());
    for (std::size_t i = 0; i < curr.size(); ++i) v[i] = (curr[i] - prev[i]) / dt;
    return v;
}

inline std::vector<Vec3> target_acceleration(const std::vector<Vec3>& prev, const std::vector<Vec3>& curr,
                                             const std::vector<Vec3>& next, double dt) {
    std::vector<Vec3> a(curr.size());
    for (std::size_t i = 0; i < curr.size(); ++i) {
        const Vec3 v_t = (curr[i] - prev[i]) / dt;
        const Vec3 v_next = (next[i] - curr[i]) / dt;
        a[i] = (v_next - v_t) / dt;
    }
    return a;
}

// Time-ordered frames plus metadata, persisted as meta.json + frames.csv in a
// directory of their own.
struct Trajectory {
    std::vector<std::vector<Vec3>> frames;
    double dt = 0.0;
    double particle_radius = 0.0;
    std::string mesh_file;        // path relative to the trajectory directory
    std::string generator_config; // free-form JSON text
    int history = 5;              // C used when windows are cut from this trajectory

    std::size_t particle_count() const { return frames.empty() ? 0 : frames[0].size(); }

    FrameWindow window_at(int t) const {
        if (t < history || t >= static_cast<int>(frames.size()))
            throw DynamicsError("window_at: index leaves no room for history");
        FrameWindow w;
        w.dt = dt;
        w.particle_radius = particle_radius;
        w.frames.assign(frames.begin() + (t - history), frames.begin() + t + 1);
        return w;
    }
};

inline void save_trajectory(const Trajectory& traj, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    nlohmann::json meta;
    meta["dt"] = traj.dt;
    meta["particle_radius"] = traj.particle_radius;
    meta["mesh_file"] = traj.mesh_file;
    meta["generator_config"] = traj.generator_config;
    meta["history"] = traj.history;
    meta["frame_count"] = traj.frames.size();
    meta["particle_count"] = traj.particle_count();
    std::ofstream meta_out(fs::path(dir) / "meta.json");
    if (!meta_out) throw DynamicsError("cannot write " + dir + "/meta.json");
    meta_out << meta.dump(2) << "\n";

    std::ofstream out(fs::path(dir) / "frames.csv");
    if (!out) throw DynamicsError("cannot write " + dir + "/frames.csv");
    out << "frame,particle,x,y,z\n";
    char buf[160];
    for (std::size_t f = 0; f < traj.frames.size(); ++f)
        for (std::size_t i = 0; i < traj.frames[f].size(); ++i) {
            const Vec3& p = traj.frames[f][i];
            std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g,%.17g,%.17g\n", f, i, p.x, p.y, p.z);
            out << buf;
        }
}

inline Trajectory load_trajectory(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream meta_in(fs::path(dir) / "meta.json");
    if (!meta_in) throw DynamicsError("cannot open " + dir + "/meta.json");
    nlohmann::json meta = nlohmann::json::parse(meta_in);

    Trajectory traj;
    traj.dt = meta.at("dt").get<double>();
    traj.particle_radius = meta.value("particle_radius", 0.0);
    traj.mesh_file = meta.value("mesh_file", std::string{});
    traj.generator_config = meta.value("generator_config", std::string{});
    traj.history = meta.value("history", 5);

    std::ifstream in(fs::path(dir) / "frames.csv");
    if (!in) throw DynamicsError("cannot open " + dir + "/frames.csv");
    std::string line;
    std::getline(in, line); // header
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t frame = 0, particle = 0;
        Vec3 p;
        const char* s = line.c_str();
        const char* end = s + line.size();
        const auto field = [&](auto& value) {
            auto [ptr, ec] = std::from_chars(s, end, value);
            if (ec != std::errc() || (ptr != end && *ptr != ','))
                throw DynamicsError(dir + "/frames.csv:" + std::to_string(line_no) + ": bad field");
            s = ptr == end ? end : ptr + 1;
        };
        field(frame);
        field(particle);
        field(p.x);
        field(p.y);
        field(p.z);
        if (frame >= traj.frames.size()) traj.frames.resize(frame + 1);
        if (particle >= traj.frames[frame].size()) traj.frames[frame].resize(particle + 1);
        traj.frames[frame][particle] = p;
    }
    return traj;
}

// Mesh motion during rollout: static, or rotation about an axis at a constant
// angular rate.
struct MeshSchedule {
    bool rotating = false;
    Vec3 axis_point{0, 0, 0};
    Vec3 axis_dir{0, 1, 0};
    double omega = 0.0; // rad/s

    TriMesh at_time(const TriMesh& base, double time) const {
        if (!rotating) return base;
        return rotate_mesh(base, axis_point, axis_dir, omega * time);
    }
};

struct RolloutConfig {
    int steps = 1;
    MeshSchedule schedule;

    void validate() const {
        if (steps < 1) throw DynamicsError("RolloutConfig: steps must be >= 1");
    }
};

// Closed-loop rollout: per step, transform the mesh per schedule, rebuild the
// boundary graph, run the model, denormalize the predicted acceleration,
// integrate, and shift the window. The result has steps+1 frames, the first
// being the window's current frame.
inline Trajectory rollout(const ModelParams& params, const NormStats& stats, const FrameWindow& window0,
                          const TriMesh& mesh, const RolloutConfig& cfg, const GraphConfig& graph_cfg) {
    cfg.validate();
    window0.validate();
    if (window0.history() != graph_cfg.history)
        throw DynamicsError("rollout: window history does not match graph config");

    FrameWindow window = window0;
    Trajectory traj;
    traj.dt = window.dt;
    traj.particle_radius = window.particle_radius;
    traj.history = graph_cfg.history;
    traj.frames.push_back(window.current());

    const std::size_t n = window.particle_count();
    for (int step = 0; step < cfg.steps; ++step) {
        const TriMesh current_mesh = cfg.schedule.at_time(mesh, static_cast<double>(step) * window.dt);
        const BoundaryGraph graph = build_graph(window, current_mesh, graph_cfg);

        Tensor2 node_in = stats.normalized_node_features(graph.node_features);
        Tensor2 edge_in = stats.normalized_edge_features(graph.edge_features);
        ForwardCache cache;
        Tensor2 pred = forward(graph, params, node_in, edge_in, cache);
        stats.denormalize_targets(pred);

        IntegratorState state;
        state.dt = window.dt;
        state.positions = window.current();
        state.velocities = frame_velocity(window.frames[window.frames.size() - 2], window.current(), window.dt);
        std::vector<Vec3> accel(n);
        for (std::size_t i = 0; i < n; ++i) {
            accel[i] = {pred.at(static_cast<int>(i), 0), pred.at(static_cast<int>(i), 1),
                        pred.at(static_cast<int>(i), 2)};
            if (!is_finite(accel[i]))
                throw DynamicsError("rollout: non-finite acceleration at step " + std::to_string(step));
        }
        const IntegratorState next = semi_implicit_euler(state, accel);

        traj.frames.push_back(next.positions);
        window.frames.erase(window.frames.begin());
        window.frames.push_back(next.positions);
    }
    return traj;
}

} // namespace bgnn
