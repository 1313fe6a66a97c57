#pragma once

#include <chrono>
#include <cmath>
#include <optional>

#include "bgnn/checkpoint.hpp"
#include "bgnn/dataset.hpp"

namespace bgnn {

struct TrainError : std::runtime_error {
    explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_frames = 2;   // whole frames per optimizer step
    int steps = 2000;       // optimizer steps
    int val_interval = 200; // "epoch" length for validation logging
    double noise_std = 0.0; // position random-walk noise on the input window
    std::uint64_t seed = 0;
    double validation_split = 0.1; // used when the manifest has no val entries
    bool deterministic = false;    // single-threaded, zeroed wall clock in logs
    int val_frame_cap = 128;       // frames per validation pass

    void validate() const {
        if (!(learning_rate > 0.0)) throw TrainError("TrainConfig: learning_rate must be positive");
        if (batch_frames < 1 || steps < 1 || val_interval < 1) throw TrainError("TrainConfig: bad sizes");
        if (noise_std < 0.0) throw TrainError("TrainConfig: noise_std must be >= 0");
    }
};

// (entry, time) pair indexing one supervised frame: the window ends at `t` and
// the target is the acceleration that carries frame t into t+1.
struct SampleRef {
    int entry = 0;
    int t = 0;
};

inline std::vector<SampleRef> usable_frames(const Dataset& dataset, int history, Split split) {
    std::vector<SampleRef> refs;
    for (std::size_t e = 0; e < dataset.entries.size(); ++e) {
        if (dataset.entries[e].split != split) continue;
        const int frames = static_cast<int>(dataset.entries[e].trajectory.frames.size());
        for (int t = history; t + 1 < frames; ++t) refs.push_back({static_cast<int>(e), t});
    }
    return refs;
}

// Mean/std of node features, edge features and target accelerations over the
// given frames, accumulated with compensated summation in one fixed order.
inline NormStats compute_norm_stats(const Dataset& dataset, const GraphConfig& graph_cfg,
                                    const std::vector<SampleRef>& refs) {
    if (refs.empty()) throw TrainError("compute_norm_stats: empty dataset");
    MomentAccumulator node_acc(graph_cfg.node_feature_width());
    MomentAccumulator edge_acc(GraphConfig::edge_feature_width);
    MomentAccumulator target_acc(3);

    for (const SampleRef& ref : refs) {
        const DatasetEntry& entry = dataset.entries[ref.entry];
        const Trajectory& traj = entry.trajectory;
        const FrameWindow window = traj.window_at(ref.t);
        const BoundaryGraph graph = build_graph(window, dataset.mesh_of(entry), graph_cfg);
        for (int r = 0; r < graph.node_features.rows; ++r) node_acc.add_row(graph.node_features.row(r));
        for (int r = 0; r < graph.edge_features.rows; ++r) edge_acc.add_row(graph.edge_features.row(r));
        const auto targets =
            target_acceleration(traj.frames[ref.t - 1], traj.frames[ref.t], traj.frames[ref.t + 1], traj.dt);
        for (const Vec3& a : targets) {
            const double row[3] = {a.x, a.y, a.z};
            target_acc.add_row(row);
        }
    }

    NormStats stats;
    stats.node_mean = node_acc.mean();
    stats.node_std = node_acc.stddev();
    stats.edge_mean = edge_acc.mean();
    stats.edge_std = edge_acc.stddev();
    stats.target_mean = target_acc.mean();
    stats.target_std = target_acc.stddev();
    return stats;
}

inline NormStats compute_norm_stats(const Dataset& dataset, const GraphConfig& graph_cfg) {
    return compute_norm_stats(dataset, graph_cfg, usable_frames(dataset, graph_cfg.history, Split::Train));
}

// Standard bias-corrected Adam over the flat parameter list.
struct AdamState {
    long long step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

inline AdamState make_adam_state(const ModelParams& params) {
    AdamState state;
    for_each_param(params, [&](const std::string&, const Tensor2& t) {
        state.m.emplace_back(t.size(), 0.0);
        state.v.emplace_back(t.size(), 0.0);
    });
    return state;
}

inline void adam_step(ModelParams& params, AdamState& state, const TrainConfig& cfg) {
    ++state.step;
    const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    std::size_t block = 0;
    for_each_param(params, [&](const std::string&, Tensor2& t) {
        auto& m = state.m[block];
        auto& v = state.v[block];
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double g = t.grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            t.data[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
        }
        ++block;
    });
}

struct MetricsRow {
    long long step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    Checkpoint best;       // lowest validation loss
    Checkpoint last;       // parameters after the final step
    double best_val_loss = 0.0;
    std::vector<MetricsRow> log;
};

namespace detail {

// Random-walk position noise accumulated over the history frames; the target
// is then re-derived so that integrating the (noisy) state still reaches the
// true next frame.
inline void apply_window_noise(FrameWindow& window, double noise_std, Rng& rng) {
    const int C = window.history();
    const double step_std = noise_std / std::sqrt(static_cast<double>(C));
    std::vector<Vec3> cumulative(window.particle_count(), Vec3{0, 0, 0});
    for (int f = 1; f <= C; ++f)
        for (std::size_t i = 0; i < window.particle_count(); ++i) {
            cumulative[i] += Vec3{rng.normal(0.0, step_std), rng.normal(0.0, step_std),
                                  rng.normal(0.0, step_std)};
            window.frames[f][i] += cumulative[i];
        }
}

struct FrameLoss {
    double loss = 0.0;
    int real_nodes = 0;
};

} // namespace detail

// One supervised frame: build the graph, run the model on normalized
// features, and compare against normalized target accelerations over real
// nodes. When `params_grads` is set, accumulates gradients scaled by
// `grad_scale`.
inline detail::FrameLoss train_frame_loss(const Dataset& dataset, const SampleRef& ref,
                                          const GraphConfig& graph_cfg, const NormStats& stats,
                                          ModelParams& params, bool with_grads, double grad_scale,
                                          double noise_std, Rng* noise_rng) {
    const DatasetEntry& entry = dataset.entries[ref.entry];
    const Trajectory& traj = entry.trajectory;
    FrameWindow window = traj.window_at(ref.t);
    if (noise_std > 0.0 && noise_rng != nullptr) detail::apply_window_noise(window, noise_std, *noise_rng);

    const BoundaryGraph graph = build_graph(window, dataset.mesh_of(entry), graph_cfg);
    const Tensor2 node_in = stats.normalized_node_features(graph.node_features);
    const Tensor2 edge_in = stats.normalized_edge_features(graph.edge_features);

    ForwardCache cache;
    const Tensor2 pred = forward(graph, params, node_in, edge_in, cache);

    const int n = graph.num_real();
    Tensor2 target(n, 3);
    for (int i = 0; i < n; ++i) {
        // Target from the (possibly noise-shifted) window to the true next frame.
        const Vec3& prev = window.frames[window.frames.size() - 2][i];
        const Vec3& curr = window.frames.back()[i];
        const Vec3& next = traj.frames[ref.t + 1][i];
        const Vec3 v_t = (curr - prev) / traj.dt;
        const Vec3 v_next = (next - curr) / traj.dt;
        const Vec3 a = (v_next - v_t) / traj.dt;
        target.at(i, 0) = a.x;
        target.at(i, 1) = a.y;
        target.at(i, 2) = a.z;
    }
    const Tensor2 target_norm = stats.normalized_targets(target);

    detail::FrameLoss result;
    result.real_nodes = n;
    const double denom = static_cast<double>(n) * 3.0;
    Tensor2 d_pred(n, 3);
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double diff = pred.data[i] - target_norm.data[i];
        result.loss += diff * diff / denom;
        d_pred.data[i] = 2.0 * diff / denom * grad_scale;
    }
    if (!std::isfinite(result.loss))
        throw TrainError("loss is not finite (entry " + std::to_string(ref.entry) + ", frame " +
                         std::to_string(ref.t) + ")");
    if (with_grads) backward(cache, params, d_pred);
    return result;
}

// Mean one-step loss over a fixed list of frames (no noise, no gradients).
inline double evaluate_loss(const Dataset& dataset, const std::vector<SampleRef>& refs,
                            const GraphConfig& graph_cfg, const NormStats& stats, ModelParams& params) {
    if (refs.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    for (const SampleRef& ref : refs)
        total += train_frame_loss(dataset, ref, graph_cfg, stats, params, false, 0.0, 0.0, nullptr).loss;
    return total / static_cast<double>(refs.size());
}

// Assigns Train/Val splits when the manifest did not: a seeded shuffle moves
// validation_split of the trajectories (at least one, when possible) to Val.
inline void assign_splits(Dataset& dataset, double validation_split, std::uint64_t seed) {
    bool has_val = false;
    for (const auto& e : dataset.entries) has_val |= e.split == Split::Val;
    if (has_val || dataset.entries.size() < 2 || !(validation_split > 0.0)) return;
    std::vector<int> idx;
    for (std::size_t i = 0; i < dataset.entries.size(); ++i)
        if (dataset.entries[i].split == Split::Train) idx.push_back(static_cast<int>(i));
    if (idx.size() < 2) return;
    Rng rng = Rng::stream(seed, "train/split");
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
    const std::size_t n_val =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(validation_split * idx.size())));
    for (std::size_t k = 0; k < n_val && k + 1 < idx.size(); ++k)
        dataset.entries[idx[k]].split = Split::Val;
}

inline TrainResult train(Dataset& dataset, const NetConfig& net_cfg, const GraphConfig& graph_cfg,
                         const TrainConfig& train_cfg) {
    train_cfg.validate();
    graph_cfg.validate();
    assign_splits(dataset, train_cfg.validation_split, train_cfg.seed);

    const auto train_refs = usable_frames(dataset, graph_cfg.history, Split::Train);
    if (train_refs.empty())
        throw TrainError("train: no usable training frames (need >= C+2 frames per trajectory)");
    auto val_refs = usable_frames(dataset, graph_cfg.history, Split::Val);
    if (val_refs.empty()) val_refs = train_refs; // tiny datasets validate on train frames
    if (static_cast<int>(val_refs.size()) > train_cfg.val_frame_cap) {
        // Deterministic stride, keeps coverage across trajectories.
        std::vector<SampleRef> kept;
        const double stride = static_cast<double>(val_refs.size()) / train_cfg.val_frame_cap;
        for (int k = 0; k < train_cfg.val_frame_cap; ++k)
            kept.push_back(val_refs[static_cast<std::size_t>(k * stride)]);
        val_refs = std::move(kept);
    }

    const NormStats stats = compute_norm_stats(dataset, graph_cfg, train_refs);

    ModelParams params = init_params(net_cfg, graph_cfg.node_feature_width(), GraphConfig::edge_feature_width);
    params.alloc_grads();
    AdamState adam = make_adam_state(params);

    Rng sampler = Rng::stream(train_cfg.seed, "train/sampler");
    Rng noise_rng = Rng::stream(train_cfg.seed, "train/noise");

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    const auto t0 = std::chrono::steady_clock::now();
    const auto wall = [&] {
        if (train_cfg.deterministic) return 0.0;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    const auto snapshot = [&](const ModelParams& p) {
        Checkpoint ckpt;
        ckpt.params = p;
        ckpt.stats = stats;
        ckpt.graph = graph_cfg;
        return ckpt;
    };

    for (int step = 1; step <= train_cfg.steps; ++step) {
        params.zero_grads();
        double batch_loss = 0.0;
        const double grad_scale = 1.0 / static_cast<double>(train_cfg.batch_frames);
        for (int b = 0; b < train_cfg.batch_frames; ++b) {
            const SampleRef ref = train_refs[sampler.uniform_index(train_refs.size())];
            batch_loss += train_frame_loss(dataset, ref, graph_cfg, stats, params, true, grad_scale,
                                           train_cfg.noise_std, &noise_rng)
                              .loss;
        }
        batch_loss *= grad_scale;
        adam_step(params, adam, train_cfg);

        if (step % train_cfg.val_interval == 0 || step == train_cfg.steps) {
            const double val_loss = evaluate_loss(dataset, val_refs, graph_cfg, stats, params);
            result.log.push_back({step, batch_loss, val_loss, wall()});
            if (val_loss < result.best_val_loss) {
                result.best_val_loss = val_loss;
                result.best = snapshot(params);
            }
        }
    }
    result.last = snapshot(params);
    if (!std::isfinite(result.best_val_loss)) result.best = result.last;
    return result;
}

inline void write_metrics_csv(const std::vector<MetricsRow>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw TrainError("cannot write metrics: " + path);
    out << "step,train_loss,val_loss,wall_seconds\n";
    char buf[160];
    for (const MetricsRow& row : log) {
        std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g\n", row.step, row.train_loss, row.val_loss,
                      row.wall_seconds);
        out << buf;
    }
}

} // namespace bgnn
