#pragma once

#include <cmath>
#include <string>

#include "bgnn/rng.hpp"
#include "bgnn/tensor.hpp"

namespace bgnn {

// Dense layer y = x W^T + b with W stored [out][in]. Forward/backward are
// plain loops; everything is 64-bit and single-threaded so results are
// reproducible.

inline void dense_forward(const Tensor2& x, const Tensor2& w, const Tensor2& b, Tensor2& y) {
    y = Tensor2(x.rows, w.rows);
    for (int r = 0; r < x.rows; ++r) {
        const double* xr = x.row(r);
        double* yr = y.row(r);
        for (int o = 0; o < w.rows; ++o) {
            const double* wr = w.row(o);
            double acc = b.data[o];
            for (int i = 0; i < w.cols; ++i) acc += wr[i] * xr[i];
            yr[o] = acc;
        }
    }
}

// Accumulates parameter gradients into w.grad / b.grad and writes input
// gradients into dx.
inline void dense_backward(const Tensor2& x, Tensor2& w, Tensor2& b, const Tensor2& dy, Tensor2& dx) {
    dx = Tensor2(x.rows, x.cols);
    for (int r = 0; r < x.rows; ++r) {
        const double* xr = x.row(r);
        const double* dyr = dy.row(r);
        double* dxr = dx.row(r);
        for (int o = 0; o < w.rows; ++o) {
            const double g = dyr[o];
            if (g == 0.0) continue;
            b.grad[o] += g;
            const double* wr = w.row(o);
            double* wg = w.grad_row(o);
            for (int i = 0; i < w.cols; ++i) {
                wg[i] += g * xr[i];
                dxr[i] += g * wr[i];
            }
        }
    }
}

inline void relu_forward(const Tensor2& x, Tensor2& y) {
    y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
}

inline void relu_backward(const Tensor2& x, const Tensor2& dy, Tensor2& dx) {
    dx = dy;
    for (std::size_t i = 0; i < x.data.size(); ++i)
        if (!(x.data[i] > 0.0)) dx.data[i] = 0.0;
}

struct LayerNormCache {
    std::vector<double> mean;    // per row
    std::vector<double> inv_std; // 1 / sqrt(var + eps)
};

// Per-row normalization y = gain * (x - mu) / sqrt(var + eps) + bias.
inline void layer_norm_forward(const Tensor2& x, const Tensor2& gain, const Tensor2& bias, double eps,
                               Tensor2& y, LayerNormCache& cache) {
    const int d = x.cols;
    y = Tensor2(x.rows, d);
    cache.mean.resize(x.rows);
    cache.inv_std.resize(x.rows);
    for (int r = 0; r < x.rows; ++r) {
        const double* xr = x.row(r);
        double mu = 0.0;
        for (int c = 0; c < d; ++c) mu += xr[c];
        mu /= d;
        double var = 0.0;
        for (int c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        cache.mean[r] = mu;
        cache.inv_std[r] = inv;
        double* yr = y.row(r);
        for (int c = 0; c < d; ++c) yr[c] = gain.data[c] * (xr[c] - mu) * inv + bias.data[c];
    }
}

inline void layer_norm_backward(const Tensor2& x, Tensor2& gain, Tensor2& bias, double eps,
                                const LayerNormCache& cache, const Tensor2& dy, Tensor2& dx) {
    (void)eps;
    const int d = x.cols;
    dx = Tensor2(x.rows, d);
    for (int r = 0; r < x.rows; ++r) {
        const double* xr = x.row(r);
        const double* dyr = dy.row(r);
        double* dxr = dx.row(r);
        const double mu = cache.mean[r];
        const double inv = cache.inv_std[r];
        // dq = dy * gain, with q the normalized activation (x - mu) * inv.
        double sum_dq = 0.0;
        double sum_dq_q = 0.0;
        for (int c = 0; c < d; ++c) {
            const double q = (xr[c] - mu) * inv;
            const double dq = dyr[c] * gain.data[c];
            gain.grad[c] += dyr[c] * q;
            bias.grad[c] += dyr[c];
            sum_dq += dq;
            sum_dq_q += dq * q;
        }
        const double mean_dq = sum_dq / d;
        const double mean_dq_q = sum_dq_q / d;
        for (int c = 0; c < d; ++c) {
            const double q = (xr[c] - mu) * inv;
            const double dq = dyr[c] * gain.data[c];
            dxr[c] = inv * (dq - mean_dq - q * mean_dq_q);
        }
    }
}

// Two dense layers with a rectifier after the first, optionally followed by
// layer normalization. Encoders and the decoder skip the normalization.
struct MlpParams {
    Tensor2 w1, b1; // hidden x in, 1 x hidden
    Tensor2 w2, b2; // out x hidden, 1 x out
    bool has_layer_norm = false;
    Tensor2 ln_gain, ln_bias; // 1 x out
    double ln_eps = 1.0;

    int in_width() const { return w1.cols; }
    int hidden_width() const { return w1.rows; }
    int out_width() const { return w2.rows; }

    void alloc_grads() {
        w1.alloc_grad(); b1.alloc_grad();
        w2.alloc_grad(); b2.alloc_grad();
        if (has_layer_norm) { ln_gain.alloc_grad(); ln_bias.alloc_grad(); }
    }
    void zero_grads() {
        w1.zero_grad(); b1.zero_grad();
        w2.zero_grad(); b2.zero_grad();
        if (has_layer_norm) { ln_gain.zero_grad(); ln_bias.zero_grad(); }
    }
};

// Weights are N(0, 2 / fan_in_effective); the caller may enlarge the first
// layer's effective fan-in to damp selected input columns.
inline void he_init(Tensor2& w, double fan_in_effective, Rng& rng) {
    const double stddev = std::sqrt(2.0 / fan_in_effective);
    for (double& v : w.data) v = rng.normal() * stddev;
}

inline MlpParams make_mlp(int in, int hidden, int out, bool layer_norm, Rng& rng,
                          double fan_in_boost_extra = 0.0, double ln_eps = 1.0) {
    MlpParams mlp;
    mlp.w1 = Tensor2(hidden, in);
    mlp.b1 = Tensor2(1, hidden);
    mlp.w2 = Tensor2(out, hidden);
    mlp.b2 = Tensor2(1, out);
    he_init(mlp.w1, static_cast<double>(in) + fan_in_boost_extra, rng);
    he_init(mlp.w2, static_cast<double>(hidden), rng);
    mlp.has_layer_norm = layer_norm;
    if (layer_norm) {
        mlp.ln_gain = Tensor2(1, out);
        mlp.ln_gain.fill(1.0);
        mlp.ln_bias = Tensor2(1, out);
        mlp.ln_eps = ln_eps;
    }
    return mlp;
}

struct MlpCache {
    Tensor2 input;
    Tensor2 z1, a1, z2;
    Tensor2 out;
    LayerNormCache ln;
};

inline void mlp_forward(const MlpParams& mlp, const Tensor2& x, MlpCache& cache) {
    cache.input = x;
    dense_forward(x, mlp.w1, mlp.b1, cache.z1);
    relu_forward(cache.z1, cache.a1);
    dense_forward(cache.a1, mlp.w2, mlp.b2, cache.z2);
    if (mlp.has_layer_norm)
        layer_norm_forward(cache.z2, mlp.ln_gain, mlp.ln_bias, mlp.ln_eps, cache.out, cache.ln);
    else
        cache.out = cache.z2;
}

inline void mlp_backward(MlpParams& mlp, const MlpCache& cache, const Tensor2& d_out, Tensor2& d_input) {
    Tensor2 d_z2;
    if (mlp.has_layer_norm)
        layer_norm_backward(cache.z2, mlp.ln_gain, mlp.ln_bias, mlp.ln_eps, cache.ln, d_out, d_z2);
    else
        d_z2 = d_out;
    Tensor2 d_a1;
    dense_backward(cache.a1, mlp.w2, mlp.b2, d_z2, d_a1);
    Tensor2 d_z1;
    relu_backward(cache.z1, d_a1, d_z1);
    dense_backward(cache.input, mlp.w1, mlp.b1, d_z1, d_input);
}

} // namespace bgnn
