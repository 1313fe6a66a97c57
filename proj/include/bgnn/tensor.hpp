#pragma once

#include <cassert>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace bgnn {

// Row-major 2D array of doubles with an optional gradient buffer of the same
// shape. Deliberately minimal: the network below only needs dense rows.
struct Tensor2 {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;
    std::vector<double> grad; // empty unless alloc_grad() was called

    Tensor2() = default;
    Tensor2(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    std::size_t size() const { return data.size(); }

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

    bool has_grad() const { return !grad.empty(); }
    void alloc_grad() { grad.assign(data.size(), 0.0); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

    double& grad_at(int r, int c) { return grad[static_cast<std::size_t>(r) * cols + c]; }
    double* grad_row(int r) { return grad.data() + static_cast<std::size_t>(r) * cols; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline bool same_shape(const Tensor2& a, const Tensor2& b) {
    return a.rows == b.rows && a.cols == b.cols;
}

inline void require_shape(const Tensor2& t, int r, int c, const char* what) {
    if (t.rows != r || t.cols != c) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

} // namespace bgnn
