#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "bgnn/tensor.hpp"

namespace bgnn {

// Neumaier-compensated running sum.
class KahanSum {
public:
    void add(double value) {
        const double t = sum_ + value;
        if (std::abs(sum_) >= std::abs(value))
            comp_ += (sum_ - t) + value;
        else
            comp_ += (value - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// Per-column mean/std accumulator with compensated summation.
class MomentAccumulator {
public:
    explicit MomentAccumulator(int cols = 0) : sum_(cols), sum_sq_(cols) {}

    int cols() const { return static_cast<int>(sum_.size()); }
    long long count() const { return count_; }

    void add_row(const double* row) {
        for (std::size_t c = 0; c < sum_.size(); ++c) {
            sum_[c].add(row[c]);
            sum_sq_[c].add(row[c] * row[c]);
        }
        ++count_;
    }

    std::vector<double> mean() const {
        std::vector<double> m(sum_.size());
        for (std::size_t c = 0; c < sum_.size(); ++c) m[c] = sum_[c].value() / static_cast<double>(count_);
        return m;
    }

    // Standard deviation with floor 1e-8.
    std::vector<double> stddev() const {
        const auto m = mean();
        std::vector<double> s(sum_.size());
        for (std::size_t c = 0; c < sum_.size(); ++c) {
            const double var = sum_sq_[c].value() / static_cast<double>(count_) - m[c] * m[c];
            s[c] = std::max(std::sqrt(std::max(var, 0.0)), 1e-8);
        }
        return s;
    }

private:
    std::vector<KahanSum> sum_;
    std::vector<KahanSum> sum_sq_;
    long long count_ = 0;
};

// Frozen per-dimension statistics for node features, edge features and target
// accelerations, computed once over the training set.
struct NormStats {
    std::vector<double> node_mean, node_std;
    std::vector<double> edge_mean, edge_std;
    std::vector<double> target_mean, target_std;

    static void normalize_rows(Tensor2& t, const std::vector<double>& mean, const std::vector<double>& std) {
        if (t.cols != static_cast<int>(mean.size()))
            throw std::invalid_argument("normalize_rows: column count mismatch");
        for (int r = 0; r < t.rows; ++r) {
            double* row = t.row(r);
            for (int c = 0; c < t.cols; ++c) row[c] = (row[c] - mean[c]) / std[c];
        }
    }

    Tensor2 normalized_node_features(const Tensor2& raw) const {
        Tensor2 t = raw;
        normalize_rows(t, node_mean, node_std);
        return t;
    }
    Tensor2 normalized_edge_features(const Tensor2& raw) const {
        Tensor2 t = raw;
        normalize_rows(t, edge_mean, edge_std);
        return t;
    }
    Tensor2 normalized_targets(const Tensor2& raw) const {
        Tensor2 t = raw;
        normalize_rows(t, target_mean, target_std);
        return t;
    }
    void denormalize_targets(Tensor2& t) const {
        for (int r = 0; r < t.rows; ++r) {
            double* row = t.row(r);
            for (int c = 0; c < t.cols; ++c) row[c] = row[c] * target_std[c] + target_mean[c];
        }
    }
};

} // namespace bgnn
