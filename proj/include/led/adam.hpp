#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "led/common.hpp"

namespace led {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Dense Adam over a flat f32 parameter block; moments in f64.
class AdamDense {
public:
    explicit AdamDense(size_t n, AdamConfig cfg = {}) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<float> params, std::span<const double> grads);
    int64_t steps() const { return t_; }

private:
    AdamConfig cfg_;
    std::vector<double> m_, v_;
    int64_t t_ = 0;
};

// Row-lazy Adam for embedding tables: moments stored f32, and only rows
// that received gradient this step are touched. Bias correction uses the
// global step count.
class AdamLazyRows {
public:
    AdamLazyRows(int64_t rows, int64_t cols, AdamConfig cfg = {})
        : cfg_(cfg), cols_(cols), m_(rows, cols), v_(rows, cols) {}

    // grads holds one row of `cols_` doubles per entry of `rows`.
    void step_rows(MatF& params, std::span<const uint32_t> rows, const MatD& grads);
    // Scalar-per-row variant (bias vectors, cols_ == 1).
    void step_scalars(std::span<float> params, std::span<const uint32_t> idx,
                      std::span<const double> grads);
    void tick() { ++t_; }  // advance global step without touching rows
    int64_t steps() const { return t_; }

private:
    AdamConfig cfg_;
    int64_t cols_;
    MatF m_, v_;
    int64_t t_ = 0;
};

}  // namespace led
