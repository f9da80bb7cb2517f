#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "led/common.hpp"
#include "led/pmi.hpp"

namespace led {

struct RsvdConfig {
    int64_t rank = 600;              // embedding dimension d
    int64_t oversample = 10;         // sketch uses rank + oversample columns
    int64_t power_iters = 2;         // subspace iterations with re-orthonormalization
    double spectrum_exponent = 0.0;  // embeddings = U * diag(S^gamma)
    uint64_t seed = 0;

    void validate(int64_t n) const;
};

// Pre-trained item embeddings: one f32 row per item.
struct EmbeddingMatrix {
    MatF values;                        // I x d
    std::vector<float> singular_values; // optional, length d when present
    double spectrum_exponent = 0.0;

    int64_t item_count() const { return values.rows; }
    int64_t dim() const { return values.cols; }

    void save(const std::string& path) const;  // LEDE
    static EmbeddingMatrix load(const std::string& path);
};

struct RsvdResult {
    EmbeddingMatrix embeddings;       // U scaled by diag(S^gamma)
    std::vector<double> singular_values;
    MatD right_vectors;               // V, I x d; kept for approximation-error checks
};

// Sparse times dense, exact, parallel over rows; f64 accumulation.
MatD spmm(const PmiMatrix& m, const MatD& dense);
MatF spmm(const PmiMatrix& m, const MatF& dense);

// Randomized SVD via gaussian sketch, QR range finding and subspace
// iteration. Deterministic given cfg.seed.
RsvdResult randomized_svd(const PmiMatrix& m, const RsvdConfig& cfg);

}  // namespace led
