#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace led {

// Dense row-major matrix. The workhorse container for embeddings and
// augmented item vectors; kept deliberately dumb so it can be mmapped or
// memcpy'd as one block.
template <typename T>
struct RowMatrix {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<T> data;

    RowMatrix() = default;
    RowMatrix(int64_t r, int64_t c) : rows(r), cols(c), data(static_cast<size_t>(r) * c) {}

    T* row(int64_t i) { return data.data() + static_cast<size_t>(i) * cols; }
    const T* row(int64_t i) const { return data.data() + static_cast<size_t>(i) * cols; }
    std::span<T> row_span(int64_t i) { return {row(i), static_cast<size_t>(cols)}; }
    std::span<const T> row_span(int64_t i) const { return {row(i), static_cast<size_t>(cols)}; }
    T& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i) * cols + j]; }
    const T& at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i) * cols + j]; }
    bool empty() const { return rows == 0 || cols == 0; }
    size_t size_bytes() const { return data.size() * sizeof(T); }
};

using MatF = RowMatrix<float>;
using MatD = RowMatrix<double>;

// Four-lane f32 inner product. Every scoring path (model, ANN, brute force)
// goes through this one function so scores compare bitwise across paths.
inline float dot_f32(const float* a, const float* b, int64_t n) {
    float s0 = 0.f, s1 = 0.f, s2 = 0.f, s3 = 0.f;
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    float tail = 0.f;
    for (; i < n; ++i) tail += a[i] * b[i];
    return (s0 + s1) + (s2 + s3) + tail;
}

inline float dot_f32(std::span<const float> a, std::span<const float> b) {
    return dot_f32(a.data(), b.data(), static_cast<int64_t>(a.size()));
}

inline double dot_f64(const float* a, const float* b, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

// Numerically stable softplus / log-sigmoid.
inline double softplus(double x) {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline double log_sigmoid(double x) { return -softplus(-x); }

inline double sigmoid(double x) {
    if (x >= 0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

// FNV-1a, used for seed derivation and artifact manifests.
inline uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), h);
}

// Derives an independent stream seed from a root seed and a label, so one
// root seed reproduces the whole pipeline.
inline uint64_t derive_seed(uint64_t root, std::string_view label) {
    uint64_t h = fnv1a64(&root, sizeof(root));
    return fnv1a64(label, h);
}

inline uint64_t derive_seed(uint64_t root, std::string_view label, uint64_t n) {
    uint64_t h = derive_seed(root, label);
    return fnv1a64(&n, sizeof(n), h);
}

using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace led
