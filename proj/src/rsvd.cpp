#include "led/rsvd.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "led/io.hpp"

namespace led {

namespace {

using EMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMatrix>;
using ECMap = Eigen::Map<const EMatrix>;

EMatrix thin_q(const EMatrix& y) {
    Eigen::HouseholderQR<EMatrix> qr(y);
    EMatrix q = qr.householderQ() * EMatrix::Identity(y.rows(), y.cols());
    return q;
}

EMatrix sparse_times(const PmiMatrix& m, const EMatrix& x) {
    MatD in(x.rows(), x.cols());
    EMap(in.data.data(), in.rows, in.cols) = x;
    MatD out = spmm(m, in);
    EMatrix r = ECMap(out.data.data(), out.rows, out.cols);
    return r;
}

}  // namespace

void RsvdConfig::validate(int64_t n) const {
    if (rank < 1) throw std::runtime_error("rsvd: rank must be >= 1");
    if (oversample < 0) throw std::runtime_error("rsvd: oversample must be >= 0");
    if (power_iters < 0) throw std::runtime_error("rsvd: power_iters must be >= 0");
    if (spectrum_exponent < 0.0 || spectrum_exponent > 1.0) {
        throw std::runtime_error("rsvd: spectrum_exponent must be in [0,1]");
    }
    if (rank + oversample > n) {
        throw std::runtime_error("rsvd: rank + oversample exceeds matrix dimension " +
                                 std::to_string(n));
    }
}

void EmbeddingMatrix::save(const std::string& path) const {
    BinaryWriter w(path);
    w.magic("LEDE");
    w.u32(1);
    w.u64(static_cast<uint64_t>(values.rows));
    w.u64(static_cast<uint64_t>(values.cols));
    w.f64(spectrum_exponent);
    w.span_f32(values.data);
    w.close();
}

EmbeddingMatrix EmbeddingMatrix::load(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic("LEDE");
    uint32_t version = r.u32();
    if (version != 1) throw std::runtime_error(path + ": unsupported LEDE version");
    EmbeddingMatrix e;
    int64_t rows = static_cast<int64_t>(r.u64());
    int64_t cols = static_cast<int64_t>(r.u64());
    e.spectrum_exponent = r.f64();
    e.values = MatF(rows, cols);
    r.read_f32(e.values.data);
    return e;
}

MatD spmm(const PmiMatrix& m, const MatD& dense) {
    if (m.dim() != dense.rows) throw std::runtime_error("spmm: shape mismatch");
    const int64_t n = m.dim();
    const int64_t k = dense.cols;
    MatD out(n, k);
    const auto offs = m.row_offsets();
    const auto cols = m.col_indices();
    const auto vals = m.values();
#pragma omp parallel for schedule(dynamic, 64)
    for (int64_t i = 0; i < n; ++i) {
        double* dst = out.row(i);
        std::fill(dst, dst + k, 0.0);
        for (uint64_t e = offs[i]; e < offs[i + 1]; ++e) {
            const double v = vals[e];
            const double* src = dense.row(cols[e]);
            for (int64_t c = 0; c < k; ++c) dst[c] += v * src[c];
        }
    }
    return out;
}

MatF spmm(const PmiMatrix& m, const MatF& dense) {
    if (m.dim() != dense.rows) throw std::runtime_error("spmm: shape mismatch");
    const int64_t n = m.dim();
    const int64_t k = dense.cols;
    MatF out(n, k);
    const auto offs = m.row_offsets();
    const auto cols = m.col_indices();
    const auto vals = m.values();
#pragma omp parallel for schedule(dynamic, 64)
    for (int64_t i = 0; i < n; ++i) {
        std::vector<double> acc(k, 0.0);
        for (uint64_t e = offs[i]; e < offs[i + 1]; ++e) {
            const double v = vals[e];
            const float* src = dense.row(cols[e]);
            for (int64_t c = 0; c < k; ++c) acc[c] += v * src[c];
        }
        float* dst = out.row(i);
        for (int64_t c = 0; c < k; ++c) dst[c] = static_cast<float>(acc[c]);
    }
    return out;
}

RsvdResult randomized_svd(const PmiMatrix& m, const RsvdConfig& cfg) {
    const int64_t n = m.dim();
    cfg.validate(n);
    for (float v : m.values()) {
        if (!std::isfinite(v)) throw std::runtime_error("rsvd: non-finite value in input matrix");
    }
    const int64_t k = cfg.rank + cfg.oversample;

    // Gaussian sketch, filled row-by-row for seeded reproducibility.
    EMatrix omega(n, k);
    {
        Rng rng(derive_seed(cfg.seed, "rsvd-sketch"));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t j = 0; j < k; ++j) omega(i, j) = normal(rng);
        }
    }

    const PmiMatrix mt = m.transposed();
    EMatrix q = thin_q(sparse_times(m, omega));
    for (int64_t it = 0; it < cfg.power_iters; ++it) {
        EMatrix w = thin_q(sparse_times(mt, q));
        q = thin_q(sparse_times(m, w));
    }

    // B = Q^T A computed as (A^T Q)^T; small SVD of B gives the factors.
    EMatrix z = sparse_times(mt, q);  // n x k
    EMatrix b = z.transpose();        // k x n
    Eigen::BDCSVD<EMatrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    EMatrix u_small = svd.matrixU();              // k x k
    Eigen::VectorXd s = svd.singularValues();     // k
    EMatrix v_full = svd.matrixV();               // n x k
    EMatrix u = q * u_small;                      // n x k

    const int64_t d = cfg.rank;
    RsvdResult res;
    res.singular_values.assign(s.data(), s.data() + d);
    res.right_vectors = MatD(n, d);
    EMap(res.right_vectors.data.data(), n, d) = v_full.leftCols(d);

    res.embeddings.values = MatF(n, d);
    res.embeddings.spectrum_exponent = cfg.spectrum_exponent;
    res.embeddings.singular_values.resize(d);
    for (int64_t j = 0; j < d; ++j) {
        res.embeddings.singular_values[j] = static_cast<float>(s[j]);
    }
    for (int64_t i = 0; i < n; ++i) {
        float* dst = res.embeddings.values.row(i);
        for (int64_t j = 0; j < d; ++j) {
            double scale = cfg.spectrum_exponent == 0.0 ? 1.0 : std::pow(s[j], cfg.spectrum_exponent);
            dst[j] = static_cast<float>(u(i, j) * scale);
        }
    }
    return res;
}

}  // namespace led
