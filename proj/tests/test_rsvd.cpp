#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>

#include "led/io.hpp"
#include "led/rsvd.hpp"
#include "test_helpers.hpp"

using namespace led;

namespace {

using EMat = Eigen::MatrixXd;

PmiMatrix sparse_from_dense(const EMat& a) {
    std::vector<std::tuple<uint32_t, uint32_t, float>> entries;
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) {
            if (a(i, j) != 0.0) {
                entries.emplace_back(i, j, static_cast<float>(a(i, j)));
            }
        }
    }
    return PmiMatrix::from_triplets(a.rows(), std::move(entries));
}

// Dense reconstruction of the sparse matrix exactly as the factorizer saw
// it (f32-rounded values).
EMat dense_from_sparse(const PmiMatrix& m) {
    EMat a = EMat::Zero(m.dim(), m.dim());
    for (int64_t i = 0; i < m.dim(); ++i) {
        for (uint64_t e = m.row_offsets()[i]; e < m.row_offsets()[i + 1]; ++e) {
            a(i, m.col_indices()[e]) = m.values()[e];
        }
    }
    return a;
}

double frob(const EMat& a) { return a.norm(); }

EMat reconstruction(const RsvdResult& r) {
    const int64_t n = r.right_vectors.rows;
    const int64_t d = r.right_vectors.cols;
    EMat u(n, d), v(n, d);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < d; ++j) {
            u(i, j) = r.embeddings.values.at(i, j);
            v(i, j) = r.right_vectors.at(i, j);
        }
    }
    EMat s = EMat::Zero(d, d);
    for (int64_t j = 0; j < d; ++j) s(j, j) = r.singular_values[j];
    return u * s * v.transpose();
}

// Random symmetric matrix with controllable spectral decay.
EMat random_symmetric(int n, uint64_t seed, double decay) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    EMat g(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) g(i, j) = normal(rng);
    }
    Eigen::HouseholderQR<EMat> qr(g);
    EMat q = qr.householderQ() * EMat::Identity(n, n);
    EMat s = EMat::Zero(n, n);
    for (int j = 0; j < n; ++j) s(j, j) = std::pow(static_cast<double>(j + 1), -decay);
    return q * s * q.transpose();
}

}  // namespace

TEST_CASE("spmm agrees with a dense recompute oracle") {
    Rng rng(11);
    std::normal_distribution<double> normal(0.0, 1.0);
    EMat dense = EMat::Zero(20, 20);
    for (int i = 0; i < 20; ++i) {
        for (int j = 0; j < 20; ++j) {
            if (rng() % 3 == 0) dense(i, j) = normal(rng);
        }
    }
    PmiMatrix sparse = sparse_from_dense(dense);
    MatF x(20, 7);
    for (float& v : x.data) v = static_cast<float>(normal(rng));

    MatF y = spmm(sparse, x);
    EMat dense_f32 = dense_from_sparse(sparse);
    for (int i = 0; i < 20; ++i) {
        for (int j = 0; j < 7; ++j) {
            double expect = 0;
            for (int k = 0; k < 20; ++k) expect += dense_f32(i, k) * x.at(k, j);
            CHECK(std::abs(y.at(i, j) - expect) <= 1e-5);
        }
    }

    SUBCASE("identity and zero matrices") {
        EMat id = EMat::Identity(8, 8);
        PmiMatrix sid = sparse_from_dense(id);
        MatF x8(8, 3);
        for (float& v : x8.data) v = static_cast<float>(normal(rng));
        MatF y8 = spmm(sid, x8);
        for (size_t i = 0; i < x8.data.size(); ++i) CHECK(y8.data[i] == x8.data[i]);

        PmiMatrix zero = PmiMatrix::from_triplets(8, {});
        MatF z = spmm(zero, x8);
        for (float v : z.data) CHECK(v == 0.0f);
    }

    SUBCASE("shape mismatch throws") {
        MatF bad(19, 3);
        CHECK_THROWS(spmm(sparse, bad));
    }
}

TEST_CASE("rsvd on the identity has unit spectrum") {
    EMat id = EMat::Identity(8, 8);
    RsvdConfig cfg;
    cfg.rank = 3;
    cfg.oversample = 5;
    cfg.seed = 1;
    RsvdResult r = randomized_svd(sparse_from_dense(id), cfg);
    REQUIRE(r.singular_values.size() == 3);
    for (double s : r.singular_values) CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("rsvd recovers a diagonal spectrum and ordering") {
    EMat diag = EMat::Zero(10, 10);
    diag(0, 0) = 3;
    diag(1, 1) = 2;
    diag(2, 2) = 1;
    RsvdConfig cfg;
    cfg.rank = 2;
    cfg.oversample = 8;
    cfg.seed = 3;
    RsvdResult r = randomized_svd(sparse_from_dense(diag), cfg);
    CHECK(r.singular_values[0] == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(r.singular_values[1] == doctest::Approx(2.0).epsilon(1e-8));
    // U spans e1,e2: each embedding row has all its mass on the first two coords.
    for (int64_t i = 3; i < 10; ++i) {
        for (int64_t j = 0; j < 2; ++j) {
            CHECK(std::abs(r.embeddings.values.at(i, j)) <= 1e-6);
        }
    }
}

TEST_CASE("rsvd orthonormality, monotone spectrum, determinism") {
    EMat a = random_symmetric(60, 21, 1.0);
    PmiMatrix m = sparse_from_dense(a);
    RsvdConfig cfg;
    cfg.rank = 10;
    cfg.oversample = 10;
    cfg.seed = 77;

    RsvdResult r1 = randomized_svd(m, cfg);
    RsvdResult r2 = randomized_svd(m, cfg);
    CHECK(r1.embeddings.values.data == r2.embeddings.values.data);  // bitwise determinism

    for (size_t j = 0; j + 1 < r1.singular_values.size(); ++j) {
        CHECK(r1.singular_values[j] >= r1.singular_values[j + 1]);
    }
    // U^T U == I to 1e-4 in max norm.
    const int64_t d = cfg.rank;
    for (int64_t c1 = 0; c1 < d; ++c1) {
        for (int64_t c2 = 0; c2 < d; ++c2) {
            double dot = 0;
            for (int64_t i = 0; i < 60; ++i) {
                dot += static_cast<double>(r1.embeddings.values.at(i, c1)) *
                       r1.embeddings.values.at(i, c2);
            }
            CHECK(std::abs(dot - (c1 == c2 ? 1.0 : 0.0)) <= 1e-4);
        }
    }

    SUBCASE("different seeds change the sketch but not the leading spectrum") {
        RsvdConfig cfg2 = cfg;
        cfg2.seed = 78;
        RsvdResult r3 = randomized_svd(m, cfg2);
        for (int64_t j = 0; j < 3; ++j) {
            CHECK(r3.singular_values[j] ==
                  doctest::Approx(r1.singular_values[j]).epsilon(1e-3));
        }
    }
}

TEST_CASE("rank-5 matrix is recovered within 1.05x of the dense-SVD optimum") {
    // Exact rank-5: the optimum error is ~0, so check absolute closeness.
    Rng rng(5);
    std::normal_distribution<double> normal(0.0, 1.0);
    EMat b(100, 5), c(5, 100);
    for (int i = 0; i < 100; ++i) {
        for (int j = 0; j < 5; ++j) {
            b(i, j) = normal(rng);
            c(j, i) = normal(rng);
        }
    }
    EMat a = b * c;
    PmiMatrix m = sparse_from_dense(a);
    RsvdConfig cfg;
    cfg.rank = 5;
    cfg.oversample = 10;
    cfg.power_iters = 2;
    cfg.seed = 9;
    RsvdResult r = randomized_svd(m, cfg);
    EMat dense = dense_from_sparse(m);
    const double err = frob(dense - reconstruction(r));
    CHECK(err <= 1e-3 * frob(dense));
}

TEST_CASE("rsvd beats 1.05x optimum on symmetric matrices") {
    // A fast version of the acceptance sweep: a few sizes and decays.
    int idx = 0;
    for (int n : {40, 80, 120}) {
        for (double decay : {0.5, 1.5}) {
            EMat a = random_symmetric(n, 100 + idx++, decay);
            PmiMatrix m = sparse_from_dense(a);
            EMat dense = dense_from_sparse(m);
            RsvdConfig cfg;
            cfg.rank = 10;
            cfg.oversample = 10;
            cfg.power_iters = 2;
            cfg.seed = 1000 + idx;
            RsvdResult r = randomized_svd(m, cfg);

            Eigen::JacobiSVD<EMat> svd(dense);
            double opt_sq = 0;
            for (int j = cfg.rank; j < n; ++j) {
                opt_sq += svd.singularValues()[j] * svd.singularValues()[j];
            }
            const double optimal = std::sqrt(opt_sq);
            const double err = frob(dense - reconstruction(r));
            CHECK(err <= 1.05 * optimal + 1e-9);
        }
    }
}

TEST_CASE("rsvd config validation") {
    EMat id = EMat::Identity(8, 8);
    PmiMatrix m = sparse_from_dense(id);
    RsvdConfig cfg;
    cfg.rank = 5;
    cfg.oversample = 10;  // 15 > 8
    CHECK_THROWS(randomized_svd(m, cfg));

    RsvdConfig bad;
    bad.rank = 0;
    CHECK_THROWS(randomized_svd(m, bad));

    SUBCASE("non-finite input rejected") {
        PmiMatrix nan_m = PmiMatrix::from_triplets(
            4, {{0, 1, std::numeric_limits<float>::quiet_NaN()}});
        RsvdConfig c2;
        c2.rank = 1;
        c2.oversample = 2;
        CHECK_THROWS(randomized_svd(nan_m, c2));
    }
}

TEST_CASE("spectrum exponent scales embeddings by S^gamma") {
    EMat diag = EMat::Zero(6, 6);
    for (int i = 0; i < 6; ++i) diag(i, i) = 6 - i;
    PmiMatrix m = sparse_from_dense(diag);
    RsvdConfig plain;
    plain.rank = 3;
    plain.oversample = 3;
    plain.seed = 4;
    RsvdConfig scaled = plain;
    scaled.spectrum_exponent = 0.5;
    RsvdResult r0 = randomized_svd(m, plain);
    RsvdResult r1 = randomized_svd(m, scaled);
    for (int64_t i = 0; i < 6; ++i) {
        for (int64_t j = 0; j < 3; ++j) {
            const double expect =
                r0.embeddings.values.at(i, j) * std::sqrt(r0.singular_values[j]);
            CHECK(r1.embeddings.values.at(i, j) == doctest::Approx(expect).epsilon(1e-5));
        }
    }
}

TEST_CASE("embeddings round-trip through LEDE") {
    EmbeddingMatrix e;
    e.values = led::test::random_matrix(12, 5, 3);
    e.spectrum_exponent = 0.25;
    led::test::TempDir tmp("lede");
    const std::string path = tmp.file("e.lede");
    e.save(path);
    EmbeddingMatrix back = EmbeddingMatrix::load(path);
    CHECK(back.values.rows == 12);
    CHECK(back.values.cols == 5);
    CHECK(back.spectrum_exponent == 0.25);
    CHECK(back.values.data == e.values.data);
}
