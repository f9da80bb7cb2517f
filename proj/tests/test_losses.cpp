#include <doctest.h>

#include <cmath>

#include "led/losses.hpp"

using namespace led;

namespace {

// Central finite differences on a scalar function of the scores.
template <typename F>
void check_gradients(F loss_of_scores, std::vector<double> scores, std::span<const double> analytic,
                     double tol = 1e-4) {
    const double h = 1e-3;
    for (size_t i = 0; i < scores.size(); ++i) {
        std::vector<double> up = scores;
        std::vector<double> dn = scores;
        up[i] += h;
        dn[i] -= h;
        const double fd = (loss_of_scores(up) - loss_of_scores(dn)) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-8});
        CHECK(std::abs(fd - analytic[i]) / denom <= tol);
    }
}

}  // namespace

TEST_CASE("bpr closed-form values") {
    SUBCASE("equal scores give log 2") {
        std::vector<double> negs = {1.0};
        LossValue v = bpr(1.0, negs);
        CHECK(v.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("large margin saturates to zero") {
        std::vector<double> negs = {-10.0};
        LossValue v = bpr(10.0, negs);
        CHECK(v.value <= 1e-8);
    }
    SUBCASE("unit margin") {
        std::vector<double> negs = {0.0};
        LossValue v = bpr(1.0, negs);
        CHECK(v.value == doctest::Approx(0.3132616875182228).epsilon(1e-10));
    }
    SUBCASE("mean over negatives") {
        std::vector<double> negs = {0.0, 0.0};
        LossValue v = bpr(1.0, negs);
        CHECK(v.value == doctest::Approx(0.3132616875182228).epsilon(1e-10));
    }
}

TEST_CASE("negative sampling closed-form values") {
    SUBCASE("all-zero scores") {
        std::vector<double> negs = {0.0};
        LossValue v = negative_sampling(0.0, negs);
        CHECK(v.value == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("saturated scores go to zero") {
        std::vector<double> negs = {-40.0, -35.0};
        LossValue v = negative_sampling(40.0, negs);
        CHECK(v.value <= 1e-8);
    }
    SUBCASE("scalar hand oracle") {
        std::vector<double> negs = {-1.0, 0.5};
        LossValue v = negative_sampling(2.0, negs);
        const double expect = -(std::log(1.0 / (1.0 + std::exp(-2.0))) +
                                std::log(1.0 - 1.0 / (1.0 + std::exp(1.0))) +
                                std::log(1.0 - 1.0 / (1.0 + std::exp(-0.5))));
        CHECK(v.value == doctest::Approx(expect).epsilon(1e-9));
        CHECK(std::abs(v.value - expect) <= 1e-7);
    }
}

TEST_CASE("css multinomial properties") {
    SUBCASE("I=2, N=1 equals the full softmax") {
        std::vector<double> negs = {0.3};
        LossValue v = css_multinomial(1.2, negs, 2);
        std::vector<double> all = {1.2, 0.3};
        DenseLossValue full = exact_multinomial(all, 0);
        CHECK(v.value == doctest::Approx(full.value).epsilon(1e-12));
    }
    SUBCASE("N=1 equals BPR with margin log(I-1)") {
        Rng rng(42);
        std::normal_distribution<double> normal(0.0, 3.0);
        for (int64_t items : {2, 10, 10000}) {
            for (int trial = 0; trial < 200; ++trial) {
                const double sp = normal(rng);
                const double sn = normal(rng);
                std::vector<double> negs = {sn};
                const double css = css_multinomial(sp, negs, items).value;
                const double margin = std::log(static_cast<double>(items - 1));
                const double bpr_margin = -log_sigmoid(sp - sn - margin);
                CHECK(std::abs(css - bpr_margin) <= 1e-9);
            }
        }
    }
    SUBCASE("uniform scores give log I independent of the constant") {
        for (double c : {-5.0, 0.0, 7.5}) {
            std::vector<double> negs = {c, c, c};
            LossValue v = css_multinomial(c, negs, 100);
            CHECK(v.value == doctest::Approx(std::log(100.0)).epsilon(1e-12));
        }
    }
    SUBCASE("Z estimate becomes exact when negatives cover the catalog") {
        const int64_t items = 50;
        Rng rng(7);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> all(items);
        for (double& s : all) s = normal(rng);
        const size_t pos = 13;
        std::vector<double> negs;
        for (size_t i = 0; i < all.size(); ++i) {
            if (i != pos) negs.push_back(all[i]);
        }
        LossValue css = css_multinomial(all[pos], negs, items);  // (I-1)/N = 1
        DenseLossValue full = exact_multinomial(all, pos);
        CHECK(css.value == doctest::Approx(full.value).epsilon(1e-12));
    }
}

TEST_CASE("exact multinomial") {
    SUBCASE("uniform scores give log I") {
        std::vector<double> scores(10, 1.5);
        DenseLossValue v = exact_multinomial(scores, 3);
        CHECK(v.value == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    }
    SUBCASE("dominant positive goes to zero") {
        std::vector<double> scores(5, 0.0);
        scores[2] = 50.0;
        DenseLossValue v = exact_multinomial(scores, 2);
        CHECK(v.value <= 1e-8);
    }
    SUBCASE("random scores vs independent log-sum-exp oracle") {
        Rng rng(9);
        std::normal_distribution<double> normal(0.0, 2.0);
        std::vector<double> scores(100);
        for (double& s : scores) s = normal(rng);
        DenseLossValue v = exact_multinomial(scores, 17);
        double z = 0;
        for (double s : scores) z += std::exp(s);
        const double expect = std::log(z) - scores[17];
        CHECK(std::abs(v.value - expect) <= 1e-7);
    }
}

TEST_CASE("gradients match central finite differences") {
    Rng rng(123);
    std::normal_distribution<double> normal(0.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        const size_t n = 1 + rng() % 6;
        std::vector<double> scores(n + 1);
        for (double& s : scores) s = normal(rng);

        {
            LossValue v = bpr(scores[0], std::span<const double>(scores).subspan(1));
            std::vector<double> analytic = {v.d_pos};
            analytic.insert(analytic.end(), v.d_negs.begin(), v.d_negs.end());
            check_gradients(
                [](const std::vector<double>& s) {
                    return bpr(s[0], std::span<const double>(s).subspan(1)).value;
                },
                scores, analytic);
        }
        {
            LossValue v = negative_sampling(scores[0], std::span<const double>(scores).subspan(1));
            std::vector<double> analytic = {v.d_pos};
            analytic.insert(analytic.end(), v.d_negs.begin(), v.d_negs.end());
            check_gradients(
                [](const std::vector<double>& s) {
                    return negative_sampling(s[0], std::span<const double>(s).subspan(1)).value;
                },
                scores, analytic);
        }
        {
            LossValue v = css_multinomial(scores[0], std::span<const double>(scores).subspan(1), 500);
            std::vector<double> analytic = {v.d_pos};
            analytic.insert(analytic.end(), v.d_negs.begin(), v.d_negs.end());
            check_gradients(
                [](const std::vector<double>& s) {
                    return css_multinomial(s[0], std::span<const double>(s).subspan(1), 500).value;
                },
                scores, analytic);
        }
        {
            DenseLossValue v = exact_multinomial(scores, 0);
            check_gradients(
                [](const std::vector<double>& s) { return exact_multinomial(s, 0).value; }, scores,
                v.d_scores);
        }
    }
}

TEST_CASE("translation covariance") {
    Rng rng(5);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> scores(8);
    for (double& s : scores) s = normal(rng);
    const double shift = 3.7;

    SUBCASE("bpr is shift invariant") {
        std::vector<double> shifted = scores;
        for (double& s : shifted) s += shift;
        CHECK(bpr(scores[0], std::span<const double>(scores).subspan(1)).value ==
              doctest::Approx(
                  bpr(shifted[0], std::span<const double>(shifted).subspan(1)).value)
                  .epsilon(1e-10));
    }
    SUBCASE("exact multinomial is shift invariant") {
        std::vector<double> shifted = scores;
        for (double& s : shifted) s += shift;
        CHECK(exact_multinomial(scores, 2).value ==
              doctest::Approx(exact_multinomial(shifted, 2).value).epsilon(1e-10));
    }
    SUBCASE("negative sampling is not shift invariant") {
        std::vector<double> shifted = scores;
        for (double& s : shifted) s += shift;
        const double a = negative_sampling(scores[0], std::span<const double>(scores).subspan(1)).value;
        const double b =
            negative_sampling(shifted[0], std::span<const double>(shifted).subspan(1)).value;
        CHECK(std::abs(a - b) > 1e-3);
    }
}

TEST_CASE("negative sampling draws") {
    SUBCASE("forced complement") {
        Rng rng(1);
        auto negs = sample_negatives(3, 2, {0u}, rng);
        REQUIRE(negs.size() == 2);
        CHECK(((negs[0] == 1 && negs[1] == 2) || (negs[0] == 2 && negs[1] == 1)));
    }
    SUBCASE("exact complement when N equals the feasible count") {
        Rng rng(2);
        auto negs = sample_negatives(6, 4, {1u, 4u}, rng);
        CHECK(negs == std::vector<uint32_t>{0, 2, 3, 5});
    }
    SUBCASE("infeasible request throws") {
        Rng rng(3);
        CHECK_THROWS(sample_negatives(4, 4, {0u}, rng));
    }
    SUBCASE("draws avoid the exclusion set and do not repeat") {
        Rng rng(4);
        for (int trial = 0; trial < 50; ++trial) {
            auto negs = sample_negatives(30, 10, {3u, 7u, 11u}, rng);
            std::unordered_set<uint32_t> seen;
            for (uint32_t n : negs) {
                CHECK(n < 30);
                CHECK(n != 3);
                CHECK(n != 7);
                CHECK(n != 11);
                CHECK(seen.insert(n).second);
            }
        }
    }
    SUBCASE("uniform marginal frequencies within 5 sigma") {
        // 1e6 draws over 100 items: 1e5 calls of size 10.
        const int64_t items = 100;
        const int64_t per_call = 10;
        const int64_t calls = 100000;
        std::vector<uint64_t> freq(items, 0);
        Rng rng(99);
        std::unordered_set<uint32_t> empty;
        for (int64_t c = 0; c < calls; ++c) {
            auto negs = sample_negatives(items, per_call, empty, rng);
            for (uint32_t n : negs) freq[n]++;
        }
        const double p = static_cast<double>(per_call) / items;
        const double mean = static_cast<double>(calls) * p;
        const double sigma = std::sqrt(static_cast<double>(calls) * p * (1 - p));
        for (int64_t i = 0; i < items; ++i) {
            CHECK(std::abs(static_cast<double>(freq[i]) - mean) <= 5.0 * sigma);
        }
    }
}
