#pragma once

#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

#include "led/common.hpp"

namespace led {

// Scalar loss with gradients w.r.t. the scores that produced it.
struct LossValue {
    double value = 0.0;
    double d_pos = 0.0;
    std::vector<double> d_negs;
};

// Pairwise ranking loss, mean over negatives:
//   -(1/N) sum_n log sigmoid(s_pos - s_neg[n])
LossValue bpr(double s_pos, std::span<const double> s_negs);
double bpr_into(double s_pos, std::span<const double> s_negs, double* d_pos,
                std::span<double> d_negs);

// Classification against sampled negatives (no 1/N normalization):
//   -( log sigmoid(s_pos) + sum_n log(1 - sigmoid(s_neg[n])) )
LossValue negative_sampling(double s_pos, std::span<const double> s_negs);
double negative_sampling_into(double s_pos, std::span<const double> s_negs, double* d_pos,
                              std::span<double> d_negs);

// Sampled-softmax cross entropy with the partition function estimated as
//   Z_hat = exp(s_pos) + (I-1)/N * sum_n exp(s_neg[n]),
// evaluated in log space.
LossValue css_multinomial(double s_pos, std::span<const double> s_negs, int64_t item_count);
double css_multinomial_into(double s_pos, std::span<const double> s_negs, int64_t item_count,
                            double* d_pos, std::span<double> d_negs);

// Full-softmax cross entropy over a dense score vector (small catalogs /
// oracle use).
struct DenseLossValue {
    double value = 0.0;
    std::vector<double> d_scores;
};
DenseLossValue exact_multinomial(std::span<const double> scores_all, size_t pos);

// N uniform draws over {0..item_count-1} minus `exclude`, without
// replacement. Rejection sampling when N is small relative to the catalog,
// complement enumeration otherwise. Throws when N exceeds the feasible set.
std::vector<uint32_t> sample_negatives(int64_t item_count, int64_t n,
                                       const std::unordered_set<uint32_t>& exclude, Rng& rng);

}  // namespace led
