#include "led/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace led {

double bpr_into(double s_pos, std::span<const double> s_negs, double* d_pos,
                std::span<double> d_negs) {
    const double inv_n = 1.0 / static_cast<double>(s_negs.size());
    double loss = 0.0;
    double g_pos = 0.0;
    for (size_t n = 0; n < s_negs.size(); ++n) {
        const double margin = s_pos - s_negs[n];
        loss += softplus(-margin);
        const double g = sigmoid(-margin);  // d(-log sigmoid(margin))/d margin = -sigmoid(-margin)
        g_pos -= g;
        if (!d_negs.empty()) d_negs[n] = g * inv_n;
    }
    if (d_pos) *d_pos = g_pos * inv_n;
    return loss * inv_n;
}

LossValue bpr(double s_pos, std::span<const double> s_negs) {
    LossValue out;
    out.d_negs.resize(s_negs.size());
    out.value = bpr_into(s_pos, s_negs, &out.d_pos, out.d_negs);
    return out;
}

double negative_sampling_into(double s_pos, std::span<const double> s_negs, double* d_pos,
                              std::span<double> d_negs) {
    double loss = softplus(-s_pos);
    if (d_pos) *d_pos = sigmoid(s_pos) - 1.0;
    for (size_t n = 0; n < s_negs.size(); ++n) {
        loss += softplus(s_negs[n]);  // -log(1 - sigmoid(s)) = softplus(s)
        if (!d_negs.empty()) d_negs[n] = sigmoid(s_negs[n]);
    }
    return loss;
}

LossValue negative_sampling(double s_pos, std::span<const double> s_negs) {
    LossValue out;
    out.d_negs.resize(s_negs.size());
    out.value = negative_sampling_into(s_pos, s_negs, &out.d_pos, out.d_negs);
    return out;
}

double css_multinomial_into(double s_pos, std::span<const double> s_negs, int64_t item_count,
                            double* d_pos, std::span<double> d_negs) {
    if (item_count < 2) throw std::runtime_error("css_multinomial: item_count must be >= 2");
    const double log_w = std::log(static_cast<double>(item_count - 1) /
                                  static_cast<double>(s_negs.size()));
    // log Z_hat = logsumexp(s_pos, s_neg[n] + log_w ...)
    double mx = s_pos;
    for (double s : s_negs) mx = std::max(mx, s + log_w);
    double sum = std::exp(s_pos - mx);
    for (double s : s_negs) sum += std::exp(s + log_w - mx);
    const double log_z = mx + std::log(sum);

    if (d_pos) *d_pos = std::exp(s_pos - log_z) - 1.0;
    if (!d_negs.empty()) {
        for (size_t n = 0; n < s_negs.size(); ++n) {
            d_negs[n] = std::exp(s_negs[n] + log_w - log_z);
        }
    }
    return log_z - s_pos;
}

LossValue css_multinomial(double s_pos, std::span<const double> s_negs, int64_t item_count) {
    LossValue out;
    out.d_negs.resize(s_negs.size());
    out.value = css_multinomial_into(s_pos, s_negs, item_count, &out.d_pos, out.d_negs);
    return out;
}

DenseLossValue exact_multinomial(std::span<const double> scores_all, size_t pos) {
    if (pos >= scores_all.size()) throw std::runtime_error("exact_multinomial: pos out of range");
    double mx = scores_all[0];
    for (double s : scores_all) mx = std::max(mx, s);
    double sum = 0.0;
    for (double s : scores_all) sum += std::exp(s - mx);
    const double log_z = mx + std::log(sum);

    DenseLossValue out;
    out.value = log_z - scores_all[pos];
    out.d_scores.resize(scores_all.size());
    for (size_t i = 0; i < scores_all.size(); ++i) {
        out.d_scores[i] = std::exp(scores_all[i] - log_z);
    }
    out.d_scores[pos] -= 1.0;
    return out;
}

std::vector<uint32_t> sample_negatives(int64_t item_count, int64_t n,
                                       const std::unordered_set<uint32_t>& exclude, Rng& rng) {
    int64_t excluded_in_range = 0;
    for (uint32_t e : exclude) {
        if (e < item_count) ++excluded_in_range;
    }
    const int64_t feasible = item_count - excluded_in_range;
    if (n > feasible) {
        throw std::runtime_error("sample_negatives: requested " + std::to_string(n) +
                                 " negatives but only " + std::to_string(feasible) + " available");
    }
    std::vector<uint32_t> out;
    out.reserve(n);
    if (n == feasible) {
        // Exact complement, ascending.
        for (int64_t i = 0; i < item_count; ++i) {
            if (!exclude.count(static_cast<uint32_t>(i))) out.push_back(static_cast<uint32_t>(i));
        }
        return out;
    }
    if (n * 2 <= feasible) {
        // Rejection sampling; each accepted draw is uniform over the
        // remaining feasible set.
        std::unordered_set<uint32_t> chosen;
        chosen.reserve(static_cast<size_t>(n) * 2);
        std::uniform_int_distribution<int64_t> dist(0, item_count - 1);
        while (static_cast<int64_t>(out.size()) < n) {
            uint32_t c = static_cast<uint32_t>(dist(rng));
            if (exclude.count(c) || !chosen.insert(c).second) continue;
            out.push_back(c);
        }
        return out;
    }
    // Dense draw: partial Fisher-Yates over the complement.
    std::vector<uint32_t> pool;
    pool.reserve(feasible);
    for (int64_t i = 0; i < item_count; ++i) {
        if (!exclude.count(static_cast<uint32_t>(i))) pool.push_back(static_cast<uint32_t>(i));
    }
    for (int64_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<int64_t> dist(i, static_cast<int64_t>(pool.size()) - 1);
        std::swap(pool[i], pool[dist(rng)]);
        out.push_back(pool[i]);
    }
    return out;
}

}  // namespace led
