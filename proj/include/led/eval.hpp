#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "led/ann.hpp"
#include "led/model.hpp"
#include "led/timeline.hpp"

namespace led {

// Deterministic top-k from a dense score vector (ties by lower index).
TopK topk_from_scores(std::span<const float> scores, int64_t k);

// |topk[0:k] ∩ targets| divided by min(k, |targets|); the unnormalized
// variant divides by |targets| instead.
double recall_at_k(const TopK& topk, const std::unordered_set<uint32_t>& targets, int64_t k,
                   bool normalized = true);

// Binary-gain DCG with 1/log2(1+rank) discounts, normalized by the ideal.
double ndcg_at_k(const TopK& topk, const std::unordered_set<uint32_t>& targets, int64_t k);

// One banner impression: candidates with exactly one clicked positive.
struct BannerSample {
    std::vector<uint32_t> candidates;
    size_t positive_pos = 0;        // position of the clicked item in candidates
    std::vector<float> scores;      // aligned with candidates
};

// Normalized rank of the positive among the banner candidates: 0 = best,
// 0.5 = random. Score ties are broken by a seeded shuffle so a constant
// scorer lands at 0.5 in expectation.
double click_rank(const BannerSample& banner, Rng& rng);

// Non-personalized popularity baseline: top-k items by view count.
TopK gbo_baseline(const Vocabulary& vocab, int64_t k);

struct MetricAgg {
    double mean = 0.0;
    double stderr_mean = 0.0;
    uint64_t n = 0;
};

struct EvalReport {
    std::map<std::string, MetricAgg> metrics;
    uint64_t users = 0;
    uint64_t skipped = 0;

    std::string to_json() const;
    std::string to_csv() const;
};

struct EvalConfig {
    std::vector<int64_t> recall_ks = {20, 50};
    int64_t ndcg_k = 100;
    int64_t banner_size = 10;       // B; 0 disables click-rank banners
    bool mask_input = true;         // exclude input items from the ranking
    bool normalized_recall = true;  // min(k,|targets|) denominator
    double input_fraction = 0.8;
    uint64_t seed = 42;
    bool use_ann = false;
    int64_t ef_search = 0;          // 0 = index default
};

// Offline evaluation over held-out users: split each timeline into
// input/target, rank with either exact scoring or the ANN index, and
// aggregate recall/NDCG/click-rank with standard errors.
EvalReport evaluate(const LedModel& model, const AnnIndex* index, const TimelineSet& test_set,
                    const EvalConfig& cfg);

// Popularity baseline pushed through the same protocol.
EvalReport evaluate_gbo(const Vocabulary& vocab, const TimelineSet& test_set,
                        const EvalConfig& cfg);

struct SweepRow {
    int64_t negatives = 0;  // 0 marks the exact-multinomial reference row
    double recall20 = 0.0;
    double recall50 = 0.0;
    double drop20 = 0.0;    // relative drop vs the reference
    double drop50 = 0.0;
};

std::string sweep_to_csv(std::span<const SweepRow> rows);

}  // namespace led
