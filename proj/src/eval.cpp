#include "led/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "led/losses.hpp"

namespace led {

TopK topk_from_scores(std::span<const float> scores, int64_t k) {
    const int64_t n = static_cast<int64_t>(scores.size());
    TopK out;
    if (k > n) {
        out.truncated = true;
        k = n;
    }
    if (k < 1) return out;
    std::vector<uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    auto better = [&](uint32_t a, uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), better);
    out.items.assign(idx.begin(), idx.begin() + k);
    out.scores.reserve(k);
    for (int64_t i = 0; i < k; ++i) out.scores.push_back(scores[idx[i]]);
    return out;
}

double recall_at_k(const TopK& topk, const std::unordered_set<uint32_t>& targets, int64_t k,
                   bool normalized) {
    if (targets.empty()) throw std::runtime_error("recall_at_k: empty target set");
    const int64_t limit = std::min<int64_t>(k, static_cast<int64_t>(topk.items.size()));
    int64_t hits = 0;
    for (int64_t i = 0; i < limit; ++i) {
        if (targets.count(topk.items[i])) ++hits;
    }
    const double denom = normalized
                             ? static_cast<double>(std::min<int64_t>(k, targets.size()))
                             : static_cast<double>(targets.size());
    return static_cast<double>(hits) / denom;
}

double ndcg_at_k(const TopK& topk, const std::unordered_set<uint32_t>& targets, int64_t k) {
    if (targets.empty()) throw std::runtime_error("ndcg_at_k: empty target set");
    const int64_t limit = std::min<int64_t>(k, static_cast<int64_t>(topk.items.size()));
    double dcg = 0.0;
    for (int64_t i = 0; i < limit; ++i) {
        if (targets.count(topk.items[i])) dcg += 1.0 / std::log2(2.0 + i);
    }
    double ideal = 0.0;
    const int64_t ideal_hits = std::min<int64_t>(k, targets.size());
    for (int64_t i = 0; i < ideal_hits; ++i) ideal += 1.0 / std::log2(2.0 + i);
    return dcg / ideal;
}

double click_rank(const BannerSample& banner, Rng& rng) {
    const size_t b = banner.candidates.size();
    if (b < 2) throw std::runtime_error("click_rank: banner needs at least 2 candidates");
    if (banner.positive_pos >= b) throw std::runtime_error("click_rank: positive out of range");
    // Seeded shuffle decides the order among equal scores.
    std::vector<uint32_t> order(b);
    std::iota(order.begin(), order.end(), 0u);
    std::shuffle(order.begin(), order.end(), rng);
    size_t pos_shuffled = 0;
    for (size_t i = 0; i < b; ++i) {
        if (order[i] == banner.positive_pos) {
            pos_shuffled = i;
            break;
        }
    }
    const float s_pos = banner.scores[banner.positive_pos];
    size_t rank = 0;
    for (size_t i = 0; i < b; ++i) {
        if (order[i] == banner.positive_pos) continue;
        const float s = banner.scores[order[i]];
        if (s > s_pos || (s == s_pos && i < pos_shuffled)) ++rank;
    }
    return static_cast<double>(rank) / static_cast<double>(b - 1);
}

TopK gbo_baseline(const Vocabulary& vocab, int64_t k) {
    std::vector<float> counts(vocab.size());
    for (uint32_t i = 0; i < vocab.size(); ++i) {
        counts[i] = static_cast<float>(vocab.view_count(i));
    }
    return topk_from_scores(counts, k);
}

namespace {

struct Welford {
    uint64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean);
    }
    MetricAgg agg() const {
        MetricAgg a;
        a.n = n;
        a.mean = n ? mean : 0.0;
        if (n > 1) a.stderr_mean = std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
        return a;
    }
};

struct EvalExample {
    std::vector<uint32_t> input;
    std::vector<uint32_t> targets;  // deduplicated, minus input when masking
};

std::vector<EvalExample> prepare_examples(const TimelineSet& test_set, const EvalConfig& cfg,
                                          uint64_t* skipped) {
    const bool click_targets = test_set.has_clicks();
    std::vector<EvalExample> out;
    SplitCounters counters;
    for (const Timeline& t : test_set.timelines) {
        auto split = split_timeline(t, cfg.input_fraction,
                                    derive_seed(cfg.seed, "eval-split", fnv1a64(t.user)),
                                    /*shuffle=*/true, click_targets, &counters);
        if (!split) continue;
        EvalExample ex;
        ex.input = std::move(split->input);
        std::unordered_set<uint32_t> target_set(split->target.begin(), split->target.end());
        if (cfg.mask_input) {
            for (uint32_t it : ex.input) target_set.erase(it);
        }
        if (target_set.empty()) {
            counters.empty_target++;
            continue;
        }
        ex.targets.assign(target_set.begin(), target_set.end());
        std::sort(ex.targets.begin(), ex.targets.end());
        out.push_back(std::move(ex));
    }
    if (skipped) *skipped = counters.too_short + counters.empty_target;
    return out;
}

// Top-k per user with input items removed: over-fetch by |input| when the
// retrieval cannot mask internally, then filter.
TopK ranked_for_user(const EvalExample& ex, const LedModel* model, const AnnIndex* index,
                     const MatF* augmented, const EvalConfig& cfg, int64_t k) {
    std::unordered_set<uint32_t> input_set;
    if (cfg.mask_input) input_set.insert(ex.input.begin(), ex.input.end());

    std::vector<float> query;
    if (model) {
        auto user = encode_user(ex.input, *model);
        query = augment_query(user);
    }
    const int64_t fetch = k + (cfg.mask_input ? static_cast<int64_t>(input_set.size()) : 0);
    TopK raw;
    if (index) {
        raw = index->search(query, std::min<int64_t>(fetch, index->count()), cfg.ef_search);
    } else {
        raw = brute_force_topk(*augmented, query, std::min<int64_t>(fetch, augmented->rows));
    }
    if (!cfg.mask_input) return raw;
    TopK out;
    out.truncated = raw.truncated;
    for (size_t i = 0; i < raw.items.size() && static_cast<int64_t>(out.items.size()) < k; ++i) {
        if (input_set.count(raw.items[i])) continue;
        out.items.push_back(raw.items[i]);
        out.scores.push_back(raw.scores[i]);
    }
    return out;
}

EvalReport run_protocol(const TimelineSet& test_set, const EvalConfig& cfg,
                        const LedModel* model, const AnnIndex* index, const TopK* fixed_ranking) {
    uint64_t skipped = 0;
    std::vector<EvalExample> examples = prepare_examples(test_set, cfg, &skipped);

    int64_t max_k = cfg.ndcg_k;
    for (int64_t k : cfg.recall_ks) max_k = std::max(max_k, k);

    MatF augmented;
    if (model && !index) augmented = augment_for_mips(*model);

    const int64_t n = static_cast<int64_t>(examples.size());
    std::vector<std::vector<double>> recalls(cfg.recall_ks.size(), std::vector<double>(n));
    std::vector<double> ndcgs(n);
    std::vector<double> banner_means(n, -1.0);
    const int64_t catalog = static_cast<int64_t>(test_set.item_count());

#pragma omp parallel for schedule(dynamic, 8)
    for (int64_t i = 0; i < n; ++i) {
        const EvalExample& ex = examples[i];
        std::unordered_set<uint32_t> targets(ex.targets.begin(), ex.targets.end());
        TopK ranked = fixed_ranking
                          ? *fixed_ranking
                          : ranked_for_user(ex, model, index, &augmented, cfg, max_k);
        if (fixed_ranking && cfg.mask_input) {
            TopK filtered;
            std::unordered_set<uint32_t> input_set(ex.input.begin(), ex.input.end());
            for (size_t j = 0; j < ranked.items.size(); ++j) {
                if (input_set.count(ranked.items[j])) continue;
                filtered.items.push_back(ranked.items[j]);
                filtered.scores.push_back(ranked.scores[j]);
            }
            ranked = std::move(filtered);
        }
        for (size_t ki = 0; ki < cfg.recall_ks.size(); ++ki) {
            recalls[ki][i] = recall_at_k(ranked, targets, cfg.recall_ks[ki], cfg.normalized_recall);
        }
        ndcgs[i] = ndcg_at_k(ranked, targets, cfg.ndcg_k);

        if (cfg.banner_size >= 2 && model && catalog >= cfg.banner_size) {
            // Synthesized banners: each positive against B-1 uniform items.
            Rng rng(derive_seed(cfg.seed, "banner", static_cast<uint64_t>(i)));
            auto user = encode_user(ex.input, *model);
            double sum = 0.0;
            uint64_t count = 0;
            for (uint32_t pos : ex.targets) {
                BannerSample banner;
                banner.candidates.push_back(pos);
                banner.positive_pos = 0;
                std::unordered_set<uint32_t> excl = {pos};
                auto negs = sample_negatives(catalog, cfg.banner_size - 1, excl, rng);
                banner.candidates.insert(banner.candidates.end(), negs.begin(), negs.end());
                banner.scores.reserve(banner.candidates.size());
                for (uint32_t c : banner.candidates) {
                    banner.scores.push_back(score_item(user, c, *model));
                }
                sum += click_rank(banner, rng);
                ++count;
            }
            if (count > 0) banner_means[i] = sum / static_cast<double>(count);
        }
    }

    EvalReport report;
    report.users = n;
    report.skipped = skipped;
    for (size_t ki = 0; ki < cfg.recall_ks.size(); ++ki) {
        Welford w;
        for (double v : recalls[ki]) w.add(v);
        report.metrics["recall@" + std::to_string(cfg.recall_ks[ki])] = w.agg();
    }
    {
        Welford w;
        for (double v : ndcgs) w.add(v);
        report.metrics["ndcg@" + std::to_string(cfg.ndcg_k)] = w.agg();
    }
    if (cfg.banner_size >= 2 && model) {
        Welford w;
        for (double v : banner_means) {
            if (v >= 0.0) w.add(v);
        }
        report.metrics["click_rank"] = w.agg();
    }
    return report;
}

}  // namespace

EvalReport evaluate(const LedModel& model, const AnnIndex* index, const TimelineSet& test_set,
                    const EvalConfig& cfg) {
    return run_protocol(test_set, cfg, &model, index, nullptr);
}

EvalReport evaluate_gbo(const Vocabulary& vocab, const TimelineSet& test_set,
                        const EvalConfig& cfg) {
    int64_t max_k = cfg.ndcg_k;
    for (int64_t k : cfg.recall_ks) max_k = std::max(max_k, k);
    // Over-fetch so per-user masking still leaves max_k candidates.
    TopK ranking = gbo_baseline(vocab, std::min<int64_t>(static_cast<int64_t>(vocab.size()),
                                                         max_k * 4 + 1024));
    return run_protocol(test_set, cfg, nullptr, nullptr, &ranking);
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["users"] = users;
    j["skipped"] = skipped;
    for (const auto& [name, agg] : metrics) {
        j["metrics"][name] = {{"mean", agg.mean}, {"stderr", agg.stderr_mean}, {"n", agg.n}};
    }
    return j.dump(2);
}

std::string EvalReport::to_csv() const {
    std::ostringstream ss;
    ss << "metric,mean,stderr,n\n";
    for (const auto& [name, agg] : metrics) {
        ss << name << "," << agg.mean << "," << agg.stderr_mean << "," << agg.n << "\n";
    }
    return ss.str();
}

std::string sweep_to_csv(std::span<const SweepRow> rows) {
    std::ostringstream ss;
    ss << "negatives,recall@20,recall@50,drop@20,drop@50\n";
    for (const SweepRow& r : rows) {
        if (r.negatives == 0) {
            ss << "exact";
        } else {
            ss << r.negatives;
        }
        ss << "," << r.recall20 << "," << r.recall50 << "," << r.drop20 << "," << r.drop50 << "\n";
    }
    return ss.str();
}

}  // namespace led
