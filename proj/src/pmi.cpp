#include "led/pmi.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "led/io.hpp"

namespace led {

namespace {

bool kind_matches(EventKind k, KindFilter f) {
    switch (f) {
        case KindFilter::View: return k == EventKind::View;
        case KindFilter::Click: return k == EventKind::Click;
        case KindFilter::Any: return true;
    }
    return false;
}

}  // namespace

CooccurrenceStats count_cooccurrences(const TimelineSet& ts, KindFilter kinds,
                                      uint32_t max_pairs_per_timeline, uint64_t seed) {
    CooccurrenceStats stats;
    stats.item_counts.assign(ts.item_count(), 0);

    std::vector<uint32_t> distinct;
    std::unordered_set<uint32_t> seen;
    for (const Timeline& t : ts.timelines) {
        distinct.clear();
        seen.clear();
        for (const Event& e : t.events) {
            if (!kind_matches(e.kind, kinds)) continue;
            if (seen.insert(e.item).second) distinct.push_back(e.item);
        }
        const uint64_t m = distinct.size();
        if (m == 0) continue;
        for (uint32_t it : distinct) {
            stats.item_counts[it]++;
            stats.total_items++;
        }
        if (m < 2) continue;

        const uint64_t n_pairs = m * (m - 1) / 2;
        if (n_pairs <= max_pairs_per_timeline) {
            for (uint64_t a = 0; a < m; ++a) {
                for (uint64_t b = a + 1; b < m; ++b) {
                    stats.pair_counts[CooccurrenceStats::pair_key(distinct[a], distinct[b])]++;
                    stats.total_pairs++;
                }
            }
        } else {
            // Pathological timeline: sample max_pairs_per_timeline distinct
            // pairs uniformly by linear pair index.
            stats.subsampled_timelines++;
            Rng rng(derive_seed(seed, "pair-subsample", fnv1a64(t.user)));
            std::unordered_set<uint64_t> chosen;
            chosen.reserve(max_pairs_per_timeline * 2);
            while (chosen.size() < max_pairs_per_timeline) {
                uint64_t idx = rng() % n_pairs;
                if (!chosen.insert(idx).second) continue;
                // Map linear index to (a, b), a < b, row-by-row.
                uint64_t a = 0;
                uint64_t remaining = idx;
                uint64_t row_len = m - 1;
                while (remaining >= row_len) {
                    remaining -= row_len;
                    --row_len;
                    ++a;
                }
                uint64_t b = a + 1 + remaining;
                stats.pair_counts[CooccurrenceStats::pair_key(distinct[a], distinct[b])]++;
                stats.total_pairs++;
            }
        }
    }
    return stats;
}

PmiMatrix PmiMatrix::from_triplets(int64_t n,
                                   std::vector<std::tuple<uint32_t, uint32_t, float>> entries) {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
        return std::get<1>(a) < std::get<1>(b);
    });
    PmiMatrix m;
    m.n_ = n;
    m.row_offsets_.assign(static_cast<size_t>(n) + 1, 0);
    m.cols_.reserve(entries.size());
    m.vals_.reserve(entries.size());
    for (const auto& [i, j, v] : entries) {
        if (i >= n || j >= n) throw std::runtime_error("triplet index out of range");
        m.row_offsets_[i + 1]++;
        m.cols_.push_back(j);
        m.vals_.push_back(v);
    }
    for (int64_t i = 0; i < n; ++i) m.row_offsets_[i + 1] += m.row_offsets_[i];
    return m;
}

std::optional<float> PmiMatrix::value(uint32_t i, uint32_t j) const {
    if (i >= n_) return std::nullopt;
    const auto* begin = cols_.data() + row_offsets_[i];
    const auto* end = cols_.data() + row_offsets_[i + 1];
    const auto* it = std::lower_bound(begin, end, j);
    if (it == end || *it != j) return std::nullopt;
    return vals_[it - cols_.data()];
}

PmiMatrix PmiMatrix::transposed() const {
    PmiMatrix t;
    t.n_ = n_;
    t.alpha_ = alpha_;
    t.row_offsets_.assign(static_cast<size_t>(n_) + 1, 0);
    t.cols_.resize(cols_.size());
    t.vals_.resize(vals_.size());
    for (uint32_t c : cols_) t.row_offsets_[c + 1]++;
    for (int64_t i = 0; i < n_; ++i) t.row_offsets_[i + 1] += t.row_offsets_[i];
    std::vector<uint64_t> cursor(t.row_offsets_.begin(), t.row_offsets_.end() - 1);
    for (int64_t i = 0; i < n_; ++i) {
        for (uint64_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
            uint64_t pos = cursor[cols_[k]]++;
            t.cols_[pos] = static_cast<uint32_t>(i);
            t.vals_[pos] = vals_[k];
        }
    }
    return t;
}

void PmiMatrix::save(const std::string& path) const {
    BinaryWriter w(path);
    w.magic("LEDP");
    w.u32(1);
    w.u64(static_cast<uint64_t>(n_));
    w.u64(nnz());
    w.f64(alpha_);
    w.span_u64(row_offsets_);
    w.span_u32(cols_);
    w.span_f32(vals_);
    w.close();
}

PmiMatrix PmiMatrix::load(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic("LEDP");
    uint32_t version = r.u32();
    if (version != 1) throw std::runtime_error(path + ": unsupported LEDP version");
    PmiMatrix m;
    m.n_ = static_cast<int64_t>(r.u64());
    uint64_t nnz = r.u64();
    m.alpha_ = r.f64();
    m.row_offsets_.resize(static_cast<size_t>(m.n_) + 1);
    m.cols_.resize(nnz);
    m.vals_.resize(nnz);
    r.read_u64(m.row_offsets_);
    r.read_u32(m.cols_);
    r.read_f32(m.vals_);
    return m;
}

PmiMatrix build_pmi(const CooccurrenceStats& stats, size_t item_count, double alpha,
                    uint32_t min_count) {
    if (stats.total_pairs == 0 || stats.total_items == 0) {
        throw std::runtime_error("build_pmi: empty co-occurrence statistics");
    }
    if (stats.item_counts.size() < item_count) {
        throw std::runtime_error("build_pmi: item_counts smaller than item_count");
    }

    // Smoothed context marginal p_a(j) = c(j)^alpha / sum_k c(k)^alpha.
    std::vector<double> log_p_ctx(item_count, 0.0);
    double denom_alpha = 0.0;
    for (size_t j = 0; j < item_count; ++j) {
        denom_alpha += std::pow(static_cast<double>(stats.item_counts[j]), alpha);
    }
    const double log_denom_alpha = std::log(denom_alpha);
    for (size_t j = 0; j < item_count; ++j) {
        if (stats.item_counts[j] > 0) {
            log_p_ctx[j] = alpha * std::log(static_cast<double>(stats.item_counts[j])) - log_denom_alpha;
        }
    }
    const double log_total_items = std::log(static_cast<double>(stats.total_items));
    const double log_total_pairs = std::log(static_cast<double>(stats.total_pairs));

    std::vector<std::tuple<uint32_t, uint32_t, float>> entries;
    entries.reserve(stats.pair_counts.size() * 2);
    for (const auto& [key, count] : stats.pair_counts) {
        if (count < min_count) continue;
        uint32_t i = static_cast<uint32_t>(key >> 32);
        uint32_t j = static_cast<uint32_t>(key & 0xffffffffu);
        double log_p_pair = std::log(static_cast<double>(count)) - log_total_pairs;
        double log_p_i = std::log(static_cast<double>(stats.item_counts[i])) - log_total_items;
        double log_p_j = std::log(static_cast<double>(stats.item_counts[j])) - log_total_items;
        // Row marginal stays raw; the column (context) marginal is smoothed.
        float v_ij = static_cast<float>(log_p_pair - log_p_i - log_p_ctx[j]);
        float v_ji = static_cast<float>(log_p_pair - log_p_j - log_p_ctx[i]);
        entries.emplace_back(i, j, v_ij);
        entries.emplace_back(j, i, v_ji);
    }
    PmiMatrix m = PmiMatrix::from_triplets(static_cast<int64_t>(item_count), std::move(entries));
    m.alpha_ = alpha;
    return m;
}

}  // namespace led
