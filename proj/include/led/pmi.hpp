#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "led/timeline.hpp"

namespace led {

enum class KindFilter : uint8_t { View = 0, Click = 1, Any = 2 };

// Timeline-level co-occurrence counts. Items are deduplicated inside each
// timeline before pairing, so a heavy user contributes each pair at most
// once. c(i) counts timelines containing i, C counts pair increments.
struct CooccurrenceStats {
    std::unordered_map<uint64_t, uint32_t> pair_counts;  // key = (min<<32)|max, i<j
    std::vector<uint64_t> item_counts;                   // c(i)
    uint64_t total_pairs = 0;                            // C
    uint64_t total_items = 0;                            // sum of c(i)
    uint64_t subsampled_timelines = 0;

    static uint64_t pair_key(uint32_t i, uint32_t j) {
        if (i > j) std::swap(i, j);
        return (static_cast<uint64_t>(i) << 32) | j;
    }
    uint32_t pair_count(uint32_t i, uint32_t j) const {
        auto it = pair_counts.find(pair_key(i, j));
        return it == pair_counts.end() ? 0u : it->second;
    }
};

CooccurrenceStats count_cooccurrences(const TimelineSet& ts, KindFilter kinds = KindFilter::View,
                                      uint32_t max_pairs_per_timeline = 10000, uint64_t seed = 0);

// Sparse item-item matrix in compressed-row form. Built as a PMI matrix but
// reused as the generic CSR container for the factorizer.
class PmiMatrix {
public:
    PmiMatrix() = default;

    static PmiMatrix from_triplets(int64_t n, std::vector<std::tuple<uint32_t, uint32_t, float>> entries);

    int64_t dim() const { return n_; }
    uint64_t nnz() const { return cols_.size(); }
    double alpha() const { return alpha_; }

    std::span<const uint64_t> row_offsets() const { return row_offsets_; }
    std::span<const uint32_t> col_indices() const { return cols_; }
    std::span<const float> values() const { return vals_; }

    std::optional<float> value(uint32_t i, uint32_t j) const;
    PmiMatrix transposed() const;

    void save(const std::string& path) const;  // LEDP
    static PmiMatrix load(const std::string& path);

    friend PmiMatrix build_pmi(const CooccurrenceStats&, size_t, double, uint32_t);

private:
    int64_t n_ = 0;
    std::vector<uint64_t> row_offsets_;  // n+1
    std::vector<uint32_t> cols_;
    std::vector<float> vals_;
    double alpha_ = 0.0;
};

// PMI with context-distribution smoothing: entry (i,j) is
// log( p(i,j) / (p(i) * p_a(j)) ) with the column marginal raised to alpha.
// Pairs below min_count are dropped. Throws when the stats are empty.
PmiMatrix build_pmi(const CooccurrenceStats& stats, size_t item_count, double alpha = 0.75,
                    uint32_t min_count = 1);

}  // namespace led
