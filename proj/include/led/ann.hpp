#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "led/common.hpp"

namespace led {

struct HnswConfig {
    int64_t M = 16;                // max out-degree above layer 0 (2M at layer 0)
    int64_t ef_construction = 200;
    int64_t ef_search = 100;       // default beam width at query time
    uint64_t seed = 0;
};

struct TopK {
    std::vector<uint32_t> items;  // distinct, scores non-increasing, ties by lower index
    std::vector<float> scores;
    bool truncated = false;       // k exceeded the catalog size
};

// Layered proximity graph over item vectors with inner-product similarity.
// Built single-threaded (deterministic per seed); immutable afterwards and
// safe for unlimited concurrent searches. Scores returned by search() are
// exact inner products.
class AnnIndex {
public:
    static AnnIndex build(const MatF& items, const HnswConfig& cfg = {});

    TopK search(std::span<const float> query, int64_t k, int64_t ef_search = 0) const;

    int64_t count() const { return vectors_.rows; }
    int64_t dim() const { return vectors_.cols; }
    const HnswConfig& config() const { return cfg_; }
    const MatF& vectors() const { return vectors_; }
    uint32_t entry_point() const { return entry_; }
    int32_t node_level(uint32_t n) const { return levels_[n]; }
    std::span<const uint32_t> neighbors(uint32_t node, int32_t level) const;
    uint64_t connectivity_repairs() const { return repairs_; }
    size_t memory_bytes() const;

    void save(const std::string& path) const;  // LEDI
    static AnnIndex load(const std::string& path);

private:
    friend class HnswBuilder;
    HnswConfig cfg_;
    MatF vectors_;                 // count x dim
    std::vector<int32_t> levels_;  // per node
    // adjacency[node][level] = neighbor ids
    std::vector<std::vector<std::vector<uint32_t>>> links_;
    uint32_t entry_ = 0;
    int32_t max_level_ = -1;
    uint64_t repairs_ = 0;

    float sim(std::span<const float> q, uint32_t node) const {
        return dot_f32(q.data(), vectors_.row(node), vectors_.cols);
    }
    std::vector<std::pair<float, uint32_t>> search_layer(std::span<const float> q, uint32_t entry,
                                                         int64_t ef, int32_t level) const;
    uint32_t greedy_descend(std::span<const float> q, uint32_t start, int32_t level) const;
};

// Exact top-k by inner product; ties broken by lower item index.
TopK brute_force_topk(const MatF& items, std::span<const float> query, int64_t k);

}  // namespace led
