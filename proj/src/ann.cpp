#include "led/ann.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "led/io.hpp"

namespace led {

namespace {

// (similarity, node): best-first ordering with deterministic tie-break.
struct BetterFirst {
    bool operator()(const std::pair<float, uint32_t>& a, const std::pair<float, uint32_t>& b) const {
        if (a.first != b.first) return a.first < b.first;  // max-heap on similarity
        return a.second > b.second;                        // lower id wins ties
    }
};
struct WorseFirst {
    bool operator()(const std::pair<float, uint32_t>& a, const std::pair<float, uint32_t>& b) const {
        if (a.first != b.first) return a.first > b.first;  // min-heap on similarity
        return a.second < b.second;                        // higher id evicted first
    }
};

// Per-thread visited markers, reused across searches.
struct VisitedScratch {
    std::vector<uint32_t> stamp;
    uint32_t current = 0;

    void begin(size_t n) {
        if (stamp.size() < n) stamp.assign(n, 0);
        if (++current == 0) {
            std::fill(stamp.begin(), stamp.end(), 0);
            current = 1;
        }
    }
    bool visit(uint32_t node) {
        if (stamp[node] == current) return false;
        stamp[node] = current;
        return true;
    }
};
thread_local VisitedScratch tls_visited;

}  // namespace

std::span<const uint32_t> AnnIndex::neighbors(uint32_t node, int32_t level) const {
    return links_[node][level];
}

std::vector<std::pair<float, uint32_t>> AnnIndex::search_layer(std::span<const float> q,
                                                               uint32_t entry, int64_t ef,
                                                               int32_t level) const {
    VisitedScratch& visited = tls_visited;
    visited.begin(vectors_.rows);

    std::priority_queue<std::pair<float, uint32_t>, std::vector<std::pair<float, uint32_t>>,
                        BetterFirst>
        candidates;
    std::priority_queue<std::pair<float, uint32_t>, std::vector<std::pair<float, uint32_t>>,
                        WorseFirst>
        results;

    const float entry_sim = sim(q, entry);
    visited.visit(entry);
    candidates.emplace(entry_sim, entry);
    results.emplace(entry_sim, entry);

    while (!candidates.empty()) {
        auto [c_sim, c] = candidates.top();
        if (static_cast<int64_t>(results.size()) >= ef && c_sim < results.top().first) break;
        candidates.pop();
        for (uint32_t nb : links_[c][level]) {
            if (!visited.visit(nb)) continue;
            const float s = sim(q, nb);
            if (static_cast<int64_t>(results.size()) < ef || s > results.top().first) {
                candidates.emplace(s, nb);
                results.emplace(s, nb);
                if (static_cast<int64_t>(results.size()) > ef) results.pop();
            }
        }
    }
    std::vector<std::pair<float, uint32_t>> out;
    out.reserve(results.size());
    while (!results.empty()) {
        out.push_back(results.top());
        results.pop();
    }
    std::reverse(out.begin(), out.end());  // best first
    return out;
}

uint32_t AnnIndex::greedy_descend(std::span<const float> q, uint32_t start, int32_t level) const {
    uint32_t cur = start;
    float best = sim(q, cur);
    bool improved = true;
    while (improved) {
        improved = false;
        for (uint32_t nb : links_[cur][level]) {
            const float s = sim(q, nb);
            if (s > best) {
                best = s;
                cur = nb;
                improved = true;
            }
        }
    }
    return cur;
}

class HnswBuilder {
public:
    HnswBuilder(const MatF& items, const HnswConfig& cfg) : idx_() {
        idx_.cfg_ = cfg;
        idx_.vectors_ = items;
        const int64_t n = items.rows;
        idx_.levels_.resize(n);
        idx_.links_.resize(n);
        rng_.seed(derive_seed(cfg.seed, "hnsw-levels"));
        inv_log_m_ = 1.0 / std::log(static_cast<double>(std::max<int64_t>(cfg.M, 2)));
    }

    AnnIndex finish() && {
        repair_connectivity();
        return std::move(idx_);
    }

    void insert(uint32_t node) {
        const int32_t level = random_level();
        idx_.levels_[node] = level;
        idx_.links_[node].resize(level + 1);

        if (idx_.max_level_ < 0) {
            idx_.entry_ = node;
            idx_.max_level_ = level;
            return;
        }
        std::span<const float> q = idx_.vectors_.row_span(node);
        uint32_t cur = idx_.entry_;
        for (int32_t l = idx_.max_level_; l > level; --l) {
            cur = idx_.greedy_descend(q, cur, l);
        }
        for (int32_t l = std::min(level, idx_.max_level_); l >= 0; --l) {
            auto found = idx_.search_layer(q, cur, idx_.cfg_.ef_construction, l);
            auto selected = select_neighbors(found, idx_.cfg_.M, /*keep_pruned=*/true);
            idx_.links_[node][l].assign(selected.begin(), selected.end());
            const int64_t cap = l == 0 ? idx_.cfg_.M * 2 : idx_.cfg_.M;
            for (uint32_t nb : selected) {
                auto& list = idx_.links_[nb][l];
                list.push_back(node);
                if (static_cast<int64_t>(list.size()) > cap) shrink(nb, l, cap);
            }
            cur = found.front().second;
        }
        if (level > idx_.max_level_) {
            idx_.max_level_ = level;
            idx_.entry_ = node;
        }
    }

private:
    int32_t random_level() {
        const double u = std::max(uniform01(rng_), 1e-300);
        return static_cast<int32_t>(-std::log(u) * inv_log_m_);
    }

    // Keeps a candidate only if it is closer to the query than to every
    // already-kept neighbor; spreads edges across directions. When
    // keep_pruned is set, leftover slots are backfilled with the best
    // rejected candidates.
    std::vector<uint32_t> select_neighbors(std::span<const std::pair<float, uint32_t>> candidates,
                                           int64_t m, bool keep_pruned) const {
        std::vector<uint32_t> kept;
        if (static_cast<int64_t>(candidates.size()) <= m) {
            kept.reserve(candidates.size());
            for (const auto& [s, id] : candidates) kept.push_back(id);
            return kept;
        }
        kept.reserve(m);
        std::vector<uint32_t> pruned;
        for (const auto& [s_q, id] : candidates) {
            if (static_cast<int64_t>(kept.size()) >= m) break;
            bool good = true;
            std::span<const float> v = idx_.vectors_.row_span(id);
            for (uint32_t r : kept) {
                if (idx_.sim(v, r) > s_q) {
                    good = false;
                    break;
                }
            }
            if (good) {
                kept.push_back(id);
            } else if (keep_pruned) {
                pruned.push_back(id);
            }
        }
        if (keep_pruned) {
            for (size_t i = 0; i < pruned.size() && static_cast<int64_t>(kept.size()) < m; ++i) {
                kept.push_back(pruned[i]);
            }
        }
        return kept;
    }

    void shrink(uint32_t node, int32_t level, int64_t cap) {
        auto& list = idx_.links_[node][level];
        std::span<const float> v = idx_.vectors_.row_span(node);
        std::vector<std::pair<float, uint32_t>> cands;
        cands.reserve(list.size());
        for (uint32_t nb : list) cands.emplace_back(idx_.sim(v, nb), nb);
        std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        list = select_neighbors(cands, cap, /*keep_pruned=*/false);
    }

    // Directed BFS from the entry point at layer 0; any unreached node is
    // linked to its best reachable neighbor so beam search (and the ef = I
    // exhaustive case) can always reach the whole catalog.
    void repair_connectivity() {
        const int64_t n = idx_.vectors_.rows;
        if (n == 0) return;
        std::vector<uint8_t> reached(n, 0);
        std::vector<uint32_t> queue;
        queue.reserve(n);
        auto bfs_from = [&](uint32_t start) {
            if (reached[start]) return;
            reached[start] = 1;
            queue.push_back(start);
            size_t head = queue.size() - 1;
            while (head < queue.size()) {
                uint32_t c = queue[head++];
                for (uint32_t nb : idx_.links_[c][0]) {
                    if (!reached[nb]) {
                        reached[nb] = 1;
                        queue.push_back(nb);
                    }
                }
            }
        };
        bfs_from(idx_.entry_);
        for (int64_t node = 0; node < n; ++node) {
            if (reached[node]) continue;
            std::span<const float> v = idx_.vectors_.row_span(node);
            float best = -std::numeric_limits<float>::infinity();
            uint32_t best_id = idx_.entry_;
            for (uint32_t r : queue) {
                const float s = idx_.sim(v, r);
                if (s > best || (s == best && r < best_id)) {
                    best = s;
                    best_id = r;
                }
            }
            idx_.links_[best_id][0].push_back(static_cast<uint32_t>(node));
            idx_.links_[node][0].push_back(best_id);
            idx_.repairs_++;
            bfs_from(static_cast<uint32_t>(node));
        }
    }

    AnnIndex idx_;
    Rng rng_;
    double inv_log_m_;
};

AnnIndex AnnIndex::build(const MatF& items, const HnswConfig& cfg) {
    if (items.rows < 1) throw std::runtime_error("ann: cannot index an empty catalog");
    for (int64_t i = 0; i < items.rows; ++i) {
        for (int64_t c = 0; c < items.cols; ++c) {
            if (!std::isfinite(items.at(i, c))) {
                throw std::runtime_error("ann: non-finite vector for item " + std::to_string(i));
            }
        }
    }
    HnswBuilder builder(items, cfg);
    for (int64_t i = 0; i < items.rows; ++i) builder.insert(static_cast<uint32_t>(i));
    return std::move(builder).finish();
}

TopK AnnIndex::search(std::span<const float> query, int64_t k, int64_t ef_search) const {
    if (k < 1) throw std::runtime_error("ann: k must be >= 1");
    TopK out;
    const int64_t n = vectors_.rows;
    if (k > n) {
        out.truncated = true;
        k = n;
    }
    int64_t ef = ef_search > 0 ? ef_search : cfg_.ef_search;
    ef = std::max(ef, k);

    uint32_t cur = entry_;
    for (int32_t l = max_level_; l >= 1; --l) cur = greedy_descend(query, cur, l);
    auto found = search_layer(query, cur, ef, 0);

    // Already exact inner products; order is (score desc, index asc).
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    const int64_t take = std::min<int64_t>(k, static_cast<int64_t>(found.size()));
    out.items.reserve(take);
    out.scores.reserve(take);
    for (int64_t i = 0; i < take; ++i) {
        out.scores.push_back(found[i].first);
        out.items.push_back(found[i].second);
    }
    return out;
}

size_t AnnIndex::memory_bytes() const {
    size_t b = vectors_.size_bytes() + levels_.size() * sizeof(int32_t);
    for (const auto& per_node : links_) {
        for (const auto& l : per_node) b += l.size() * sizeof(uint32_t);
    }
    return b;
}

void AnnIndex::save(const std::string& path) const {
    BinaryWriter w(path);
    w.magic("LEDI");
    w.u32(1);
    w.u64(static_cast<uint64_t>(vectors_.rows));
    w.u64(static_cast<uint64_t>(vectors_.cols));
    w.u64(static_cast<uint64_t>(cfg_.M));
    w.u64(static_cast<uint64_t>(cfg_.ef_construction));
    w.u64(static_cast<uint64_t>(cfg_.ef_search));
    w.u64(cfg_.seed);
    w.u32(entry_);
    w.i32(max_level_);
    w.u64(repairs_);
    w.span_i32(levels_);
    w.span_f32(vectors_.data);
    for (int64_t node = 0; node < vectors_.rows; ++node) {
        for (int32_t l = 0; l <= levels_[node]; ++l) {
            const auto& list = links_[node][l];
            w.u32(static_cast<uint32_t>(list.size()));
            w.span_u32(list);
        }
    }
    w.close();
}

AnnIndex AnnIndex::load(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic("LEDI");
    uint32_t version = r.u32();
    if (version != 1) throw std::runtime_error(path + ": unsupported LEDI version");
    AnnIndex idx;
    int64_t n = static_cast<int64_t>(r.u64());
    int64_t dim = static_cast<int64_t>(r.u64());
    idx.cfg_.M = static_cast<int64_t>(r.u64());
    idx.cfg_.ef_construction = static_cast<int64_t>(r.u64());
    idx.cfg_.ef_search = static_cast<int64_t>(r.u64());
    idx.cfg_.seed = r.u64();
    idx.entry_ = r.u32();
    idx.max_level_ = r.i32();
    idx.repairs_ = r.u64();
    idx.levels_.resize(n);
    r.read_i32(idx.levels_);
    idx.vectors_ = MatF(n, dim);
    r.read_f32(idx.vectors_.data);
    idx.links_.resize(n);
    for (int64_t node = 0; node < n; ++node) {
        idx.links_[node].resize(idx.levels_[node] + 1);
        for (int32_t l = 0; l <= idx.levels_[node]; ++l) {
            uint32_t len = r.u32();
            idx.links_[node][l].resize(len);
            r.read_u32(idx.links_[node][l]);
        }
    }
    return idx;
}

TopK brute_force_topk(const MatF& items, std::span<const float> query, int64_t k) {
    TopK out;
    const int64_t n = items.rows;
    if (k > n) {
        out.truncated = true;
        k = n;
    }
    if (k < 1) return out;
    std::vector<std::pair<float, uint32_t>> scored(n);
    for (int64_t i = 0; i < n; ++i) {
        scored[i] = {dot_f32(query.data(), items.row(i), items.cols), static_cast<uint32_t>(i)};
    }
    auto better = [](const std::pair<float, uint32_t>& a, const std::pair<float, uint32_t>& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    };
    std::partial_sort(scored.begin(), scored.begin() + k, scored.end(), better);
    out.items.reserve(k);
    out.scores.reserve(k);
    for (int64_t i = 0; i < k; ++i) {
        out.scores.push_back(scored[i].first);
        out.items.push_back(scored[i].second);
    }
    return out;
}

}  // namespace led
