#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "led/common.hpp"
#include "led/rsvd.hpp"

namespace led {

enum class TuningMode : uint8_t { Full = 0, Project = 1 };
enum class NormMode : uint8_t { OverT = 0, OverSqrtT = 1 };

// Item-embedding scorer: user vector = normalized average of item
// embeddings, score = inner product plus per-item popularity bias.
// In Project mode the trainable part is a d x d projection of frozen
// pre-trained embeddings; effective item vectors are materialized once so
// serving never multiplies by the projection.
struct LedModel {
    TuningMode mode = TuningMode::Full;
    NormMode norm = NormMode::OverT;
    MatF base;        // I x d. Full: the embeddings. Project: frozen pre-trained rows.
    MatF projection;  // d x d row-major, Project only. v_i = P * base_i.
    std::vector<float> bias;  // length I

    int64_t item_count() const { return bias.empty() ? base.rows : static_cast<int64_t>(bias.size()); }
    int64_t dim() const { return mode == TuningMode::Project ? projection.rows : base.cols; }

    // Materialized effective embeddings. Must be called after any change to
    // projection/base in Project mode; Full mode is a no-op.
    void materialize_effective();
    const MatF& effective() const;
    bool has_base() const { return !base.empty(); }

    void save(const std::string& path) const;  // LEDM
    static LedModel load(const std::string& path);

    MatF effective_cache;  // Project only
};

struct ParamCount {
    int64_t trainable = 0;
    int64_t frozen = 0;
};
ParamCount parameter_count(const LedModel& m);

// Average of effective item embeddings over the history, divided by T
// (OverT) or sqrt(T) (OverSqrtT). Empty history encodes to the zero vector.
std::vector<float> encode_user(std::span<const uint32_t> history, const LedModel& m);

// In base space (Project mode): the normalized average of *base* rows.
std::vector<float> encode_user_base(std::span<const uint32_t> history, const LedModel& m);

float score_item(std::span<const float> user, uint32_t item, const LedModel& m);

// Scores every item from a base-space user vector with one d x d transform:
// s_i = <P^T P u_base, base_i> + b_i. Project mode only.
std::vector<float> score_all_trick(std::span<const float> user_base, const LedModel& m);

// Direct per-item scoring over effective embeddings (reference path).
std::vector<float> score_all_direct(std::span<const float> user, const LedModel& m);

// Bias absorbed into an extra dimension: item row = [v_i ; b_i], query =
// [u ; 1], so top-k inner product search equals top-k score.
MatF augment_for_mips(const LedModel& m);
std::vector<float> augment_query(std::span<const float> user);

}  // namespace led
