#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "led/losses.hpp"
#include "led/model.hpp"
#include "led/timeline.hpp"

namespace led {

enum class LossKind : uint8_t { Bpr = 0, Ns = 1, CssMultinomial = 2, ExactMultinomial = 3 };
enum class InitKind : uint8_t { Random = 0, Svd = 1 };

struct TrainConfig {
    LossKind loss = LossKind::Bpr;
    int64_t negatives = 1000;        // N, shared across a user's positives
    double learning_rate = 0.001;
    int64_t batch_size = 512;
    int64_t max_steps = 50000;
    int64_t checkpoint_every = 230;
    double denoise_prob = 0.5;
    InitKind init = InitKind::Svd;
    TuningMode tuning = TuningMode::Project;
    NormMode norm = NormMode::OverT;
    int64_t dim = 600;               // embedding dim for Random init
    double input_fraction = 0.8;
    // BPR trains on a shuffled input/target split of the timeline; the
    // other losses reuse the same items on both sides unless overridden.
    std::optional<bool> split_input_target;
    uint64_t seed = 42;
    int64_t val_ndcg_k = 100;
    int64_t val_users_max = 0;       // 0 = all validation users
    bool val_mask_input = true;      // exclude input items when ranking
    std::string checkpoint_dir;      // empty = keep checkpoints in memory only

    bool split_targets() const { return split_input_target.value_or(loss == LossKind::Bpr); }
    void validate() const;
};

std::string describe(const TrainConfig& cfg);  // one-line JSON echo

struct Checkpoint {
    int64_t step = 0;
    double val_ndcg = 0.0;
    double train_loss = 0.0;
    int64_t wall_ms = 0;
};

struct TrainStats {
    uint64_t score_evals = 0;     // per-item score computations inside losses
    uint64_t score_eval_bound = 0;  // sum over visits of (T + N)
    uint64_t user_visits = 0;
    uint64_t skipped_timelines = 0;
    uint64_t trainable_params = 0;
    uint64_t frozen_params = 0;
};

struct TrainResult {
    LedModel model;  // best checkpoint by validation NDCG
    std::vector<Checkpoint> checkpoints;
    int64_t best_step = -1;
    double best_ndcg = 0.0;
    std::vector<float> loss_history;  // one entry per step
    TrainStats stats;
};

// Prepared example: denoising is applied per visit, not here.
struct TrainExample {
    std::vector<uint32_t> input;
    std::vector<uint32_t> targets;  // deduplicated positives
};

// Per-batch gradients; exposed so gradient checks can drive one batch.
struct BatchGradients {
    MatD grad_projection;               // d x d, Project mode
    std::vector<uint32_t> touched_items;  // Full mode, ascending
    MatD grad_embeddings;                 // rows aligned with touched_items
    std::vector<uint32_t> touched_bias;   // ascending
    std::vector<double> grad_bias;        // aligned with touched_bias
    double loss = 0.0;
    int64_t contributing_users = 0;
};

// Forward/backward over one batch of prepared examples with fixed
// negatives. Gradients are means over contributing users. Deterministic
// for any thread count.
BatchGradients compute_batch_gradients(const LedModel& model, std::span<const TrainExample> batch,
                                       std::span<const std::vector<uint32_t>> negatives,
                                       const TrainConfig& cfg, TrainStats* stats = nullptr);

// Keeps each item independently with probability 1-p; a non-empty input
// never denoises to empty (one uniformly chosen survivor is kept).
std::vector<uint32_t> denoise(std::span<const uint32_t> input, double p, Rng& rng);

// Mini-batch training with Adam, periodic validation-NDCG checkpoints, and
// best-checkpoint selection. `base` is required when cfg.init == Svd.
TrainResult train(const TimelineSet& train_set, const TimelineSet& validation_set,
                  const EmbeddingMatrix* base, const TrainConfig& cfg);

}  // namespace led
