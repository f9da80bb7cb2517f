#include "led/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "led/adam.hpp"
#include "led/eval.hpp"
#include "led/io.hpp"

namespace led {

namespace {

using EMatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

const char* loss_name(LossKind k) {
    switch (k) {
        case LossKind::Bpr: return "bpr";
        case LossKind::Ns: return "ns";
        case LossKind::CssMultinomial: return "css";
        case LossKind::ExactMultinomial: return "multinomial";
    }
    return "?";
}

}  // namespace

void TrainConfig::validate() const {
    auto bad = [](const std::string& why) { throw std::runtime_error("train config: " + why); };
    if (negatives < 1 && loss != LossKind::ExactMultinomial) bad("negatives must be >= 1");
    if (learning_rate <= 0) bad("learning_rate must be > 0");
    if (batch_size < 1) bad("batch_size must be >= 1");
    if (max_steps < 1) bad("max_steps must be >= 1");
    if (checkpoint_every < 1) bad("checkpoint_every must be >= 1");
    if (denoise_prob < 0.0 || denoise_prob >= 1.0) bad("denoise_prob must be in [0,1)");
    if (dim < 1) bad("dim must be >= 1");
    if (input_fraction <= 0.0 || input_fraction >= 1.0) bad("input_fraction must be in (0,1)");
    if (val_ndcg_k < 1) bad("val_ndcg_k must be >= 1");
}

std::string describe(const TrainConfig& cfg) {
    nlohmann::json j{{"loss", loss_name(cfg.loss)},
                     {"negatives", cfg.negatives},
                     {"learning_rate", cfg.learning_rate},
                     {"batch_size", cfg.batch_size},
                     {"max_steps", cfg.max_steps},
                     {"checkpoint_every", cfg.checkpoint_every},
                     {"denoise_prob", cfg.denoise_prob},
                     {"init", cfg.init == InitKind::Svd ? "svd" : "random"},
                     {"tuning", cfg.tuning == TuningMode::Project ? "project" : "full"},
                     {"norm", cfg.norm == NormMode::OverT ? "over_t" : "over_sqrt_t"},
                     {"dim", cfg.dim},
                     {"input_fraction", cfg.input_fraction},
                     {"split_input_target", cfg.split_targets()},
                     {"seed", cfg.seed}};
    return j.dump();
}

std::vector<uint32_t> denoise(std::span<const uint32_t> input, double p, Rng& rng) {
    std::vector<uint32_t> out;
    out.reserve(input.size());
    for (uint32_t item : input) {
        if (uniform01(rng) >= p) out.push_back(item);
    }
    if (out.empty() && !input.empty()) {
        std::uniform_int_distribution<size_t> pick(0, input.size() - 1);
        out.push_back(input[pick(rng)]);
    }
    return out;
}

namespace {

struct UserWork {
    bool valid = false;
    std::vector<uint32_t> input;
    const TrainExample* ex = nullptr;
    const std::vector<uint32_t>* negs = nullptr;
    std::vector<double> h;   // base-space user average (Project) / embedding average (Full)
    std::vector<double> ph;  // Project: P h (the effective user vector)
    std::vector<double> pm;  // Project: P m
    std::vector<double> m;   // sum_i g_i v_i over scored items
    std::vector<uint32_t> scored_items;
    std::vector<double> scored_grads;
    double loss = 0.0;
};

// Per-user forward/backward for the sampled losses; exact multinomial
// scores the whole catalog.
void user_forward_backward(const LedModel& model, const TrainConfig& cfg, UserWork& w,
                           uint64_t* score_evals) {
    const bool project = model.mode == TuningMode::Project;
    const MatF& table = model.base;  // Project: frozen base; Full: the embeddings
    const int64_t d = table.cols;
    const int64_t catalog = table.rows;

    // Normalized history average in the table's space.
    w.h.assign(d, 0.0);
    for (uint32_t item : w.input) {
        const float* row = table.row(item);
        for (int64_t c = 0; c < d; ++c) w.h[c] += row[c];
    }
    const double t_len = static_cast<double>(w.input.size());
    const double inv = model.norm == NormMode::OverT ? 1.0 / t_len : 1.0 / std::sqrt(t_len);
    for (int64_t c = 0; c < d; ++c) w.h[c] *= inv;

    // Scoring vector: w_score = P^T P h (Project) or h itself (Full).
    std::vector<double> w_score;
    if (project) {
        const MatF& p = model.projection;
        w.ph.assign(d, 0.0);
        for (int64_t r = 0; r < d; ++r) {
            const float* prow = p.row(r);
            double s = 0.0;
            for (int64_t c = 0; c < d; ++c) s += static_cast<double>(prow[c]) * w.h[c];
            w.ph[r] = s;
        }
        w_score.assign(d, 0.0);
        for (int64_t r = 0; r < d; ++r) {
            const float* prow = p.row(r);
            const double tr = w.ph[r];
            for (int64_t c = 0; c < d; ++c) w_score[c] += tr * prow[c];
        }
    } else {
        w_score = w.h;
    }

    auto score_of = [&](uint32_t item) {
        const float* row = table.row(item);
        double s = 0.0;
        for (int64_t c = 0; c < d; ++c) s += w_score[c] * row[c];
        return s + model.bias[item];
    };

    const auto& positives = w.ex->targets;
    w.scored_items.clear();
    w.scored_grads.clear();
    w.loss = 0.0;

    if (cfg.loss == LossKind::ExactMultinomial) {
        std::vector<double> scores(catalog);
        for (int64_t i = 0; i < catalog; ++i) scores[i] = score_of(static_cast<uint32_t>(i));
        if (score_evals) *score_evals += static_cast<uint64_t>(catalog);
        // Mean over positives shares one softmax.
        double mx = *std::max_element(scores.begin(), scores.end());
        double sum = 0.0;
        for (double s : scores) sum += std::exp(s - mx);
        const double log_z = mx + std::log(sum);
        const double inv_p = 1.0 / static_cast<double>(positives.size());
        double mean_pos = 0.0;
        for (uint32_t p : positives) mean_pos += scores[p];
        mean_pos *= inv_p;
        w.loss = log_z - mean_pos;
        w.scored_items.resize(catalog);
        std::iota(w.scored_items.begin(), w.scored_items.end(), 0u);
        w.scored_grads.resize(catalog);
        for (int64_t i = 0; i < catalog; ++i) {
            w.scored_grads[i] = std::exp(scores[i] - log_z);
        }
        for (uint32_t p : positives) w.scored_grads[p] -= inv_p;
    } else {
        const auto& negs = *w.negs;
        std::vector<double> neg_scores(negs.size());
        for (size_t n = 0; n < negs.size(); ++n) neg_scores[n] = score_of(negs[n]);
        if (score_evals) *score_evals += negs.size() + positives.size();

        const double inv_p = 1.0 / static_cast<double>(positives.size());
        std::vector<double> d_negs_total(negs.size(), 0.0);
        std::vector<double> d_negs(negs.size());
        w.scored_items.reserve(positives.size() + negs.size());
        for (uint32_t p : positives) {
            const double s_pos = score_of(p);
            double d_pos = 0.0;
            double value = 0.0;
            switch (cfg.loss) {
                case LossKind::Bpr:
                    value = bpr_into(s_pos, neg_scores, &d_pos, d_negs);
                    break;
                case LossKind::Ns:
                    value = negative_sampling_into(s_pos, neg_scores, &d_pos, d_negs);
                    break;
                case LossKind::CssMultinomial:
                    value = css_multinomial_into(s_pos, neg_scores, catalog, &d_pos, d_negs);
                    break;
                default:
                    break;
            }
            w.loss += value * inv_p;
            w.scored_items.push_back(p);
            w.scored_grads.push_back(d_pos * inv_p);
            for (size_t n = 0; n < negs.size(); ++n) d_negs_total[n] += d_negs[n] * inv_p;
        }
        for (size_t n = 0; n < negs.size(); ++n) {
            w.scored_items.push_back(negs[n]);
            w.scored_grads.push_back(d_negs_total[n]);
        }
    }

    // m = sum_i g_i v_i over scored items (for the projection / history grads).
    w.m.assign(d, 0.0);
    for (size_t s = 0; s < w.scored_items.size(); ++s) {
        const double g = w.scored_grads[s];
        if (g == 0.0) continue;
        const float* row = table.row(w.scored_items[s]);
        for (int64_t c = 0; c < d; ++c) w.m[c] += g * row[c];
    }
    if (project) {
        const MatF& p = model.projection;
        w.pm.assign(d, 0.0);
        for (int64_t r = 0; r < d; ++r) {
            const float* prow = p.row(r);
            double s = 0.0;
            for (int64_t c = 0; c < d; ++c) s += static_cast<double>(prow[c]) * w.m[c];
            w.pm[r] = s;
        }
    }
    w.valid = true;
}

}  // namespace

BatchGradients compute_batch_gradients(const LedModel& model, std::span<const TrainExample> batch,
                                       std::span<const std::vector<uint32_t>> negatives,
                                       const TrainConfig& cfg, TrainStats* stats) {
    const bool project = model.mode == TuningMode::Project;
    const int64_t d = model.base.cols;
    const int64_t catalog = model.base.rows;
    const int64_t b = static_cast<int64_t>(batch.size());

    std::vector<UserWork> work(b);
    std::vector<uint64_t> evals(b, 0);
#pragma omp parallel for schedule(dynamic, 1)
    for (int64_t i = 0; i < b; ++i) {
        UserWork& w = work[i];
        w.ex = &batch[i];
        if (w.ex->input.empty() || w.ex->targets.empty()) continue;
        w.input = w.ex->input;
        if (cfg.loss != LossKind::ExactMultinomial) w.negs = &negatives[i];
        user_forward_backward(model, cfg, w, &evals[i]);
    }

    BatchGradients out;
    int64_t contributing = 0;
    for (const UserWork& w : work) {
        if (w.valid) ++contributing;
    }
    out.contributing_users = contributing;
    if (contributing == 0) return out;
    const double inv_b = 1.0 / static_cast<double>(contributing);

    if (stats) {
        for (int64_t i = 0; i < b; ++i) {
            if (!work[i].valid) continue;
            stats->score_evals += evals[i];
            stats->user_visits += 1;
            stats->score_eval_bound += work[i].input.size() + work[i].ex->targets.size() +
                                       (cfg.loss == LossKind::ExactMultinomial
                                            ? static_cast<uint64_t>(catalog)
                                            : static_cast<uint64_t>(cfg.negatives));
        }
    }

    for (const UserWork& w : work) {
        if (w.valid) out.loss += w.loss * inv_b;
    }

    // Bias gradients, merged serially in user order.
    {
        std::vector<double> dense(catalog, 0.0);
        std::vector<uint8_t> touched(catalog, 0);
        for (const UserWork& w : work) {
            if (!w.valid) continue;
            for (size_t s = 0; s < w.scored_items.size(); ++s) {
                const uint32_t item = w.scored_items[s];
                dense[item] += w.scored_grads[s] * inv_b;
                touched[item] = 1;
            }
        }
        for (int64_t i = 0; i < catalog; ++i) {
            if (touched[i]) {
                out.touched_bias.push_back(static_cast<uint32_t>(i));
                out.grad_bias.push_back(dense[i]);
            }
        }
    }

    if (project) {
        // grad_P[r][c] = sum_u pm_u[r] h_u[c] + ph_u[r] m_u[c]; row-parallel
        // accumulation in user order keeps results thread-count independent.
        out.grad_projection = MatD(d, d);
#pragma omp parallel for schedule(static)
        for (int64_t r = 0; r < d; ++r) {
            double* grow = out.grad_projection.row(r);
            for (const UserWork& w : work) {
                if (!w.valid) continue;
                const double a = w.pm[r] * inv_b;
                const double c2 = w.ph[r] * inv_b;
                for (int64_t c = 0; c < d; ++c) grow[c] += a * w.h[c] + c2 * w.m[c];
            }
        }
    } else {
        // Embedding gradients: scored items get g_i * u, history items get
        // the normalization weight times m. Sharded by item id so each row
        // accumulates in user order regardless of thread count.
        std::vector<uint8_t> touched(catalog, 0);
        for (const UserWork& w : work) {
            if (!w.valid) continue;
            for (uint32_t item : w.scored_items) touched[item] = 1;
            for (uint32_t item : w.input) touched[item] = 1;
        }
        std::vector<int64_t> slot(catalog, -1);
        for (int64_t i = 0; i < catalog; ++i) {
            if (touched[i]) {
                slot[i] = static_cast<int64_t>(out.touched_items.size());
                out.touched_items.push_back(static_cast<uint32_t>(i));
            }
        }
        out.grad_embeddings = MatD(static_cast<int64_t>(out.touched_items.size()), d);
        const int64_t shards = std::max<int64_t>(1, std::min<int64_t>(catalog, 64));
#pragma omp parallel for schedule(static, 1)
        for (int64_t shard = 0; shard < shards; ++shard) {
            for (const UserWork& w : work) {
                if (!w.valid) continue;
                const double t_len = static_cast<double>(w.input.size());
                const double hist_w =
                    (model.norm == NormMode::OverT ? 1.0 / t_len : 1.0 / std::sqrt(t_len)) * inv_b;
                for (size_t s = 0; s < w.scored_items.size(); ++s) {
                    const uint32_t item = w.scored_items[s];
                    if (static_cast<int64_t>(item % shards) != shard) continue;
                    const double g = w.scored_grads[s] * inv_b;
                    double* dst = out.grad_embeddings.row(slot[item]);
                    for (int64_t c = 0; c < d; ++c) dst[c] += g * w.h[c];
                }
                for (uint32_t item : w.input) {
                    if (static_cast<int64_t>(item % shards) != shard) continue;
                    double* dst = out.grad_embeddings.row(slot[item]);
                    for (int64_t c = 0; c < d; ++c) dst[c] += hist_w * w.m[c];
                }
            }
        }
    }
    return out;
}

namespace {

struct ValExample {
    std::vector<uint32_t> input;
    std::vector<uint32_t> targets;
};

std::vector<TrainExample> prepare_train_examples(const TimelineSet& ts, const TrainConfig& cfg,
                                                 uint64_t* skipped) {
    const bool clicks = ts.has_clicks();
    std::vector<TrainExample> out;
    SplitCounters counters;
    for (const Timeline& t : ts.timelines) {
        TrainExample ex;
        if (cfg.split_targets()) {
            auto split = split_timeline(t, cfg.input_fraction,
                                        derive_seed(cfg.seed, "train-split", fnv1a64(t.user)),
                                        /*shuffle=*/true, clicks, &counters);
            if (!split) continue;
            ex.input = std::move(split->input);
            std::unordered_set<uint32_t> targets(split->target.begin(), split->target.end());
            ex.targets.assign(targets.begin(), targets.end());
        } else {
            // Same items on both sides: all events as input, clicks (or
            // everything for click-free data) as targets.
            std::unordered_set<uint32_t> targets;
            for (const Event& e : t.events) {
                ex.input.push_back(e.item);
                if (!clicks || e.kind == EventKind::Click) targets.insert(e.item);
            }
            if (ex.input.empty() || targets.empty()) {
                counters.empty_target++;
                continue;
            }
            ex.targets.assign(targets.begin(), targets.end());
        }
        std::sort(ex.targets.begin(), ex.targets.end());
        out.push_back(std::move(ex));
    }
    if (skipped) *skipped = counters.too_short + counters.empty_target;
    return out;
}

std::vector<ValExample> prepare_val_examples(const TimelineSet& ts, const TrainConfig& cfg) {
    const bool clicks = ts.has_clicks();
    std::vector<ValExample> out;
    SplitCounters counters;
    for (const Timeline& t : ts.timelines) {
        auto split = split_timeline(t, cfg.input_fraction,
                                    derive_seed(cfg.seed, "val-split", fnv1a64(t.user)),
                                    /*shuffle=*/true, clicks, &counters);
        if (!split) continue;
        std::unordered_set<uint32_t> targets(split->target.begin(), split->target.end());
        if (cfg.val_mask_input) {
            for (uint32_t it : split->input) targets.erase(it);
        }
        if (targets.empty()) continue;
        ValExample ex;
        ex.input = std::move(split->input);
        ex.targets.assign(targets.begin(), targets.end());
        std::sort(ex.targets.begin(), ex.targets.end());
        out.push_back(std::move(ex));
        if (cfg.val_users_max > 0 && static_cast<int64_t>(out.size()) >= cfg.val_users_max) break;
    }
    return out;
}

double validation_ndcg(const LedModel& model, std::span<const ValExample> examples,
                       const TrainConfig& cfg) {
    if (examples.empty()) return 0.0;
    const MatF& table = model.base;
    const int64_t d = table.cols;
    const int64_t catalog = table.rows;
    Eigen::Map<const EMatF> b_map(table.data.data(), catalog, d);

    // Scoring transform: W = P^T P once per call (Project), identity (Full).
    EMatF w_mat;
    const bool project = model.mode == TuningMode::Project;
    if (project) {
        Eigen::Map<const EMatF> p_map(model.projection.data.data(), d, d);
        w_mat = p_map.transpose() * p_map;
    }

    std::vector<double> ndcgs(examples.size(), 0.0);
#pragma omp parallel for schedule(dynamic, 4)
    for (int64_t i = 0; i < static_cast<int64_t>(examples.size()); ++i) {
        const ValExample& ex = examples[i];
        Eigen::VectorXf h = Eigen::VectorXf::Zero(d);
        for (uint32_t item : ex.input) {
            h += Eigen::Map<const Eigen::VectorXf>(table.row(item), d);
        }
        const double t_len = static_cast<double>(ex.input.size());
        h *= static_cast<float>(model.norm == NormMode::OverT ? 1.0 / t_len
                                                              : 1.0 / std::sqrt(t_len));
        Eigen::VectorXf w = project ? Eigen::VectorXf(w_mat * h) : h;
        Eigen::VectorXf scores = b_map * w;
        for (int64_t it = 0; it < catalog; ++it) scores[it] += model.bias[it];
        if (cfg.val_mask_input) {
            for (uint32_t item : ex.input) scores[item] = -std::numeric_limits<float>::infinity();
        }
        TopK top = topk_from_scores(std::span<const float>(scores.data(), catalog), cfg.val_ndcg_k);
        std::unordered_set<uint32_t> targets(ex.targets.begin(), ex.targets.end());
        ndcgs[i] = ndcg_at_k(top, targets, cfg.val_ndcg_k);
    }
    double sum = 0.0;
    for (double v : ndcgs) sum += v;
    return sum / static_cast<double>(examples.size());
}

struct Snapshot {
    MatF projection;
    MatF embeddings;
    std::vector<float> bias;
};

LedModel assemble_model(const TrainConfig& cfg, const MatF& frozen_base, const Snapshot& snap,
                        NormMode norm) {
    LedModel m;
    m.mode = cfg.tuning;
    m.norm = norm;
    m.bias = snap.bias;
    if (cfg.tuning == TuningMode::Project) {
        m.base = frozen_base;
        m.projection = snap.projection;
    } else {
        m.base = snap.embeddings;
    }
    m.materialize_effective();
    return m;
}

}  // namespace

TrainResult train(const TimelineSet& train_set, const TimelineSet& validation_set,
                  const EmbeddingMatrix* base, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.init == InitKind::Svd) {
        if (base == nullptr || base->values.empty()) {
            throw std::runtime_error("train: init=svd requires pre-trained base embeddings");
        }
    }
    const int64_t d = cfg.init == InitKind::Svd ? base->dim() : cfg.dim;
    const int64_t catalog = static_cast<int64_t>(train_set.item_count());
    if (cfg.init == InitKind::Svd && base->item_count() != catalog) {
        throw std::runtime_error("train: base embedding rows do not match the item count");
    }
    if (cfg.loss != LossKind::ExactMultinomial && cfg.negatives >= catalog) {
        throw std::runtime_error("train: negatives must be < item count");
    }

    TrainResult res;
    TrainStats& stats = res.stats;

    std::vector<TrainExample> pool = prepare_train_examples(train_set, cfg, &stats.skipped_timelines);
    if (pool.empty()) throw std::runtime_error("train: no trainable timelines after preparation");
    std::vector<ValExample> val_examples = prepare_val_examples(validation_set, cfg);

    // Parameter state.
    LedModel model;
    model.mode = cfg.tuning;
    model.norm = cfg.norm;
    model.bias.assign(catalog, 0.0f);
    if (cfg.init == InitKind::Svd) {
        model.base = base->values;
    } else {
        model.base = MatF(catalog, d);
        Rng rng(derive_seed(cfg.seed, "init-emb"));
        const float scale = 1.0f / std::sqrt(static_cast<float>(d));
        for (float& v : model.base.data) {
            v = static_cast<float>((uniform01(rng) * 2.0 - 1.0) * scale);
        }
    }
    if (cfg.tuning == TuningMode::Project) {
        model.projection = MatF(d, d);
        Rng rng(derive_seed(cfg.seed, "init-proj"));
        std::normal_distribution<double> noise(0.0, 0.01);
        for (int64_t r = 0; r < d; ++r) {
            for (int64_t c = 0; c < d; ++c) {
                model.projection.at(r, c) = static_cast<float>((r == c ? 1.0 : 0.0) + noise(rng));
            }
        }
    }
    {
        ParamCount pc = parameter_count(model);
        stats.trainable_params = static_cast<uint64_t>(pc.trainable);
        stats.frozen_params = static_cast<uint64_t>(pc.frozen);
    }

    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.learning_rate;
    AdamDense opt_proj(cfg.tuning == TuningMode::Project ? static_cast<size_t>(d * d) : 0, adam_cfg);
    AdamLazyRows opt_bias(catalog, 1, adam_cfg);
    AdamLazyRows opt_emb(cfg.tuning == TuningMode::Full ? catalog : 0,
                         cfg.tuning == TuningMode::Full ? d : 1, adam_cfg);

    // Checkpoint bookkeeping.
    Snapshot best;
    const bool write_checkpoints = !cfg.checkpoint_dir.empty();
    std::ofstream log_stream;
    if (write_checkpoints) {
        std::filesystem::create_directories(cfg.checkpoint_dir);
        log_stream.open(cfg.checkpoint_dir + "/train_log.jsonl", std::ios::trunc);
    }

    std::vector<size_t> order(pool.size());
    std::iota(order.begin(), order.end(), size_t{0});
    uint64_t epoch = 0;
    {
        Rng rng(derive_seed(cfg.seed, "epoch", epoch));
        std::shuffle(order.begin(), order.end(), rng);
    }
    size_t cursor = 0;

    const auto t_start = std::chrono::steady_clock::now();
    auto wall_ms = [&] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - t_start)
            .count();
    };

    std::vector<TrainExample> batch(cfg.batch_size);
    std::vector<std::vector<uint32_t>> batch_negs(cfg.batch_size);
    res.loss_history.reserve(cfg.max_steps);

    auto run_checkpoint = [&](int64_t step, double recent_loss) {
        Checkpoint ck;
        ck.step = step;
        ck.train_loss = recent_loss;
        ck.val_ndcg = validation_ndcg(model, val_examples, cfg);
        ck.wall_ms = wall_ms();
        res.checkpoints.push_back(ck);
        const bool is_best = res.best_step < 0 || ck.val_ndcg > res.best_ndcg;
        if (is_best) {
            res.best_step = step;
            res.best_ndcg = ck.val_ndcg;
            best.bias = model.bias;
            if (cfg.tuning == TuningMode::Project) {
                best.projection = model.projection;
            } else {
                best.embeddings = model.base;
            }
        }
        if (write_checkpoints) {
            const std::string dir = cfg.checkpoint_dir + "/step-" + std::to_string(step);
            std::filesystem::create_directories(dir);
            Snapshot snap;
            snap.bias = model.bias;
            if (cfg.tuning == TuningMode::Project) {
                snap.projection = model.projection;
            } else {
                snap.embeddings = model.base;
            }
            LedModel snap_model = assemble_model(cfg, model.base, snap, cfg.norm);
            snap_model.save(dir + "/model");
            nlohmann::json j{{"step", step},
                             {"val_ndcg", ck.val_ndcg},
                             {"train_loss", ck.train_loss},
                             {"wall_ms", ck.wall_ms}};
            write_text_file(dir + "/metrics.json", j.dump(2));
        }
    };

    double loss_window = 0.0;
    int64_t loss_window_n = 0;
    for (int64_t step = 1; step <= cfg.max_steps; ++step) {
        const int64_t b = std::min<int64_t>(cfg.batch_size, static_cast<int64_t>(pool.size()));
        for (int64_t i = 0; i < b; ++i) {
            if (cursor >= order.size()) {
                ++epoch;
                Rng rng(derive_seed(cfg.seed, "epoch", epoch));
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const TrainExample& src = pool[order[cursor++]];
            Rng dn_rng(derive_seed(cfg.seed, "denoise", static_cast<uint64_t>(step) * 1000003 + i));
            batch[i].input = denoise(src.input, cfg.denoise_prob, dn_rng);
            batch[i].targets = src.targets;
            if (cfg.loss != LossKind::ExactMultinomial) {
                Rng neg_rng(
                    derive_seed(cfg.seed, "negatives", static_cast<uint64_t>(step) * 1000003 + i));
                std::unordered_set<uint32_t> exclude(src.targets.begin(), src.targets.end());
                batch_negs[i] = sample_negatives(catalog, cfg.negatives, exclude, neg_rng);
            }
        }
        BatchGradients grads = compute_batch_gradients(
            model, std::span<const TrainExample>(batch.data(), b),
            std::span<const std::vector<uint32_t>>(batch_negs.data(), b), cfg, &stats);
        if (!std::isfinite(grads.loss)) {
            throw std::runtime_error("train: diverged (non-finite loss) at step " +
                                     std::to_string(step) + "; config " + describe(cfg));
        }
        res.loss_history.push_back(static_cast<float>(grads.loss));
        loss_window += grads.loss;
        ++loss_window_n;

        if (cfg.tuning == TuningMode::Project) {
            opt_proj.step(model.projection.data, grads.grad_projection.data);
        } else if (!grads.touched_items.empty()) {
            opt_emb.tick();
            opt_emb.step_rows(model.base, grads.touched_items, grads.grad_embeddings);
        }
        if (!grads.touched_bias.empty()) {
            opt_bias.tick();
            opt_bias.step_scalars(model.bias, grads.touched_bias, grads.grad_bias);
        }

        if (log_stream.is_open()) {
            log_stream << "{\"step\":" << step << ",\"loss\":" << grads.loss
                       << ",\"lr\":" << cfg.learning_rate << ",\"wall_ms\":" << wall_ms() << "}\n";
        }
        if (step % cfg.checkpoint_every == 0 || step == cfg.max_steps) {
            run_checkpoint(step, loss_window / std::max<int64_t>(1, loss_window_n));
            loss_window = 0.0;
            loss_window_n = 0;
        }
    }

    res.model = assemble_model(cfg, model.base, best, cfg.norm);
    return res;
}

}  // namespace led
