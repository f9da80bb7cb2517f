#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "led/ann.hpp"
#include "led/eval.hpp"
#include "led/rsvd.hpp"
#include "led/service.hpp"
#include "led/timeline.hpp"
#include "led/trainer.hpp"

namespace led {

// One JSON document drives every stage; a single root seed is expanded per
// stage so the entire pipeline reproduces from it.
struct PipelineConfig {
    std::string data_path;
    std::string data_format = "jsonl";  // "jsonl" | "ml20m"
    std::string workdir;

    double min_rating = 4.0;
    int64_t min_events = 5;
    SplitSpec split;

    double pmi_alpha = 0.75;
    uint32_t pmi_min_count = 1;
    uint32_t max_pairs_per_timeline = 10000;

    RsvdConfig rsvd;
    TrainConfig train;
    HnswConfig ann;
    EvalConfig eval;
    ServiceConfig serve;
    std::vector<int64_t> sweep_negatives = {10, 100, 1000};

    uint64_t seed = 42;

    static PipelineConfig from_json_text(const std::string& text);
    static PipelineConfig from_file(const std::string& path);
    std::string to_json_text() const;
    void validate() const;

    uint64_t stage_seed(const std::string& stage) const { return derive_seed(seed, stage); }
};

// Dotted-path override, e.g. apply_override(doc, "train.learning_rate=0.01").
std::string apply_override(const std::string& json_text, const std::string& assignment);

enum class Stage { Ingest, Split, Pmi, Rsvd, Train, Index, Eval, Sweep, Serve, Pipeline };

Stage parse_stage(const std::string& name);
const char* stage_name(Stage s);

struct StageOptions {
    bool force = false;  // rerun even when inputs and config are unchanged
};

// Runs one stage (or the whole offline pipeline). Artifacts land under
// <workdir>/<stage>/ together with a manifest recording input hashes and
// the config echo; unchanged stages are skipped.
int run_stage(Stage stage, const PipelineConfig& cfg, const StageOptions& opts = {});

}  // namespace led
