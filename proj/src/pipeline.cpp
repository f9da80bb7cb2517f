#include "led/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "led/ingest.hpp"
#include "led/io.hpp"
#include "led/pmi.hpp"

namespace led {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void log_line(const char* level, const std::string& stage, const std::string& msg,
              const json& extra = json::object()) {
    json j{{"ts_ms", now_ms()}, {"level", level}, {"stage", stage}, {"msg", msg}};
    for (auto& [k, v] : extra.items()) j[k] = v;
    std::fprintf(stderr, "%s\n", j.dump().c_str());
}

[[noreturn]] void config_error(const std::string& path, const std::string& why) {
    throw std::runtime_error("config: " + path + ": " + why);
}

void check_known_keys(const json& j, const std::string& path,
                      const std::vector<std::string>& known) {
    if (!j.is_object()) config_error(path, "expected an object");
    for (const auto& [k, v] : j.items()) {
        if (std::find(known.begin(), known.end(), k) == known.end()) {
            config_error(path.empty() ? k : path + "." + k, "unknown field");
        }
    }
}

template <typename T>
T get_field(const json& j, const std::string& path, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        config_error(path + "." + key, "wrong type");
    }
}

LossKind parse_loss(const std::string& s, const std::string& path) {
    if (s == "bpr") return LossKind::Bpr;
    if (s == "ns") return LossKind::Ns;
    if (s == "css") return LossKind::CssMultinomial;
    if (s == "multinomial") return LossKind::ExactMultinomial;
    config_error(path, "expected one of bpr|ns|css|multinomial");
}

}  // namespace

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error("config: invalid JSON");
    check_known_keys(j, "", {"paths", "data", "pmi", "rsvd", "train", "ann", "eval", "serve",
                             "sweep", "seed"});
    PipelineConfig c;
    c.seed = get_field<uint64_t>(j, "", "seed", c.seed);

    if (j.contains("paths")) {
        const json& p = j["paths"];
        check_known_keys(p, "paths", {"data", "workdir", "format"});
        c.data_path = get_field<std::string>(p, "paths", "data", c.data_path);
        c.workdir = get_field<std::string>(p, "paths", "workdir", c.workdir);
        c.data_format = get_field<std::string>(p, "paths", "format", c.data_format);
        if (c.data_format != "jsonl" && c.data_format != "ml20m") {
            config_error("paths.format", "expected jsonl|ml20m");
        }
    }
    if (j.contains("data")) {
        const json& d = j["data"];
        check_known_keys(d, "data", {"min_rating", "min_events", "train_frac", "val_frac",
                                     "test_frac", "input_fraction"});
        c.min_rating = get_field<double>(d, "data", "min_rating", c.min_rating);
        c.min_events = get_field<int64_t>(d, "data", "min_events", c.min_events);
        c.split.train_frac = get_field<double>(d, "data", "train_frac", c.split.train_frac);
        c.split.val_frac = get_field<double>(d, "data", "val_frac", c.split.val_frac);
        c.split.test_frac = get_field<double>(d, "data", "test_frac", c.split.test_frac);
        c.split.input_fraction = get_field<double>(d, "data", "input_fraction", c.split.input_fraction);
    }
    if (j.contains("pmi")) {
        const json& p = j["pmi"];
        check_known_keys(p, "pmi", {"alpha", "min_count", "max_pairs_per_timeline"});
        c.pmi_alpha = get_field<double>(p, "pmi", "alpha", c.pmi_alpha);
        c.pmi_min_count = get_field<uint32_t>(p, "pmi", "min_count", c.pmi_min_count);
        c.max_pairs_per_timeline =
            get_field<uint32_t>(p, "pmi", "max_pairs_per_timeline", c.max_pairs_per_timeline);
    }
    if (j.contains("rsvd")) {
        const json& r = j["rsvd"];
        check_known_keys(r, "rsvd", {"dim", "oversample", "power_iters", "spectrum_exponent"});
        c.rsvd.rank = get_field<int64_t>(r, "rsvd", "dim", c.rsvd.rank);
        c.rsvd.oversample = get_field<int64_t>(r, "rsvd", "oversample", c.rsvd.oversample);
        c.rsvd.power_iters = get_field<int64_t>(r, "rsvd", "power_iters", c.rsvd.power_iters);
        c.rsvd.spectrum_exponent =
            get_field<double>(r, "rsvd", "spectrum_exponent", c.rsvd.spectrum_exponent);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        check_known_keys(t, "train",
                         {"loss", "negatives", "learning_rate", "batch_size", "max_steps",
                          "checkpoint_every", "denoise_prob", "init", "tuning", "norm", "dim",
                          "val_ndcg_k", "val_users_max", "val_mask_input", "split_input_target"});
        c.train.loss = parse_loss(get_field<std::string>(t, "train", "loss", "bpr"), "train.loss");
        c.train.negatives = get_field<int64_t>(t, "train", "negatives", c.train.negatives);
        c.train.learning_rate = get_field<double>(t, "train", "learning_rate", c.train.learning_rate);
        c.train.batch_size = get_field<int64_t>(t, "train", "batch_size", c.train.batch_size);
        c.train.max_steps = get_field<int64_t>(t, "train", "max_steps", c.train.max_steps);
        c.train.checkpoint_every =
            get_field<int64_t>(t, "train", "checkpoint_every", c.train.checkpoint_every);
        c.train.denoise_prob = get_field<double>(t, "train", "denoise_prob", c.train.denoise_prob);
        const std::string init = get_field<std::string>(t, "train", "init", "svd");
        if (init == "svd") {
            c.train.init = InitKind::Svd;
        } else if (init == "random") {
            c.train.init = InitKind::Random;
        } else {
            config_error("train.init", "expected svd|random");
        }
        const std::string tuning = get_field<std::string>(t, "train", "tuning", "project");
        if (tuning == "project") {
            c.train.tuning = TuningMode::Project;
        } else if (tuning == "full") {
            c.train.tuning = TuningMode::Full;
        } else {
            config_error("train.tuning", "expected project|full");
        }
        const std::string norm = get_field<std::string>(t, "train", "norm", "over_t");
        if (norm == "over_t") {
            c.train.norm = NormMode::OverT;
        } else if (norm == "over_sqrt_t") {
            c.train.norm = NormMode::OverSqrtT;
        } else {
            config_error("train.norm", "expected over_t|over_sqrt_t");
        }
        c.train.dim = get_field<int64_t>(t, "train", "dim", c.train.dim);
        c.train.val_ndcg_k = get_field<int64_t>(t, "train", "val_ndcg_k", c.train.val_ndcg_k);
        c.train.val_users_max = get_field<int64_t>(t, "train", "val_users_max", c.train.val_users_max);
        c.train.val_mask_input = get_field<bool>(t, "train", "val_mask_input", c.train.val_mask_input);
        if (t.contains("split_input_target")) {
            c.train.split_input_target = get_field<bool>(t, "train", "split_input_target", true);
        }
    }
    if (j.contains("ann")) {
        const json& a = j["ann"];
        check_known_keys(a, "ann", {"M", "ef_construction", "ef_search"});
        c.ann.M = get_field<int64_t>(a, "ann", "M", c.ann.M);
        c.ann.ef_construction = get_field<int64_t>(a, "ann", "ef_construction", c.ann.ef_construction);
        c.ann.ef_search = get_field<int64_t>(a, "ann", "ef_search", c.ann.ef_search);
    }
    if (j.contains("eval")) {
        const json& e = j["eval"];
        check_known_keys(e, "eval", {"recall_ks", "ndcg_k", "banner_size", "mask_input",
                                     "normalized_recall", "use_ann", "ef_search"});
        c.eval.recall_ks = get_field<std::vector<int64_t>>(e, "eval", "recall_ks", c.eval.recall_ks);
        c.eval.ndcg_k = get_field<int64_t>(e, "eval", "ndcg_k", c.eval.ndcg_k);
        c.eval.banner_size = get_field<int64_t>(e, "eval", "banner_size", c.eval.banner_size);
        c.eval.mask_input = get_field<bool>(e, "eval", "mask_input", c.eval.mask_input);
        c.eval.normalized_recall =
            get_field<bool>(e, "eval", "normalized_recall", c.eval.normalized_recall);
        c.eval.use_ann = get_field<bool>(e, "eval", "use_ann", c.eval.use_ann);
        c.eval.ef_search = get_field<int64_t>(e, "eval", "ef_search", c.eval.ef_search);
    }
    if (j.contains("serve")) {
        const json& s = j["serve"];
        check_known_keys(s, "serve", {"port", "max_ef", "threads"});
        c.serve.port = get_field<int>(s, "serve", "port", c.serve.port);
        c.serve.max_ef = get_field<int64_t>(s, "serve", "max_ef", c.serve.max_ef);
        c.serve.threads = get_field<int>(s, "serve", "threads", c.serve.threads);
    }
    if (j.contains("sweep")) {
        const json& s = j["sweep"];
        check_known_keys(s, "sweep", {"negatives"});
        c.sweep_negatives =
            get_field<std::vector<int64_t>>(s, "sweep", "negatives", c.sweep_negatives);
    }

    // One input-fraction knob feeds timeline splitting everywhere.
    c.train.input_fraction = c.split.input_fraction;
    c.eval.input_fraction = c.split.input_fraction;
    return c;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
    return from_json_text(read_text_file(path));
}

std::string PipelineConfig::to_json_text() const {
    const char* loss = "bpr";
    switch (train.loss) {
        case LossKind::Bpr: loss = "bpr"; break;
        case LossKind::Ns: loss = "ns"; break;
        case LossKind::CssMultinomial: loss = "css"; break;
        case LossKind::ExactMultinomial: loss = "multinomial"; break;
    }
    json j;
    j["paths"] = {{"data", data_path}, {"workdir", workdir}, {"format", data_format}};
    j["data"] = {{"min_rating", min_rating},       {"min_events", min_events},
                 {"train_frac", split.train_frac}, {"val_frac", split.val_frac},
                 {"test_frac", split.test_frac},   {"input_fraction", split.input_fraction}};
    j["pmi"] = {{"alpha", pmi_alpha},
                {"min_count", pmi_min_count},
                {"max_pairs_per_timeline", max_pairs_per_timeline}};
    j["rsvd"] = {{"dim", rsvd.rank},
                 {"oversample", rsvd.oversample},
                 {"power_iters", rsvd.power_iters},
                 {"spectrum_exponent", rsvd.spectrum_exponent}};
    j["train"] = {{"loss", loss},
                  {"negatives", train.negatives},
                  {"learning_rate", train.learning_rate},
                  {"batch_size", train.batch_size},
                  {"max_steps", train.max_steps},
                  {"checkpoint_every", train.checkpoint_every},
                  {"denoise_prob", train.denoise_prob},
                  {"init", train.init == InitKind::Svd ? "svd" : "random"},
                  {"tuning", train.tuning == TuningMode::Project ? "project" : "full"},
                  {"norm", train.norm == NormMode::OverT ? "over_t" : "over_sqrt_t"},
                  {"dim", train.dim},
                  {"val_ndcg_k", train.val_ndcg_k},
                  {"val_users_max", train.val_users_max},
                  {"val_mask_input", train.val_mask_input}};
    if (train.split_input_target) j["train"]["split_input_target"] = *train.split_input_target;
    j["ann"] = {{"M", ann.M}, {"ef_construction", ann.ef_construction}, {"ef_search", ann.ef_search}};
    j["eval"] = {{"recall_ks", eval.recall_ks},
                 {"ndcg_k", eval.ndcg_k},
                 {"banner_size", eval.banner_size},
                 {"mask_input", eval.mask_input},
                 {"normalized_recall", eval.normalized_recall},
                 {"use_ann", eval.use_ann},
                 {"ef_search", eval.ef_search}};
    j["serve"] = {{"port", serve.port}, {"max_ef", serve.max_ef}, {"threads", serve.threads}};
    j["sweep"] = {{"negatives", sweep_negatives}};
    j["seed"] = seed;
    return j.dump(2);
}

void PipelineConfig::validate() const {
    split.validate();
    train.validate();
    if (workdir.empty()) config_error("paths.workdir", "required");
    if (pmi_alpha <= 0.0 || pmi_alpha > 1.0) config_error("pmi.alpha", "must be in (0,1]");
    if (rsvd.rank < 1) config_error("rsvd.dim", "must be >= 1");
    if (ann.M < 2) config_error("ann.M", "must be >= 2");
    if (ann.ef_construction < 1) config_error("ann.ef_construction", "must be >= 1");
    if (ann.ef_search < 1) config_error("ann.ef_search", "must be >= 1");
    for (int64_t k : eval.recall_ks) {
        if (k < 1) config_error("eval.recall_ks", "entries must be >= 1");
    }
    if (eval.ndcg_k < 1) config_error("eval.ndcg_k", "must be >= 1");
}

std::string apply_override(const std::string& json_text, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw std::runtime_error("override must look like key.path=value: " + assignment);
    }
    const std::string path = assignment.substr(0, eq);
    const std::string value_text = assignment.substr(eq + 1);
    json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded()) throw std::runtime_error("config: invalid JSON");
    json value = json::parse(value_text, nullptr, false);
    if (value.is_discarded()) value = value_text;  // fall back to string

    json* cur = &doc;
    size_t start = 0;
    while (true) {
        const size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw std::runtime_error("override: empty key segment in " + path);
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            break;
        }
        cur = &(*cur)[key];
        start = dot + 1;
    }
    return doc.dump();
}

Stage parse_stage(const std::string& name) {
    static const std::unordered_map<std::string, Stage> map = {
        {"ingest", Stage::Ingest}, {"split", Stage::Split},   {"pmi", Stage::Pmi},
        {"rsvd", Stage::Rsvd},     {"train", Stage::Train},   {"index", Stage::Index},
        {"eval", Stage::Eval},     {"sweep", Stage::Sweep},   {"serve", Stage::Serve},
        {"pipeline", Stage::Pipeline}};
    auto it = map.find(name);
    if (it == map.end()) throw std::runtime_error("unknown stage: " + name);
    return it->second;
}

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Ingest: return "ingest";
        case Stage::Split: return "split";
        case Stage::Pmi: return "pmi";
        case Stage::Rsvd: return "rsvd";
        case Stage::Train: return "train";
        case Stage::Index: return "index";
        case Stage::Eval: return "eval";
        case Stage::Sweep: return "sweep";
        case Stage::Serve: return "serve";
        case Stage::Pipeline: return "pipeline";
    }
    return "?";
}

namespace {

struct StagePaths {
    std::string dir;                     // <workdir>/<stage>
    std::vector<std::string> inputs;     // absolute paths
    std::vector<std::string> producers;  // stage that creates each input
    std::vector<std::string> outputs;    // absolute paths
};

StagePaths stage_paths(Stage s, const PipelineConfig& cfg) {
    const fs::path w(cfg.workdir);
    StagePaths p;
    p.dir = (w / stage_name(s)).string();
    auto in = [&](const fs::path& path, const char* producer) {
        p.inputs.push_back(path.string());
        p.producers.push_back(producer);
    };
    auto out = [&](const fs::path& path) { p.outputs.push_back(path.string()); };
    switch (s) {
        case Stage::Ingest:
            in(cfg.data_path, "(external data)");
            out(w / "ingest/timelines.ledt");
            out(w / "ingest/vocab.ledv");
            out(w / "ingest/stats.json");
            break;
        case Stage::Split:
            in(w / "ingest/timelines.ledt", "ingest");
            out(w / "split/train.ledt");
            out(w / "split/validation.ledt");
            out(w / "split/test.ledt");
            break;
        case Stage::Pmi:
            in(w / "split/train.ledt", "split");
            out(w / "pmi/pmi.ledp");
            break;
        case Stage::Rsvd:
            in(w / "pmi/pmi.ledp", "pmi");
            out(w / "rsvd/embeddings.lede");
            out(w / "rsvd/singular_values.json");
            break;
        case Stage::Train:
            in(w / "split/train.ledt", "split");
            in(w / "split/validation.ledt", "split");
            if (cfg.train.init == InitKind::Svd) in(w / "rsvd/embeddings.lede", "rsvd");
            out(w / "train/model.ledm");
            out(w / "train/summary.json");
            break;
        case Stage::Index:
            in(w / "train/model.ledm", "train");
            in(w / "ingest/vocab.ledv", "ingest");
            out(w / "index/index.ledi");
            out(w / "index/model.ledm");
            out(w / "index/vocab.ledv");
            break;
        case Stage::Eval:
            in(w / "train/model.ledm", "train");
            in(w / "split/test.ledt", "split");
            if (cfg.eval.use_ann) in(w / "index/index.ledi", "index");
            out(w / "eval/report.json");
            out(w / "eval/report.csv");
            out(w / "eval/gbo_report.json");
            break;
        case Stage::Sweep:
            in(w / "split/train.ledt", "split");
            in(w / "split/validation.ledt", "split");
            in(w / "split/test.ledt", "split");
            if (cfg.train.init == InitKind::Svd) in(w / "rsvd/embeddings.lede", "rsvd");
            out(w / "sweep/sweep.csv");
            break;
        default:
            break;
    }
    return p;
}

void require_inputs(const StagePaths& p, Stage s) {
    for (size_t i = 0; i < p.inputs.size(); ++i) {
        if (!fs::exists(p.inputs[i])) {
            throw std::runtime_error(std::string(stage_name(s)) + ": missing input " +
                                     p.inputs[i] + "; run stage '" + p.producers[i] + "' first");
        }
    }
}

json input_hashes(const StagePaths& p) {
    json h = json::object();
    for (const std::string& in : p.inputs) h[in] = hash_file_hex(in);
    return h;
}

bool can_skip(const StagePaths& p, Stage s, const PipelineConfig& cfg) {
    const std::string manifest_path = p.dir + "/manifest.json";
    if (!fs::exists(manifest_path)) return false;
    for (const std::string& out : p.outputs) {
        if (!fs::exists(out)) return false;
    }
    json m = json::parse(read_text_file(manifest_path), nullptr, false);
    if (m.is_discarded()) return false;
    if (m.value("stage", "") != stage_name(s)) return false;
    if (m.value("config", "") != cfg.to_json_text()) return false;
    json hashes = input_hashes(p);
    return m.contains("inputs") && m["inputs"] == hashes;
}

void write_manifest(const StagePaths& p, Stage s, const PipelineConfig& cfg, int64_t wall_ms) {
    json m;
    m["stage"] = stage_name(s);
    m["inputs"] = input_hashes(p);
    json outs = json::array();
    for (const std::string& o : p.outputs) outs.push_back(o);
    m["outputs"] = outs;
    m["config"] = cfg.to_json_text();
    m["wall_ms"] = wall_ms;
    m["created_ms"] = now_ms();
    write_text_file(p.dir + "/manifest.json", m.dump(2));
}

void run_ingest(const PipelineConfig& cfg, const StagePaths& p) {
    IngestStats stats;
    TimelineSet ts = cfg.data_format == "ml20m"
                         ? ingest_ml20m(cfg.data_path, cfg.min_rating, cfg.min_events, &stats)
                         : ingest_jsonl(cfg.data_path, &stats);
    ts.save(p.outputs[0]);
    ts.vocab.save(p.outputs[1]);
    json js{{"users", stats.users},           {"items", stats.items},
            {"events", stats.events},         {"rows_read", stats.rows_read},
            {"rows_filtered", stats.rows_filtered}, {"users_dropped", stats.users_dropped}};
    write_text_file(p.outputs[2], js.dump(2));
    log_line("info", "ingest", "done", js);
}

void run_split(const PipelineConfig& cfg, const StagePaths& p) {
    TimelineSet ts = TimelineSet::load(p.inputs[0]);
    SplitSpec spec = cfg.split;
    spec.seed = cfg.stage_seed("split");
    UserSplit split = split_users(ts, spec);
    if (split.empty_split_warning) {
        log_line("warn", "split", "validation or test split is empty");
    }
    split.train.save(p.outputs[0]);
    split.validation.save(p.outputs[1]);
    split.test.save(p.outputs[2]);
    log_line("info", "split", "done",
             {{"train_users", split.train.user_count()},
              {"validation_users", split.validation.user_count()},
              {"test_users", split.test.user_count()}});
}

void run_pmi(const PipelineConfig& cfg, const StagePaths& p) {
    TimelineSet train = TimelineSet::load(p.inputs[0]);
    CooccurrenceStats stats = count_cooccurrences(train, KindFilter::View,
                                                  cfg.max_pairs_per_timeline,
                                                  cfg.stage_seed("pmi"));
    PmiMatrix m = build_pmi(stats, train.item_count(), cfg.pmi_alpha, cfg.pmi_min_count);
    m.save(p.outputs[0]);
    log_line("info", "pmi", "done",
             {{"items", m.dim()}, {"nnz", m.nnz()}, {"pairs", stats.total_pairs}});
}

void run_rsvd(const PipelineConfig& cfg, const StagePaths& p) {
    PmiMatrix m = PmiMatrix::load(p.inputs[0]);
    RsvdConfig rc = cfg.rsvd;
    rc.seed = cfg.stage_seed("rsvd");
    RsvdResult res = randomized_svd(m, rc);
    res.embeddings.save(p.outputs[0]);
    json sv = json::array();
    for (double s : res.singular_values) sv.push_back(s);
    write_text_file(p.outputs[1], json{{"singular_values", sv}}.dump(2));
    log_line("info", "rsvd", "done",
             {{"dim", rc.rank}, {"top_singular_value", res.singular_values.front()}});
}

void run_train(const PipelineConfig& cfg, const StagePaths& p) {
    TimelineSet train_set = TimelineSet::load(p.inputs[0]);
    TimelineSet val_set = TimelineSet::load(p.inputs[1]);
    EmbeddingMatrix base;
    const EmbeddingMatrix* base_ptr = nullptr;
    if (cfg.train.init == InitKind::Svd) {
        base = EmbeddingMatrix::load(p.inputs[2]);
        base_ptr = &base;
    }
    TrainConfig tc = cfg.train;
    tc.seed = cfg.stage_seed("train");
    tc.checkpoint_dir = p.dir + "/checkpoints";
    TrainResult res = train(train_set, val_set, base_ptr, tc);
    res.model.save(p.outputs[0]);
    json js{{"best_step", res.best_step},
            {"best_val_ndcg", res.best_ndcg},
            {"checkpoints", res.checkpoints.size()},
            {"trainable_params", res.stats.trainable_params},
            {"frozen_params", res.stats.frozen_params},
            {"skipped_timelines", res.stats.skipped_timelines}};
    write_text_file(p.outputs[1], js.dump(2));
    log_line("info", "train", "done", js);
}

void run_index(const PipelineConfig& cfg, const StagePaths& p) {
    LedModel model = LedModel::load(p.inputs[0]);
    MatF augmented = augment_for_mips(model);
    HnswConfig hc = cfg.ann;
    hc.seed = cfg.stage_seed("index");
    AnnIndex index = AnnIndex::build(augmented, hc);
    index.save(p.outputs[0]);
    // Self-contained serve bundle.
    fs::copy_file(p.inputs[0], p.outputs[1], fs::copy_options::overwrite_existing);
    fs::copy_file(p.inputs[1], p.outputs[2], fs::copy_options::overwrite_existing);
    log_line("info", "index", "done",
             {{"items", index.count()},
              {"dim", index.dim()},
              {"connectivity_repairs", index.connectivity_repairs()}});
}

void run_eval(const PipelineConfig& cfg, const StagePaths& p) {
    LedModel model = LedModel::load(p.inputs[0]);
    TimelineSet test_set = TimelineSet::load(p.inputs[1]);
    EvalConfig ec = cfg.eval;
    ec.seed = cfg.stage_seed("eval");
    AnnIndex index;
    const AnnIndex* index_ptr = nullptr;
    if (cfg.eval.use_ann) {
        index = AnnIndex::load(p.inputs[2]);
        index_ptr = &index;
    }
    EvalReport report = evaluate(model, index_ptr, test_set, ec);
    write_text_file(p.outputs[0], report.to_json());
    write_text_file(p.outputs[1], report.to_csv());
    EvalReport gbo = evaluate_gbo(test_set.vocab, test_set, ec);
    write_text_file(p.outputs[2], gbo.to_json());
    json extra;
    for (const auto& [k, v] : report.metrics) extra[k] = v.mean;
    log_line("info", "eval", "done", extra);
}

void run_sweep(const PipelineConfig& cfg, const StagePaths& p) {
    TimelineSet train_set = TimelineSet::load(p.inputs[0]);
    TimelineSet val_set = TimelineSet::load(p.inputs[1]);
    TimelineSet test_set = TimelineSet::load(p.inputs[2]);
    EmbeddingMatrix base;
    const EmbeddingMatrix* base_ptr = nullptr;
    if (cfg.train.init == InitKind::Svd) {
        base = EmbeddingMatrix::load(p.inputs[3]);
        base_ptr = &base;
    }
    EvalConfig ec = cfg.eval;
    ec.seed = cfg.stage_seed("eval");
    ec.recall_ks = {20, 50};

    auto run_one = [&](LossKind loss, int64_t negatives) {
        TrainConfig tc = cfg.train;
        tc.loss = loss;
        tc.negatives = std::max<int64_t>(negatives, 1);
        tc.seed = cfg.stage_seed("sweep");
        tc.checkpoint_dir.clear();
        TrainResult res = train(train_set, val_set, base_ptr, tc);
        EvalReport rep = evaluate(res.model, nullptr, test_set, ec);
        return std::pair<double, double>(rep.metrics.at("recall@20").mean,
                                         rep.metrics.at("recall@50").mean);
    };

    const LossKind sampled =
        cfg.train.loss == LossKind::ExactMultinomial ? LossKind::Bpr : cfg.train.loss;
    std::vector<SweepRow> rows;
    auto [ref20, ref50] = run_one(LossKind::ExactMultinomial, 1);
    rows.push_back({0, ref20, ref50, 0.0, 0.0});
    log_line("info", "sweep", "reference done", {{"recall@20", ref20}, {"recall@50", ref50}});
    for (int64_t n : cfg.sweep_negatives) {
        auto [r20, r50] = run_one(sampled, n);
        SweepRow row;
        row.negatives = n;
        row.recall20 = r20;
        row.recall50 = r50;
        row.drop20 = ref20 > 0 ? (ref20 - r20) / ref20 : 0.0;
        row.drop50 = ref50 > 0 ? (ref50 - r50) / ref50 : 0.0;
        rows.push_back(row);
        log_line("info", "sweep", "variant done",
                 {{"negatives", n}, {"recall@20", r20}, {"recall@50", r50}});
    }
    write_text_file(p.outputs[0], sweep_to_csv(rows));
}

}  // namespace

int run_stage(Stage stage, const PipelineConfig& cfg, const StageOptions& opts) {
    cfg.validate();
    if (stage == Stage::Pipeline) {
        for (Stage s : {Stage::Ingest, Stage::Split, Stage::Pmi, Stage::Rsvd, Stage::Train,
                        Stage::Index, Stage::Eval}) {
            int rc = run_stage(s, cfg, opts);
            if (rc != 0) return rc;
        }
        return 0;
    }
    if (stage == Stage::Serve) {
        const fs::path bundle = fs::path(cfg.workdir) / "index";
        ServerCore core(cfg.serve);
        core.reload(bundle.string());
        return serve_http(core, cfg.serve);
    }

    StagePaths paths = stage_paths(stage, cfg);
    require_inputs(paths, stage);
    fs::create_directories(paths.dir);
    if (!opts.force && can_skip(paths, stage, cfg)) {
        log_line("info", stage_name(stage), "unchanged inputs and config; skipping");
        return 0;
    }
    const auto t0 = std::chrono::steady_clock::now();
    switch (stage) {
        case Stage::Ingest: run_ingest(cfg, paths); break;
        case Stage::Split: run_split(cfg, paths); break;
        case Stage::Pmi: run_pmi(cfg, paths); break;
        case Stage::Rsvd: run_rsvd(cfg, paths); break;
        case Stage::Train: run_train(cfg, paths); break;
        case Stage::Index: run_index(cfg, paths); break;
        case Stage::Eval: run_eval(cfg, paths); break;
        case Stage::Sweep: run_sweep(cfg, paths); break;
        default: break;
    }
    const int64_t wall =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0)
            .count();
    write_manifest(paths, stage, cfg, wall);
    return 0;
}

}  // namespace led
