#include "led/service.hpp"

#include <filesystem>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace led {

namespace {

uint64_t us_between(std::chrono::steady_clock::time_point a,
                    std::chrono::steady_clock::time_point b) {
    return static_cast<uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(b - a).count());
}

nlohmann::json percentiles_json(const LatencyHistogram& h) {
    auto p = [&](double q) -> nlohmann::json {
        auto v = h.percentile_us(q);
        if (!v) return nullptr;
        return *v;
    };
    return {{"p50_us", p(0.50)}, {"p90_us", p(0.90)}, {"p99_us", p(0.99)}, {"p999_us", p(0.999)}};
}

}  // namespace

size_t ServingState::memory_bytes() const {
    size_t b = index.memory_bytes();
    b += model.bias.size() * sizeof(float);
    b += model.effective().size_bytes();
    if (model.mode == TuningMode::Project) b += model.projection.size_bytes();
    return b;
}

std::shared_ptr<const ServingState> load_serving_state(const std::string& dir,
                                                       const std::string& version) {
    namespace fs = std::filesystem;
    const std::string model_path = (fs::path(dir) / "model.ledm").string();
    const std::string index_path = (fs::path(dir) / "index.ledi").string();
    const std::string vocab_path = (fs::path(dir) / "vocab.ledv").string();
    for (const std::string& p : {model_path, index_path, vocab_path}) {
        if (!fs::exists(p)) throw std::runtime_error("serving state: missing artifact " + p);
    }
    auto state = std::make_shared<ServingState>();
    state->model = LedModel::load(model_path);
    state->index = AnnIndex::load(index_path);
    state->vocab = Vocabulary::load(vocab_path);
    state->version = version;

    const int64_t items = state->model.item_count();
    if (static_cast<int64_t>(state->vocab.size()) != items) {
        throw std::runtime_error("serving state: vocabulary size " +
                                 std::to_string(state->vocab.size()) + " != model items " +
                                 std::to_string(items));
    }
    if (state->index.count() != items) {
        throw std::runtime_error("serving state: index count " +
                                 std::to_string(state->index.count()) + " != model items " +
                                 std::to_string(items));
    }
    if (state->index.dim() != state->model.dim() + 1) {
        throw std::runtime_error("serving state: index dim " + std::to_string(state->index.dim()) +
                                 " != model dim + 1 (" + std::to_string(state->model.dim() + 1) +
                                 ")");
    }
    return state;
}

ServerCore::ServerCore(ServiceConfig cfg)
    : cfg_(cfg), started_(std::chrono::steady_clock::now()) {}

void ServerCore::install(std::shared_ptr<const ServingState> state) {
    std::unique_lock lock(mu_);
    state_ = std::move(state);
}

std::string ServerCore::reload(const std::string& dir) {
    const uint64_t generation = loads_.fetch_add(1) + 1;
    const std::string version =
        "v" + std::to_string(generation) + ":" + std::filesystem::path(dir).filename().string();
    // Load and validate outside the lock; swap atomically on success. On
    // failure the old state keeps serving.
    auto state = load_serving_state(dir, version);
    install(state);
    return version;
}

std::shared_ptr<const ServingState> ServerCore::snapshot() const {
    std::shared_lock lock(mu_);
    return state_;
}

RecommendResult ServerCore::recommend(const RecommendRequest& req) {
    const auto t0 = std::chrono::steady_clock::now();
    auto state = snapshot();
    if (!state) throw NotReady("no model loaded");
    if (req.k < 1) throw BadRequest("k must be >= 1");

    std::vector<uint32_t> history;
    history.reserve(req.history.size());
    uint64_t dropped = 0;
    for (const std::string& id : req.history) {
        if (auto idx = state->vocab.find(id)) {
            history.push_back(*idx);
        } else {
            ++dropped;
        }
    }
    dropped_ids_.fetch_add(dropped, std::memory_order_relaxed);

    // Unknown-only or empty history degrades to the null vector, which
    // ranks items by popularity bias.
    auto user = encode_user(history, state->model);
    auto query = augment_query(user);
    const auto t1 = std::chrono::steady_clock::now();

    int64_t ef = req.ef_search.value_or(state->index.config().ef_search);
    ef = std::min<int64_t>(std::max<int64_t>(ef, 1), cfg_.max_ef);
    TopK top = state->index.search(query, std::min<int64_t>(req.k, state->index.count()), ef);
    const auto t2 = std::chrono::steady_clock::now();

    RecommendResult res;
    res.items.reserve(top.items.size());
    for (uint32_t idx : top.items) res.items.push_back(state->vocab.external_id(idx));
    res.scores = std::move(top.scores);
    res.version = state->version;
    res.dropped_ids = dropped;
    res.encode_us = us_between(t0, t1);
    res.search_us = us_between(t1, t2);
    res.total_us = us_between(t0, t2);

    requests_.fetch_add(1, std::memory_order_relaxed);
    encode_hist_.record_us(static_cast<double>(res.encode_us));
    search_hist_.record_us(static_cast<double>(res.search_us));
    total_hist_.record_us(static_cast<double>(res.total_us));
    return res;
}

std::string ServerCore::stats_json() const {
    const double uptime_s =
        std::chrono::duration_cast<std::chrono::duration<double>>(std::chrono::steady_clock::now() -
                                                                  started_)
            .count();
    const uint64_t n = requests_.load(std::memory_order_relaxed);
    nlohmann::json j;
    j["requests"] = n;
    j["qps"] = uptime_s > 0 ? static_cast<double>(n) / uptime_s : 0.0;
    j["dropped_ids"] = dropped_ids_.load(std::memory_order_relaxed);
    j["uptime_s"] = uptime_s;
    auto state = snapshot();
    j["version"] = state ? nlohmann::json(state->version) : nlohmann::json(nullptr);
    j["latency"] = {{"encode", percentiles_json(encode_hist_)},
                    {"search", percentiles_json(search_hist_)},
                    {"total", percentiles_json(total_hist_)}};
    return j.dump();
}

namespace {

nlohmann::json error_body(const std::string& code, const std::string& message) {
    return {{"code", code}, {"message", message}};
}

}  // namespace

void attach_routes(httplib::Server& server, ServerCore& core) {
    server.Post("/v1/recommend", [&core](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) {
            res.status = 400;
            res.set_content(error_body("bad_request", "body must be a JSON object").dump(),
                            "application/json");
            return;
        }
        RecommendRequest rr;
        try {
            if (body.contains("history")) {
                if (!body["history"].is_array()) throw BadRequest("history must be an array");
                for (const auto& v : body["history"]) {
                    rr.history.push_back(v.is_string() ? v.get<std::string>() : v.dump());
                }
            }
            if (body.contains("k")) {
                if (!body["k"].is_number_integer()) throw BadRequest("k must be an integer");
                rr.k = body["k"].get<int64_t>();
                if (rr.k < 1) throw BadRequest("k must be >= 1");
            }
            if (body.contains("ef_search")) {
                if (!body["ef_search"].is_number_integer()) {
                    throw BadRequest("ef_search must be an integer");
                }
                rr.ef_search = body["ef_search"].get<int64_t>();
            }
            RecommendResult out = core.recommend(rr);
            nlohmann::json jr;
            jr["items"] = out.items;
            jr["scores"] = out.scores;
            jr["served_by"] = out.version;
            jr["dropped_ids"] = out.dropped_ids;
            jr["timing"] = {{"encode_us", out.encode_us},
                            {"search_us", out.search_us},
                            {"total_us", out.total_us}};
            res.set_content(jr.dump(), "application/json");
        } catch (const BadRequest& e) {
            res.status = 400;
            res.set_content(error_body("bad_request", e.what()).dump(), "application/json");
        } catch (const NotReady& e) {
            res.status = 503;
            res.set_content(error_body("not_ready", e.what()).dump(), "application/json");
        } catch (const std::exception& e) {
            res.status = 500;
            res.set_content(error_body("internal", e.what()).dump(), "application/json");
        }
    });

    server.Get("/v1/stats", [&core](const httplib::Request&, httplib::Response& res) {
        res.set_content(core.stats_json(), "application/json");
    });

    server.Get("/health", [&core](const httplib::Request&, httplib::Response& res) {
        if (core.ready()) {
            res.status = 200;
            res.set_content("{\"status\":\"ok\"}", "application/json");
        } else {
            res.status = 503;
            res.set_content(error_body("not_ready", "no model loaded").dump(), "application/json");
        }
    });

    server.Post("/v1/reload", [&core](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.contains("dir") || !body["dir"].is_string()) {
            res.status = 400;
            res.set_content(error_body("bad_request", "expected {\"dir\": \"...\"}").dump(),
                            "application/json");
            return;
        }
        try {
            std::string version = core.reload(body["dir"].get<std::string>());
            nlohmann::json jr{{"status", "ok"}, {"version", version}};
            res.set_content(jr.dump(), "application/json");
        } catch (const std::exception& e) {
            // Old state keeps serving.
            res.status = 409;
            res.set_content(error_body("reload_rejected", e.what()).dump(), "application/json");
        }
    });
}

int serve_http(ServerCore& core, const ServiceConfig& cfg) {
    httplib::Server server;
    server.new_task_queue = [&cfg] { return new httplib::ThreadPool(cfg.threads); };
    attach_routes(server, core);
    std::fprintf(stderr, "{\"level\":\"info\",\"msg\":\"serving\",\"port\":%d}\n", cfg.port);
    if (!server.listen("0.0.0.0", cfg.port)) {
        std::fprintf(stderr, "{\"level\":\"error\",\"msg\":\"listen failed\",\"port\":%d}\n",
                     cfg.port);
        return 1;
    }
    return 0;
}

}  // namespace led
