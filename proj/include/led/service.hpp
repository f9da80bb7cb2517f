#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "led/ann.hpp"
#include "led/histogram.hpp"
#include "led/model.hpp"
#include "led/timeline.hpp"

namespace httplib {
class Server;
}

namespace led {

struct RecommendRequest {
    std::vector<std::string> history;  // external item ids; unknowns are dropped and counted
    int64_t k = 50;
    std::optional<int64_t> ef_search;
};

struct RecommendResult {
    std::vector<std::string> items;
    std::vector<float> scores;
    std::string version;
    uint64_t encode_us = 0;
    uint64_t search_us = 0;
    uint64_t total_us = 0;
    uint64_t dropped_ids = 0;
};

// One consistent model+index+vocabulary generation. Replaced only as a
// whole; requests hold a shared_ptr so in-flight work finishes on the
// generation it started with.
struct ServingState {
    LedModel model;
    AnnIndex index;
    Vocabulary vocab;
    std::string version;

    size_t memory_bytes() const;
};

// Loads model/index/vocab files from a directory and cross-checks shapes.
// File names: model.ledm, index.ledi, vocab.ledv.
std::shared_ptr<const ServingState> load_serving_state(const std::string& dir,
                                                       const std::string& version);

struct ServiceConfig {
    int port = 8080;
    int64_t max_ef = 2000;  // per-request ef override cap
    int threads = 8;
};

class BadRequest : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class NotReady : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Protocol-independent request handling: id mapping, user encoding, MIPS
// query, stats accounting and atomic state replacement.
class ServerCore {
public:
    explicit ServerCore(ServiceConfig cfg = {});

    void install(std::shared_ptr<const ServingState> state);
    std::string reload(const std::string& dir);  // returns the new version tag
    std::shared_ptr<const ServingState> snapshot() const;
    bool ready() const { return snapshot() != nullptr; }

    RecommendResult recommend(const RecommendRequest& req);
    std::string stats_json() const;
    const ServiceConfig& config() const { return cfg_; }

private:
    ServiceConfig cfg_;
    mutable std::shared_mutex mu_;
    std::shared_ptr<const ServingState> state_;
    std::atomic<uint64_t> loads_{0};
    std::atomic<uint64_t> requests_{0};
    std::atomic<uint64_t> dropped_ids_{0};
    LatencyHistogram encode_hist_;
    LatencyHistogram search_hist_;
    LatencyHistogram total_hist_;
    std::chrono::steady_clock::time_point started_;
};

// HTTP/1.1 + JSON endpoints over a ServerCore:
//   POST /v1/recommend   {history, k, ef_search?} -> items/scores/timing
//   GET  /v1/stats
//   GET  /health         200 when a state is loaded, 503 otherwise
//   POST /v1/reload      {dir}
void attach_routes(httplib::Server& server, ServerCore& core);

// Blocking serve loop (CLI entry point).
int serve_http(ServerCore& core, const ServiceConfig& cfg);

}  // namespace led
