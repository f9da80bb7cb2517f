#include <doctest.h>

#include <malloc.h>

#include <algorithm>
#include <atomic>
#include <numeric>
#include <fstream>
#include <cmath>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "led/io.hpp"
#include "led/service.hpp"
#include "test_helpers.hpp"

using namespace led;
using nlohmann::json;

namespace {

// Writes a complete serve bundle (model.ledm + index.ledi + vocab.ledv).
// top_bias_item gets a bias high enough to win every cold-start query.
void make_bundle(const std::string& dir, int64_t items, int64_t dim, uint64_t seed,
                 uint32_t top_bias_item) {
    std::filesystem::create_directories(dir);
    LedModel model = led::test::random_full_model(items, dim, seed, 0.1f);
    model.bias[top_bias_item] = 100.0f;
    model.save(dir + "/model.ledm");
    HnswConfig cfg;
    cfg.seed = seed;
    AnnIndex index = AnnIndex::build(augment_for_mips(model), cfg);
    index.save(dir + "/index.ledi");
    Vocabulary vocab;
    for (int64_t i = 0; i < items; ++i) vocab.add("item-" + std::to_string(i));
    vocab.save(dir + "/vocab.ledv");
}

long rss_kb() {
    std::ifstream in("/proc/self/status");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("VmRSS:", 0) == 0) {
            return std::stol(line.substr(6));
        }
    }
    return -1;
}

// Ring-graph LEDI + matching LEDM/LEDV written directly; big enough that
// the footprint is dominated by catalog-sized buffers.
void make_synthetic_bundle(const std::string& dir, int64_t items, int64_t dim) {
    std::filesystem::create_directories(dir);
    {
        LedModel m;
        m.mode = TuningMode::Full;
        m.base = MatF(items, dim);
        m.bias.assign(items, 0.0f);
        m.save(dir + "/model.ledm");
    }
    {
        BinaryWriter w(dir + "/index.ledi");
        w.magic("LEDI");
        w.u32(1);
        w.u64(static_cast<uint64_t>(items));
        w.u64(static_cast<uint64_t>(dim + 1));
        w.u64(16);
        w.u64(200);
        w.u64(100);
        w.u64(0);
        w.u32(0);
        w.i32(0);
        w.u64(0);
        std::vector<int32_t> levels(items, 0);
        w.span_i32(levels);
        std::vector<float> vectors(static_cast<size_t>(items) * (dim + 1), 0.0f);
        w.span_f32(vectors);
        for (int64_t i = 0; i < items; ++i) {
            uint32_t prev = static_cast<uint32_t>((i + items - 1) % items);
            uint32_t next = static_cast<uint32_t>((i + 1) % items);
            w.u32(2);
            w.u32(prev);
            w.u32(next);
        }
        w.close();
    }
    {
        Vocabulary vocab;
        for (int64_t i = 0; i < items; ++i) vocab.add(std::to_string(i));
        vocab.save(dir + "/vocab.ledv");
    }
}

struct TestServer {
    ServerCore& core;
    httplib::Server server;
    int port = 0;
    std::thread thread;

    explicit TestServer(ServerCore& c) : core(c) {
        attach_routes(server, core);
        port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~TestServer() {
        server.stop();
        thread.join();
    }
};

}  // namespace

TEST_CASE("recommend maps ids, encodes and searches") {
    led::test::TempDir tmp("svc");
    make_bundle(tmp.file("bundle"), 60, 8, 5, /*top_bias_item=*/7);
    ServerCore core;
    core.install(load_serving_state(tmp.file("bundle"), "v1:test"));

    SUBCASE("empty history returns the k largest-bias items") {
        RecommendRequest req;
        req.k = 5;
        RecommendResult res = core.recommend(req);
        REQUIRE(res.items.size() == 5);
        CHECK(res.items[0] == "item-7");  // the boosted bias wins
        auto state = core.snapshot();
        // Exactly the k largest biases, in order.
        std::vector<uint32_t> idx(60);
        std::iota(idx.begin(), idx.end(), 0u);
        std::stable_sort(idx.begin(), idx.end(), [&](uint32_t a, uint32_t b) {
            if (state->model.bias[a] != state->model.bias[b]) {
                return state->model.bias[a] > state->model.bias[b];
            }
            return a < b;
        });
        for (int i = 0; i < 5; ++i) {
            CHECK(res.items[i] == "item-" + std::to_string(idx[i]));
            CHECK(res.scores[i] == state->model.bias[idx[i]]);
        }
    }

    SUBCASE("unknown ids are dropped and counted") {
        RecommendRequest req;
        req.history = {"nope-1", "nope-2", "nope-3"};
        req.k = 3;
        RecommendResult res = core.recommend(req);
        CHECK(res.dropped_ids == 3);
        RecommendRequest empty;
        empty.k = 3;
        RecommendResult res2 = core.recommend(empty);
        CHECK(res.items == res2.items);  // same as empty history
        CHECK(res.scores == res2.scores);
    }

    SUBCASE("response equals the offline composition oracle at ef=I") {
        auto state = core.snapshot();
        MatF augmented = augment_for_mips(state->model);
        Rng rng(77);
        for (int trial = 0; trial < 30; ++trial) {
            RecommendRequest req;
            const int h = 1 + static_cast<int>(rng() % 8);
            std::vector<uint32_t> hist_idx;
            for (int i = 0; i < h; ++i) {
                uint32_t it = static_cast<uint32_t>(rng() % 60);
                hist_idx.push_back(it);
                req.history.push_back("item-" + std::to_string(it));
            }
            req.k = 10;
            req.ef_search = 60;  // exhaustive
            RecommendResult res = core.recommend(req);

            auto user = encode_user(hist_idx, state->model);
            auto query = augment_query(user);
            TopK oracle = brute_force_topk(augmented, query, 10);
            REQUIRE(res.items.size() == oracle.items.size());
            for (size_t i = 0; i < oracle.items.size(); ++i) {
                CHECK(res.items[i] == "item-" + std::to_string(oracle.items[i]));
                CHECK(res.scores[i] == oracle.scores[i]);  // byte-equal scores
            }
        }
    }

    SUBCASE("k larger than the catalog truncates") {
        RecommendRequest req;
        req.k = 500;
        RecommendResult res = core.recommend(req);
        CHECK(res.items.size() == 60);
    }

    SUBCASE("not ready throws") {
        ServerCore empty_core;
        RecommendRequest req;
        CHECK_THROWS_AS(empty_core.recommend(req), NotReady);
    }
}

TEST_CASE("reload keeps serving on bad artifacts and swaps atomically on good ones") {
    led::test::TempDir tmp("reload");
    make_bundle(tmp.file("a"), 40, 6, 1, 0);
    make_bundle(tmp.file("b"), 40, 6, 2, 1);
    make_bundle(tmp.file("bad"), 32, 6, 3, 2);  // mismatched I vs a/b? consistent alone

    ServerCore core;
    std::string v1 = core.reload(tmp.file("a"));
    CHECK(core.snapshot()->version == v1);

    SUBCASE("mismatched shapes inside a bundle are rejected") {
        // Corrupt bundle: vocab from a 40-item catalog, model/index from 32.
        std::filesystem::copy_file(tmp.file("a") + "/vocab.ledv", tmp.file("bad") + "/vocab.ledv",
                                   std::filesystem::copy_options::overwrite_existing);
        CHECK_THROWS_WITH_AS(core.reload(tmp.file("bad")), doctest::Contains("vocabulary"),
                             std::runtime_error);
        // Old state keeps serving.
        CHECK(core.snapshot()->version == v1);
        RecommendRequest req;
        req.k = 1;
        CHECK(core.recommend(req).items[0] == "item-0");
    }

    SUBCASE("reloading identical artifacts changes the version, not the answers") {
        RecommendRequest req;
        req.k = 5;
        RecommendResult before = core.recommend(req);
        std::string v2 = core.reload(tmp.file("a"));
        CHECK(v2 != v1);
        RecommendResult after = core.recommend(req);
        CHECK(before.items == after.items);
        CHECK(before.scores == after.scores);
        CHECK(after.version == v2);
    }

    SUBCASE("concurrent requests never observe a mixed state") {
        // Bundle a: argmax bias item-0; bundle b: item-1. A response is
        // consistent iff its top item matches the bundle its version names.
        std::atomic<bool> stop{false};
        std::atomic<uint64_t> violations{0};
        std::atomic<uint64_t> served{0};
        auto worker = [&] {
            RecommendRequest req;
            req.k = 1;
            while (!stop.load(std::memory_order_relaxed)) {
                RecommendResult res = core.recommend(req);
                const bool is_a = res.version.find(":a") != std::string::npos;
                const std::string expect = is_a ? "item-0" : "item-1";
                if (res.items[0] != expect) violations.fetch_add(1);
                served.fetch_add(1);
            }
        };
        std::vector<std::thread> threads;
        for (int t = 0; t < 4; ++t) threads.emplace_back(worker);
        int generation = 0;
        while (served.load() < 100000 || generation < 4) {
            core.reload(generation % 2 == 0 ? tmp.file("b") : tmp.file("a"));
            ++generation;
        }
        stop = true;
        for (auto& t : threads) t.join();
        CHECK(violations.load() == 0);
        CHECK(served.load() >= 100000);
        CHECK(generation >= 4);
    }
}

TEST_CASE("http endpoints") {
    led::test::TempDir tmp("http");
    make_bundle(tmp.file("bundle"), 50, 8, 9, 3);

    SUBCASE("health and recommend are 503 before any state loads") {
        ServerCore core;
        TestServer ts(core);
        httplib::Client client("127.0.0.1", ts.port);
        auto health = client.Get("/health");
        REQUIRE(health);
        CHECK(health->status == 503);
        auto rec = client.Post("/v1/recommend", R"({"history":[],"k":3})", "application/json");
        REQUIRE(rec);
        CHECK(rec->status == 503);
        CHECK(json::parse(rec->body)["code"] == "not_ready");
        // Stats before traffic: zero counters, null percentiles.
        auto stats = client.Get("/v1/stats");
        REQUIRE(stats);
        json s = json::parse(stats->body);
        CHECK(s["requests"] == 0);
        CHECK(s["dropped_ids"] == 0);
        CHECK(s["latency"]["total"]["p50_us"].is_null());
        CHECK(s["version"].is_null());
    }

    ServerCore core;
    core.install(load_serving_state(tmp.file("bundle"), "v1:bundle"));
    TestServer ts(core);
    httplib::Client client("127.0.0.1", ts.port);

    SUBCASE("health is 200 once loaded") {
        auto health = client.Get("/health");
        REQUIRE(health);
        CHECK(health->status == 200);
    }

    SUBCASE("malformed bodies get a 400 with a reason") {
        for (const char* body : {"not json", "[1,2,3]", R"({"k":0})", R"({"k":"ten"})",
                                 R"({"history":"x"})", R"({"ef_search":1.5})"}) {
            auto res = client.Post("/v1/recommend", body, "application/json");
            REQUIRE(res);
            CHECK(res->status == 400);
            json e = json::parse(res->body);
            CHECK(e["code"] == "bad_request");
            CHECK(e.contains("message"));
        }
    }

    SUBCASE("recommend over http equals the in-process path") {
        json body{{"history", {"item-2", "item-5", "unknown-id"}}, {"k", 7}, {"ef_search", 50}};
        auto res = client.Post("/v1/recommend", body.dump(), "application/json");
        REQUIRE(res);
        REQUIRE(res->status == 200);
        json jr = json::parse(res->body);
        RecommendRequest rr;
        rr.history = {"item-2", "item-5", "unknown-id"};
        rr.k = 7;
        rr.ef_search = 50;
        RecommendResult direct = core.recommend(rr);
        REQUIRE(jr["items"].size() == direct.items.size());
        for (size_t i = 0; i < direct.items.size(); ++i) {
            CHECK(jr["items"][i].get<std::string>() == direct.items[i]);
            CHECK(jr["scores"][i].get<float>() == direct.scores[i]);
        }
        CHECK(jr["dropped_ids"] == 1);
        CHECK(jr["timing"].contains("encode_us"));
        CHECK(jr["timing"].contains("search_us"));
        CHECK(jr["timing"].contains("total_us"));
        CHECK(jr["served_by"] == "v1:bundle");

        auto stats = client.Get("/v1/stats");
        json s = json::parse(stats->body);
        CHECK(s["requests"].get<int>() >= 2);
        CHECK(s["dropped_ids"].get<int>() >= 1);
        CHECK_FALSE(s["latency"]["total"]["p50_us"].is_null());
    }

    SUBCASE("reload endpoint") {
        json body{{"dir", tmp.file("bundle")}};
        auto res = client.Post("/v1/reload", body.dump(), "application/json");
        REQUIRE(res);
        CHECK(res->status == 200);
        json jr = json::parse(res->body);
        CHECK(jr["status"] == "ok");

        auto bad = client.Post("/v1/reload", R"({"dir":"/nonexistent-dir"})", "application/json");
        REQUIRE(bad);
        CHECK(bad->status == 409);
        CHECK(json::parse(bad->body)["code"] == "reload_rejected");
        // Still serving.
        auto health = client.Get("/health");
        CHECK(health->status == 200);
    }
}

TEST_CASE("latency histogram percentiles") {
    SUBCASE("empty histogram has no percentiles") {
        LatencyHistogram h;
        CHECK(h.count() == 0);
        CHECK_FALSE(h.percentile_us(0.5).has_value());
    }
    SUBCASE("identical-cost samples put p50 and p99 in one bucket") {
        LatencyHistogram h;
        for (int i = 0; i < 1000; ++i) h.record_us(123.0);
        CHECK(h.count() == 1000);
        CHECK(*h.percentile_us(0.50) == *h.percentile_us(0.99));
    }
    SUBCASE("known mixture matches an exact-sort oracle within one bucket") {
        LatencyHistogram h;
        Rng rng(7);
        std::lognormal_distribution<double> dist(5.0, 1.2);  // ~150us median
        std::vector<double> samples;
        for (int i = 0; i < 20000; ++i) {
            const double v = dist(rng);
            samples.push_back(v);
            h.record_us(v);
        }
        std::sort(samples.begin(), samples.end());
        const double bucket_ratio = std::pow(10.0, 1.0 / LatencyHistogram::kBucketsPerDecade);
        for (double q : {0.5, 0.9, 0.99, 0.999}) {
            const double exact = samples[static_cast<size_t>(std::ceil(q * samples.size())) - 1];
            const double approx = *h.percentile_us(q);
            // The reported upper edge sits within one bucket of the truth.
            CHECK(approx >= exact / bucket_ratio);
            CHECK(approx <= exact * bucket_ratio * bucket_ratio);
        }
    }
    SUBCASE("out-of-range samples land in the underflow/overflow buckets") {
        LatencyHistogram h;
        h.record_us(0.01);
        CHECK(*h.percentile_us(0.5) == 1.0);  // underflow edge
        h.reset();
        h.record_us(5e6);
        CHECK(*h.percentile_us(0.5) == 1e6);  // overflow cap
    }
}

TEST_CASE("memory footprint scales linearly with the catalog") {
    led::test::TempDir tmp("mem");
    const int64_t items = 120000;
    const int64_t dim = 64;
    make_synthetic_bundle(tmp.file("one"), items, dim);
    make_synthetic_bundle(tmp.file("two"), items * 2, dim);

    malloc_trim(0);
    const long base1 = rss_kb();
    long delta1 = 0;
    {
        auto s = load_serving_state(tmp.file("one"), "v1");
        delta1 = rss_kb() - base1;
    }
    malloc_trim(0);
    const long base2 = rss_kb();
    long delta2 = 0;
    {
        auto s = load_serving_state(tmp.file("two"), "v2");
        delta2 = rss_kb() - base2;
    }
    REQUIRE(delta1 > 0);
    REQUIRE(delta2 > 0);
    const double ratio = static_cast<double>(delta2) / static_cast<double>(delta1);
    MESSAGE("rss deltas kb: ", delta1, " ", delta2, " ratio ", ratio);
    CHECK(ratio >= 1.6);
    CHECK(ratio <= 2.4);
}
