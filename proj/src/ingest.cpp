#include "led/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace led {

namespace {

struct RawEvent {
    uint32_t item;
    EventKind kind;
    int64_t ts;
};

[[noreturn]] void parse_error(const std::string& file, uint64_t line, const std::string& why) {
    throw std::runtime_error(file + ":" + std::to_string(line) + ": parse error: " + why);
}

template <typename T>
T parse_number(std::string_view field, const std::string& file, uint64_t line, const char* name) {
    T value{};
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        parse_error(file, line, std::string("bad ") + name + " '" + std::string(field) + "'");
    }
    return value;
}

// Groups interned per-user event buffers in first-appearance order, then
// re-keys items into a vocabulary that covers retained users only.
TimelineSet assemble(std::vector<std::string>&& user_ids,
                     std::vector<std::vector<RawEvent>>&& per_user,
                     const std::vector<std::string>& provisional_items, int64_t min_events,
                     IngestStats* stats) {
    TimelineSet out;
    uint64_t dropped = 0;
    for (size_t u = 0; u < user_ids.size(); ++u) {
        auto& events = per_user[u];
        if (static_cast<int64_t>(events.size()) < min_events) {
            ++dropped;
            continue;
        }
        std::stable_sort(events.begin(), events.end(),
                         [](const RawEvent& a, const RawEvent& b) { return a.ts < b.ts; });
        Timeline t;
        t.user = std::move(user_ids[u]);
        t.events.reserve(events.size());
        for (const RawEvent& e : events) {
            uint32_t idx = out.vocab.add(provisional_items[e.item]);
            out.vocab.bump(idx, e.kind);
            t.events.push_back(Event{idx, e.kind, e.ts});
        }
        out.timelines.push_back(std::move(t));
    }
    if (out.timelines.empty()) {
        throw std::runtime_error("empty dataset: no users survived ingestion filters");
    }
    if (stats) {
        stats->users = out.timelines.size();
        stats->items = out.vocab.size();
        stats->events = out.event_count();
        stats->users_dropped = dropped;
    }
    return out;
}

}  // namespace

TimelineSet ingest_ml20m(const std::string& ratings_file, double min_rating, int64_t min_events,
                         IngestStats* stats) {
    std::ifstream in(ratings_file);
    if (!in) throw std::runtime_error("cannot open ratings file: " + ratings_file);

    std::unordered_map<std::string, uint32_t> user_index;
    std::vector<std::string> user_ids;
    std::vector<std::vector<RawEvent>> per_user;
    std::unordered_map<std::string, uint32_t> item_index;
    std::vector<std::string> item_ids;

    IngestStats local;
    std::string line;
    uint64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("userId", 0) == 0) continue;  // header

        std::string_view sv(line);
        size_t c1 = sv.find(',');
        size_t c2 = c1 == std::string_view::npos ? c1 : sv.find(',', c1 + 1);
        size_t c3 = c2 == std::string_view::npos ? c2 : sv.find(',', c2 + 1);
        if (c3 == std::string_view::npos) {
            parse_error(ratings_file, lineno, "expected userId,movieId,rating,timestamp");
        }
        std::string_view user = sv.substr(0, c1);
        std::string_view movie = sv.substr(c1 + 1, c2 - c1 - 1);
        std::string_view rating_s = sv.substr(c2 + 1, c3 - c2 - 1);
        std::string_view ts_s = sv.substr(c3 + 1);
        if (user.empty() || movie.empty()) parse_error(ratings_file, lineno, "empty id field");

        double rating = parse_number<double>(rating_s, ratings_file, lineno, "rating");
        int64_t ts = parse_number<int64_t>(ts_s, ratings_file, lineno, "timestamp");
        if (ts < 0) parse_error(ratings_file, lineno, "negative timestamp");

        ++local.rows_read;
        if (rating < min_rating) {
            ++local.rows_filtered;
            continue;
        }
        auto [uit, uinserted] = user_index.emplace(std::string(user), user_ids.size());
        if (uinserted) {
            user_ids.emplace_back(user);
            per_user.emplace_back();
        }
        auto [iit, iinserted] = item_index.emplace(std::string(movie), item_ids.size());
        if (iinserted) item_ids.emplace_back(movie);
        per_user[uit->second].push_back(RawEvent{iit->second, EventKind::View, ts});
    }
    if (local.rows_read == 0) {
        throw std::runtime_error("empty dataset: no parsable rows in " + ratings_file);
    }
    if (stats) *stats = local;
    TimelineSet out = assemble(std::move(user_ids), std::move(per_user), item_ids, min_events, stats);
    return out;
}

TimelineSet ingest_jsonl(const std::string& events_file, IngestStats* stats) {
    std::ifstream in(events_file);
    if (!in) throw std::runtime_error("cannot open events file: " + events_file);

    std::unordered_map<std::string, uint32_t> user_index;
    std::vector<std::string> user_ids;
    std::vector<std::vector<RawEvent>> per_user;
    std::unordered_map<std::string, uint32_t> item_index;
    std::vector<std::string> item_ids;

    IngestStats local;
    std::string line;
    uint64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) parse_error(events_file, lineno, "invalid JSON object");
        if (!j.contains("user") || !j.contains("item") || !j.contains("kind") || !j.contains("ts")) {
            parse_error(events_file, lineno, "missing one of user/item/kind/ts");
        }
        std::string user = j["user"].is_string() ? j["user"].get<std::string>() : j["user"].dump();
        std::string item = j["item"].is_string() ? j["item"].get<std::string>() : j["item"].dump();
        std::string kind_s = j["kind"].is_string() ? j["kind"].get<std::string>() : j["kind"].dump();
        EventKind kind;
        if (kind_s == "view") {
            kind = EventKind::View;
        } else if (kind_s == "click") {
            kind = EventKind::Click;
        } else {
            parse_error(events_file, lineno, "unknown kind '" + kind_s + "'");
        }
        if (!j["ts"].is_number_integer() && !j["ts"].is_number_unsigned()) {
            parse_error(events_file, lineno, "ts must be an integer");
        }
        int64_t ts = j["ts"].get<int64_t>();
        if (ts < 0) parse_error(events_file, lineno, "negative ts");

        ++local.rows_read;
        auto [uit, uinserted] = user_index.emplace(user, user_ids.size());
        if (uinserted) {
            user_ids.push_back(user);
            per_user.emplace_back();
        }
        auto [iit, iinserted] = item_index.emplace(item, item_ids.size());
        if (iinserted) item_ids.push_back(item);
        per_user[uit->second].push_back(RawEvent{iit->second, kind, ts});
    }
    if (local.rows_read == 0) {
        throw std::runtime_error("empty dataset: no events in " + events_file);
    }
    if (stats) *stats = local;
    return assemble(std::move(user_ids), std::move(per_user), item_ids, /*min_events=*/1, stats);
}

}  // namespace led
