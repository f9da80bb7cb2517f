#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "led/common.hpp"

namespace led {

enum class EventKind : uint8_t { View = 0, Click = 1 };

struct Event {
    uint32_t item = 0;
    EventKind kind = EventKind::View;
    int64_t ts = 0;
};

struct Timeline {
    std::string user;
    std::vector<Event> events;  // sorted non-decreasing by ts, ties keep input order
};

// Bijective external-id <-> dense-index map plus per-item view/click counts.
// Indices are assigned by first appearance so rebuilds are reproducible.
class Vocabulary {
public:
    uint32_t add(const std::string& external_id);
    std::optional<uint32_t> find(const std::string& external_id) const;
    const std::string& external_id(uint32_t index) const { return ids_.at(index); }
    size_t size() const { return ids_.size(); }

    void bump(uint32_t index, EventKind kind);
    void set_counts(uint32_t index, uint64_t views, uint64_t clicks);
    uint64_t view_count(uint32_t index) const { return views_.at(index); }
    uint64_t click_count(uint32_t index) const { return clicks_.at(index); }
    uint64_t total_clicks() const { return total_clicks_; }

    void save(const std::string& path) const;  // LEDV
    static Vocabulary load(const std::string& path);

private:
    std::unordered_map<std::string, uint32_t> index_;
    std::vector<std::string> ids_;
    std::vector<uint64_t> views_;
    std::vector<uint64_t> clicks_;
    uint64_t total_clicks_ = 0;
};

struct TimelineSet {
    Vocabulary vocab;
    std::vector<Timeline> timelines;

    size_t item_count() const { return vocab.size(); }
    size_t user_count() const { return timelines.size(); }
    size_t event_count() const;
    bool has_clicks() const { return vocab.total_clicks() > 0; }

    void save(const std::string& path) const;  // LEDT
    static TimelineSet load(const std::string& path);
};

struct SplitSpec {
    double train_frac = 0.8;
    double val_frac = 0.1;
    double test_frac = 0.1;
    double input_fraction = 0.8;
    uint64_t seed = 42;

    // Throws on invalid fractions. Zero validation/test fractions are
    // accepted; callers get a warning through the returned flag.
    void validate() const;
};

struct UserSplit {
    TimelineSet train;
    TimelineSet validation;
    TimelineSet test;
    bool empty_split_warning = false;
};

// Disjoint user partition; every split shares the full vocabulary.
UserSplit split_users(const TimelineSet& ts, const SplitSpec& spec);

struct TimelineSplit {
    std::vector<uint32_t> input;   // item indices, original temporal order
    std::vector<uint32_t> target;  // item indices (click-filtered when requested)
};

struct SplitCounters {
    uint64_t too_short = 0;     // timelines with < 2 events
    uint64_t empty_target = 0;  // click-only target requested but none present
};

// Splits one timeline into input/target by position. |input| =
// round(input_fraction * T). shuffle=false keeps the temporal prefix as
// input. When click_targets is set, only Click events are kept on the
// target side. Returns nullopt (and bumps a counter) for unusable
// timelines.
std::optional<TimelineSplit> split_timeline(const Timeline& t, double input_fraction,
                                            uint64_t seed, bool shuffle, bool click_targets,
                                            SplitCounters* counters = nullptr);

}  // namespace led
