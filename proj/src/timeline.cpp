#include "led/timeline.hpp"

#include <algorithm>
#include <numeric>

#include "led/io.hpp"

namespace led {

uint32_t Vocabulary::add(const std::string& external_id) {
    auto it = index_.find(external_id);
    if (it != index_.end()) return it->second;
    uint32_t idx = static_cast<uint32_t>(ids_.size());
    index_.emplace(external_id, idx);
    ids_.push_back(external_id);
    views_.push_back(0);
    clicks_.push_back(0);
    return idx;
}

std::optional<uint32_t> Vocabulary::find(const std::string& external_id) const {
    auto it = index_.find(external_id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

void Vocabulary::bump(uint32_t index, EventKind kind) {
    if (kind == EventKind::View) {
        views_.at(index)++;
    } else {
        clicks_.at(index)++;
        total_clicks_++;
    }
}

void Vocabulary::set_counts(uint32_t index, uint64_t views, uint64_t clicks) {
    total_clicks_ -= clicks_.at(index);
    views_.at(index) = views;
    clicks_.at(index) = clicks;
    total_clicks_ += clicks;
}

void Vocabulary::save(const std::string& path) const {
    BinaryWriter w(path);
    w.magic("LEDV");
    w.u32(1);
    w.u64(ids_.size());
    for (size_t i = 0; i < ids_.size(); ++i) {
        w.str(ids_[i]);
        w.u64(views_[i]);
        w.u64(clicks_[i]);
    }
    w.close();
}

Vocabulary Vocabulary::load(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic("LEDV");
    uint32_t version = r.u32();
    if (version != 1) throw std::runtime_error(path + ": unsupported LEDV version");
    uint64_t n = r.u64();
    Vocabulary v;
    for (uint64_t i = 0; i < n; ++i) {
        std::string id = r.str();
        uint32_t idx = v.add(id);
        uint64_t views = r.u64();
        uint64_t clicks = r.u64();
        v.set_counts(idx, views, clicks);
    }
    return v;
}

size_t TimelineSet::event_count() const {
    size_t n = 0;
    for (const auto& t : timelines) n += t.events.size();
    return n;
}

void TimelineSet::save(const std::string& path) const {
    BinaryWriter w(path);
    w.magic("LEDT");
    w.u32(1);
    w.u64(vocab.size());
    w.u64(timelines.size());
    w.u64(event_count());
    for (uint32_t i = 0; i < vocab.size(); ++i) {
        w.str(vocab.external_id(i));
        w.u64(vocab.view_count(i));
        w.u64(vocab.click_count(i));
    }
    for (const auto& t : timelines) {
        w.str(t.user);
        w.u64(t.events.size());
        int64_t prev = 0;
        bool first = true;
        for (const auto& e : t.events) {
            w.u32(e.item);
            w.u8(static_cast<uint8_t>(e.kind));
            if (first) {
                w.i64(e.ts);
                first = false;
            } else {
                int64_t dt = e.ts - prev;
                if (dt < 0 || dt > static_cast<int64_t>(UINT32_MAX)) {
                    throw std::runtime_error("timestamp delta out of range for user " + t.user);
                }
                w.u32(static_cast<uint32_t>(dt));
            }
            prev = e.ts;
        }
    }
    w.close();
}

TimelineSet TimelineSet::load(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic("LEDT");
    uint32_t version = r.u32();
    if (version != 1) throw std::runtime_error(path + ": unsupported LEDT version");
    uint64_t n_items = r.u64();
    uint64_t n_users = r.u64();
    uint64_t n_events = r.u64();
    (void)n_events;
    TimelineSet ts;
    for (uint64_t i = 0; i < n_items; ++i) {
        std::string id = r.str();
        uint32_t idx = ts.vocab.add(id);
        uint64_t views = r.u64();
        uint64_t clicks = r.u64();
        ts.vocab.set_counts(idx, views, clicks);
    }
    ts.timelines.reserve(n_users);
    for (uint64_t u = 0; u < n_users; ++u) {
        Timeline t;
        t.user = r.str();
        uint64_t ne = r.u64();
        t.events.reserve(ne);
        int64_t prev = 0;
        for (uint64_t e = 0; e < ne; ++e) {
            Event ev;
            ev.item = r.u32();
            ev.kind = static_cast<EventKind>(r.u8());
            if (e == 0) {
                ev.ts = r.i64();
            } else {
                ev.ts = prev + static_cast<int64_t>(r.u32());
            }
            prev = ev.ts;
            t.events.push_back(ev);
        }
        ts.timelines.push_back(std::move(t));
    }
    return ts;
}

void SplitSpec::validate() const {
    auto bad = [](const char* field, const std::string& why) {
        throw std::runtime_error(std::string("split spec: ") + field + " " + why);
    };
    if (!(train_frac > 0.0 && train_frac < 1.0 + 1e-12)) bad("train_frac", "must be in (0,1]");
    if (val_frac < 0.0 || val_frac >= 1.0) bad("val_frac", "must be in [0,1)");
    if (test_frac < 0.0 || test_frac >= 1.0) bad("test_frac", "must be in [0,1)");
    double sum = train_frac + val_frac + test_frac;
    if (std::abs(sum - 1.0) > 1e-9) bad("fractions", "must sum to 1");
    if (!(input_fraction > 0.0 && input_fraction < 1.0)) bad("input_fraction", "must be in (0,1)");
}

UserSplit split_users(const TimelineSet& ts, const SplitSpec& spec) {
    spec.validate();
    const size_t n = ts.timelines.size();
    std::vector<uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(derive_seed(spec.seed, "user-split"));
    std::shuffle(order.begin(), order.end(), rng);

    size_t n_train = static_cast<size_t>(std::lround(spec.train_frac * static_cast<double>(n)));
    size_t n_val = static_cast<size_t>(std::lround(spec.val_frac * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);

    UserSplit out;
    out.train.vocab = ts.vocab;
    out.validation.vocab = ts.vocab;
    out.test.vocab = ts.vocab;
    for (size_t i = 0; i < n; ++i) {
        const Timeline& t = ts.timelines[order[i]];
        if (i < n_train) {
            out.train.timelines.push_back(t);
        } else if (i < n_train + n_val) {
            out.validation.timelines.push_back(t);
        } else {
            out.test.timelines.push_back(t);
        }
    }
    // Keep deterministic first-appearance order inside each split.
    std::unordered_map<std::string, size_t> pos;
    pos.reserve(n);
    for (size_t i = 0; i < n; ++i) pos.emplace(ts.timelines[i].user, i);
    auto by_original = [&](TimelineSet& s) {
        std::sort(s.timelines.begin(), s.timelines.end(),
                  [&](const Timeline& a, const Timeline& b) { return pos.at(a.user) < pos.at(b.user); });
    };
    by_original(out.train);
    by_original(out.validation);
    by_original(out.test);
    out.empty_split_warning = out.validation.timelines.empty() || out.test.timelines.empty();
    return out;
}

std::optional<TimelineSplit> split_timeline(const Timeline& t, double input_fraction,
                                            uint64_t seed, bool shuffle, bool click_targets,
                                            SplitCounters* counters) {
    const size_t n = t.events.size();
    if (n < 2) {
        if (counters) counters->too_short++;
        return std::nullopt;
    }
    size_t n_input = static_cast<size_t>(std::lround(input_fraction * static_cast<double>(n)));
    n_input = std::min(std::max<size_t>(n_input, 1), n - 1);

    std::vector<uint32_t> positions(n);
    std::iota(positions.begin(), positions.end(), 0u);
    if (shuffle) {
        Rng rng(seed);
        std::shuffle(positions.begin(), positions.end(), rng);
    }
    std::vector<bool> is_input(n, false);
    for (size_t i = 0; i < n_input; ++i) is_input[positions[i]] = true;

    TimelineSplit out;
    out.input.reserve(n_input);
    out.target.reserve(n - n_input);
    for (size_t i = 0; i < n; ++i) {
        const Event& e = t.events[i];
        if (is_input[i]) {
            out.input.push_back(e.item);
        } else if (!click_targets || e.kind == EventKind::Click) {
            out.target.push_back(e.item);
        }
    }
    if (out.target.empty()) {
        if (counters) counters->empty_target++;
        return std::nullopt;
    }
    return out;
}

}  // namespace led
