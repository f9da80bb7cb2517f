#pragma once

#include <string>

#include "led/timeline.hpp"

namespace led {

struct IngestStats {
    uint64_t users = 0;
    uint64_t items = 0;
    uint64_t events = 0;
    uint64_t rows_read = 0;
    uint64_t rows_filtered = 0;   // below min_rating
    uint64_t users_dropped = 0;   // below min_events
};

// MovieLens-style ratings.csv (userId,movieId,rating,timestamp). Ratings at
// or above min_rating become View events; users with fewer than min_events
// surviving events are dropped. Throws on malformed rows (with the line
// number) and when nothing survives the filters ("empty dataset").
TimelineSet ingest_ml20m(const std::string& ratings_file, double min_rating = 4.0,
                         int64_t min_events = 5, IngestStats* stats = nullptr);

// Generic event log: one JSON object per line with fields
//   user (string), item (string), kind ("view"|"click"), ts (integer seconds)
// Duplicate rows are kept as-is.
TimelineSet ingest_jsonl(const std::string& events_file, IngestStats* stats = nullptr);

}  // namespace led
