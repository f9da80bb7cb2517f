#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <optional>
#include <vector>

namespace led {

// Streaming latency histogram with fixed log-spaced buckets spanning
// 1 microsecond to 1 second (20 buckets per decade), plus underflow and
// overflow buckets. record() is lock-free; percentiles are read from a
// snapshot of the counters and reported as the bucket's upper edge.
class LatencyHistogram {
public:
    static constexpr int kBucketsPerDecade = 20;
    static constexpr int kDecades = 6;  // 1us .. 1s
    static constexpr int kBuckets = kBucketsPerDecade * kDecades + 2;

    LatencyHistogram();

    void record_us(double us);
    uint64_t count() const { return total_.load(std::memory_order_relaxed); }

    // q in (0, 1]; nullopt before any sample.
    std::optional<double> percentile_us(double q) const;

    // Upper edge of bucket b in microseconds (for tests and reporting).
    static double bucket_upper_edge_us(int b);
    static int bucket_for_us(double us);

    void reset();

private:
    std::array<std::atomic<uint64_t>, kBuckets> counts_;
    std::atomic<uint64_t> total_{0};
};

}  // namespace led
