#include "led/histogram.hpp"

#include <cmath>

namespace led {

LatencyHistogram::LatencyHistogram() {
    for (auto& c : counts_) c.store(0, std::memory_order_relaxed);
}

int LatencyHistogram::bucket_for_us(double us) {
    if (us < 1.0) return 0;
    const double exact = std::log10(us) * kBucketsPerDecade;
    int b = static_cast<int>(exact) + 1;  // bucket 0 is underflow
    if (b > kBuckets - 1) b = kBuckets - 1;
    return b;
}

double LatencyHistogram::bucket_upper_edge_us(int b) {
    if (b <= 0) return 1.0;
    if (b >= kBuckets - 1) return 1e6;  // overflow reported at the 1 s cap
    return std::pow(10.0, static_cast<double>(b) / kBucketsPerDecade);
}

void LatencyHistogram::record_us(double us) {
    counts_[bucket_for_us(us)].fetch_add(1, std::memory_order_relaxed);
    total_.fetch_add(1, std::memory_order_relaxed);
}

std::optional<double> LatencyHistogram::percentile_us(double q) const {
    uint64_t snapshot[kBuckets];
    uint64_t total = 0;
    for (int b = 0; b < kBuckets; ++b) {
        snapshot[b] = counts_[b].load(std::memory_order_relaxed);
        total += snapshot[b];
    }
    if (total == 0) return std::nullopt;
    if (q <= 0.0) q = 1e-9;
    if (q > 1.0) q = 1.0;
    const uint64_t rank = static_cast<uint64_t>(std::ceil(q * static_cast<double>(total)));
    uint64_t cum = 0;
    for (int b = 0; b < kBuckets; ++b) {
        cum += snapshot[b];
        if (cum >= rank) return bucket_upper_edge_us(b);
    }
    return bucket_upper_edge_us(kBuckets - 1);
}

void LatencyHistogram::reset() {
    for (auto& c : counts_) c.store(0, std::memory_order_relaxed);
    total_.store(0, std::memory_order_relaxed);
}

}  // namespace led
