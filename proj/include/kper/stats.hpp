#pragma once

#include <cstdint>
#include <vector>

namespace kper {

enum class ByteCategory { Sketch = 0, Matcher = 1, Periods = 2 };

// Peak tracker for logical payload bytes, sampled at character boundaries.
class ByteLedger {
 public:
  void sample(ByteCategory c, uint64_t live_bytes) {
    size_t i = static_cast<size_t>(c);
    current_[i] = live_bytes;
    if (live_bytes > peak_[i]) peak_[i] = live_bytes;
  }
  uint64_t current(ByteCategory c) const { return current_[static_cast<size_t>(c)]; }
  uint64_t peak(ByteCategory c) const { return peak_[static_cast<size_t>(c)]; }
  uint64_t peak_total() const { return peak_[0] + peak_[1] + peak_[2]; }

 private:
  uint64_t current_[3] = {0, 0, 0};
  uint64_t peak_[3] = {0, 0, 0};
};

// Collects per-character processing durations and reports order statistics.
class TimeRecorder {
 public:
  void add_ns(uint64_t ns) { samples_.push_back(ns); }
  size_t count() const { return samples_.size(); }
  // Nearest-rank percentile (q in [0,1]) over the recorded samples.
  uint64_t percentile_ns(double q) const;
  uint64_t max_ns() const;

 private:
  std::vector<uint64_t> samples_;
};

struct RunStats {
  uint64_t seed = 0;
  uint64_t retries = 0;
  uint64_t chars = 0;
  uint64_t peak_bytes_sketch = 0;
  uint64_t peak_bytes_matcher = 0;
  uint64_t peak_bytes_periods = 0;
  uint64_t time_p50_ns = 0;
  uint64_t time_p90_ns = 0;
  uint64_t time_p99_ns = 0;
  uint64_t time_max_ns = 0;

  uint64_t peak_bytes_total() const {
    return peak_bytes_sketch + peak_bytes_matcher + peak_bytes_periods;
  }
};

}  // namespace kper
