#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "kper/report.hpp"
#include "kper/stats.hpp"
#include "kper/weights.hpp"

namespace kper {

// One pass over a character stream of declared length n, reporting every
// k-mismatch period in [1..floor(n/2)+delta].
struct StreamConfig {
  uint64_t n = 0;
  uint64_t k = 0;
  uint64_t delta = 0;
  uint64_t seed = 0;
  const WeightPlugin* weight = &zero_weight();
  uint64_t retry_limit = 3;
  bool matcher_compression = false;

  // Test knobs; zero means the built-in default.
  uint64_t naive_cutoff = 0;      // buffer-and-check inputs up to this n
  uint64_t degenerate_cutoff = 0; // levels with patterns this short test directly
  uint64_t capacity_override = 0; // candidate-table capacity per level
  bool force_pipeline = false;    // run the streaming pipeline even for tiny n
};

// Pull-based character supply. reopen() returns false for single-shot
// streams, in which case a failed run cannot be retried.
class CharSource {
 public:
  virtual ~CharSource() = default;
  virtual bool next(unsigned char* c) = 0;
  virtual bool reopen() = 0;
};

class StringSource : public CharSource {
 public:
  explicit StringSource(std::string s) : s_(std::move(s)) {}
  bool next(unsigned char* c) override {
    if (pos_ >= s_.size()) return false;
    *c = static_cast<unsigned char>(s_[pos_++]);
    return true;
  }
  bool reopen() override {
    pos_ = 0;
    return true;
  }

 private:
  std::string s_;
  size_t pos_ = 0;
};

struct DetectResult {
  std::vector<PeriodReport> reports;
  RunStats stats;
  // Set when a single-shot stream hit an internal consistency failure that a
  // reopenable source would have retried.
  bool warning = false;
};

DetectResult detect_periods(CharSource& src, const StreamConfig& cfg);
DetectResult detect_periods(const std::string& text, const StreamConfig& cfg);

// Pattern lengths l_j = floor(n * 2^j / 3^j) and the candidate intervals
// they serve; exposed for structural tests.
struct LevelPlan {
  struct Level {
    uint64_t j = 0;
    uint64_t len = 0;      // l_j
    uint64_t next_len = 0; // l_{j+1}
    uint64_t lo = 0;       // candidate periods in [lo..hi]
    uint64_t hi = 0;
  };
  std::vector<Level> levels; // only levels with nonempty intervals
  static LevelPlan build(uint64_t n);
};

}  // namespace kper
