#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kper/periods.hpp"
#include "kper/report.hpp"
#include "kper/stats.hpp"
#include "kper/weights.hpp"

namespace kper {

// Period detection for streams containing wildcards, where a wildcard matches
// every character. Wildcards are replaced by a sentinel byte on the fly, the
// stream runs through mismatch-tolerant detection with a budget of two per
// wildcard (one wildcard can break alignment on both sides of a shift), and a
// period is kept only when each of its recorded mismatches involves the
// sentinel.
struct WildcardConfig {
  uint64_t n = 0;              // declared length; the buffered overload fills it in
  char wildcard = '?';
  char sentinel = '#';         // must not occur literally in the input
  uint64_t max_wildcards = 8;  // hard cap; also sizes the mismatch budget
  uint64_t seed = 0;
  uint64_t retry_limit = 3;
  bool matcher_compression = false;
  const WeightPlugin* weight = &zero_weight();
};

struct WildcardResult {
  std::vector<PeriodReport> reports;  // periods in [1..floor(n/2)]
  uint64_t wildcards = 0;             // wildcard occurrences seen
  RunStats stats;
  bool warning = false;
};

WildcardResult detect_wildcard_periods(CharSource& src, const WildcardConfig& cfg);
WildcardResult detect_wildcard_periods(const std::string& text, const WildcardConfig& cfg);

}  // namespace kper
