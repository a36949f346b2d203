#pragma once

#include <cstdint>

#include "kper/mismatch_info.hpp"
#include "kper/weights.hpp"

namespace kper {

// One detected period p of T: T[i] = T[i+p-1] up to the listed mismatches.
// p = 1 always qualifies with empty mi.
struct PeriodReport {
  uint64_t period = 0;
  Weight weight;     // w(T[p..n]); undefined if the plugin cannot supply it
  MismatchInfo mi;   // MI(T[p..n], T[1..n-p+1])

  friend bool operator==(const PeriodReport& a, const PeriodReport& b) {
    return a.period == b.period && a.weight == b.weight && a.mi == b.mi;
  }
};

}  // namespace kper
