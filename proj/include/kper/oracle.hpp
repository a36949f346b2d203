#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kper/mismatch_info.hpp"
#include "kper/report.hpp"
#include "kper/weights.hpp"

namespace kper {

// Definition-level reference implementations: direct loops, no sketching.
// Deliberately quadratic; callers cap input sizes.

// All k-mismatch periods p in [1..floor(n/2)+delta], each with
// MI(T[p..], T[..n-p+1]) and w(T[p..]).
std::vector<PeriodReport> naive_kmismatch_periods(
    const std::string& t, uint64_t k, uint64_t delta = 0,
    const WeightPlugin& w = zero_weight());

struct NaiveOccurrence {
  uint64_t endpoint;  // 1-based position of the window's last character
  MismatchInfo mi;    // MI(T[endpoint-|P|+1..endpoint], P)
};

std::vector<NaiveOccurrence> naive_occurrences(const std::string& p,
                                               const std::string& t, uint64_t k);

struct NaiveApproxPeriod {
  std::string q;
  uint64_t hd;  // hd(P, Q*)
};

// Smallest-length primitive Q with |Q| <= floor(|P|/(128*max(k,1))) and
// hd(P, Q*) <= 2k, reconstructed as the column-wise majority string;
// nullopt when no length qualifies.
std::optional<NaiveApproxPeriod> naive_approx_period(const std::string& p,
                                                     uint64_t k);

// Periods of a string with wildcards: p kept iff every aligned pair agrees
// or touches the wildcard byte. Range [1..floor(n/2)+delta].
std::vector<uint64_t> naive_wildcard_periods(const std::string& t,
                                             unsigned char wildcard,
                                             uint64_t delta = 0);

// True iff s occurs in s.s only at positions 1 and |s|+1.
bool is_primitive(const std::string& s);

}  // namespace kper
