#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kper/errors.hpp"
#include "kper/field.hpp"
#include "kper/mismatch_info.hpp"

namespace kper {

// Shared per-run randomness. Every sketch combined in one run must come
// from the same epoch (same fingerprint base).
struct RunContext {
  uint64_t seed_id = 0;
  Fe r;      // fingerprint base
  Fe r_inv;  // r^-1

  static RunContext from_seed(uint64_t seed);
};

// Summary of a string U allowing mismatch decoding up to budget k against
// any other same-length sketch from the same epoch:
//   s_sums[j] = sum_i enc(U[i])   * i^j        j = 0..2k+1
//   t_sums[j] = sum_i enc(U[i])^2 * i^j
//   fingerprint = sum_i enc(U[i]) * r^i
// The two spare syndrome indices (2k and 2k+1) are consistency checks; a
// budget-k' truncation for k' < k is the exact budget-k' sketch.
struct KMismatchSketch {
  uint64_t k = 0;
  uint64_t length = 0;
  std::vector<Fe> s_sums;
  std::vector<Fe> t_sums;
  Fe fingerprint;
  uint64_t seed_id = 0;

  size_t syndrome_count() const { return 2 * k + 2; }
  friend bool operator==(const KMismatchSketch& a, const KMismatchSketch& b) {
    return a.k == b.k && a.length == b.length && a.s_sums == b.s_sums &&
           a.t_sums == b.t_sums && a.fingerprint == b.fingerprint &&
           a.seed_id == b.seed_id;
  }
  friend bool operator!=(const KMismatchSketch& a, const KMismatchSketch& b) {
    return !(a == b);
  }

  size_t payload_bytes() const { return 8 * (4 + s_sums.size() + t_sums.size() + 1); }

  std::vector<unsigned char> serialize() const;
  static KMismatchSketch deserialize(const std::vector<unsigned char>& bytes);
};

enum class CompareStatus { Within, Exceeds, LengthMismatch };

struct CompareOutcome {
  CompareStatus status = CompareStatus::Exceeds;
  MismatchInfo mi;  // MI(X, Y) for compare(skX, skY), valid when Within
  bool within() const { return status == CompareStatus::Within; }
};

KMismatchSketch sketch_of_string(const std::string& s, uint64_t k,
                                 const RunContext& ctx);

// sk(UV) from sk(U), sk(V).
KMismatchSketch sketch_concat(const KMismatchSketch& u, const KMismatchSketch& v,
                              const RunContext& ctx);

enum class SplitSide { Left, Right };

// side=Left:  part = sk(U) given whole sk(UV), returns sk(V).
// side=Right: part = sk(V) given whole sk(UV), returns sk(U).
KMismatchSketch sketch_split(const KMismatchSketch& whole,
                             const KMismatchSketch& part, SplitSide side,
                             const RunContext& ctx);

// sk(U^times) without touching characters.
KMismatchSketch sketch_power(const KMismatchSketch& u, uint64_t times,
                             const RunContext& ctx);

// sk(V) from sk(U) and MI(U, V).
KMismatchSketch sketch_apply_mi(const KMismatchSketch& u, const MismatchInfo& mi,
                                const RunContext& ctx);

// Exact lower-budget sketch (prefix of the syndrome families).
KMismatchSketch sketch_truncate(const KMismatchSketch& u, uint64_t k);

// Decode the aligned differences of X and Y from their sketches. Within
// holds MI(X, Y) when the mismatch count fits the shared budget; any
// decode irregularity (locator failures, non-character magnitudes,
// fingerprint disagreement) reports Exceeds.
CompareOutcome sketch_compare(const KMismatchSketch& x, const KMismatchSketch& y,
                              const RunContext& ctx);

// Streaming construction: append one character at a time; snapshots are
// plain value copies and may be taken at any moment.
class SketchBuilder {
public:
  SketchBuilder(uint64_t k, const RunContext& ctx);

  void append(unsigned char c);
  uint64_t length() const { return length_; }
  uint64_t k() const { return k_; }

  KMismatchSketch snapshot() const;
  KMismatchSketch snapshot_truncated(uint64_t k) const;
  size_t payload_bytes() const { return 8 * (4 + 2 * s_sums_.size() + 3); }

private:
  const RunContext* ctx_;
  uint64_t k_;
  uint64_t length_ = 0;
  std::vector<Fe> s_sums_;
  std::vector<Fe> t_sums_;
  Fe fingerprint_;
  Fe r_pow_;  // r^length
};

}  // namespace kper
