#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <vector>

#include "kper/errors.hpp"

namespace kper {

// One aligned difference between two equal-length strings U and V:
// U[pos] = left != right = V[pos]. Positions are 1-based.
struct MismatchEntry {
  uint64_t pos;
  unsigned char left;
  unsigned char right;
  friend bool operator==(const MismatchEntry& a, const MismatchEntry& b) {
    return a.pos == b.pos && a.left == b.left && a.right == b.right;
  }
};

class MismatchInfo {
public:
  MismatchInfo() = default;
  explicit MismatchInfo(std::vector<MismatchEntry> entries)
      : entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end(),
              [](const MismatchEntry& a, const MismatchEntry& b) { return a.pos < b.pos; });
  }

  const std::vector<MismatchEntry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  void add(uint64_t pos, unsigned char left, unsigned char right) {
    assert(entries_.empty() || entries_.back().pos < pos);
    entries_.push_back({pos, left, right});
  }

  // MI(V, U) from MI(U, V).
  MismatchInfo flipped() const {
    MismatchInfo r;
    r.entries_.reserve(entries_.size());
    for (const auto& e : entries_) r.entries_.push_back({e.pos, e.right, e.left});
    return r;
  }

  // Entries with pos in [lo, hi], rebased so lo becomes position 1.
  MismatchInfo restricted(uint64_t lo, uint64_t hi) const {
    MismatchInfo r;
    for (const auto& e : entries_) {
      if (e.pos < lo || e.pos > hi) continue;
      r.entries_.push_back({e.pos - lo + 1, e.left, e.right});
    }
    return r;
  }

  MismatchInfo shifted(int64_t delta) const {
    MismatchInfo r;
    r.entries_.reserve(entries_.size());
    for (const auto& e : entries_) {
      r.entries_.push_back({static_cast<uint64_t>(static_cast<int64_t>(e.pos) + delta),
                            e.left, e.right});
    }
    return r;
  }

  friend bool operator==(const MismatchInfo& a, const MismatchInfo& b) {
    return a.entries_ == b.entries_;
  }

private:
  std::vector<MismatchEntry> entries_;
};

// MI(A, C) from MI(A, B) and MI(B, C) over the same coordinate range.
inline MismatchInfo compose(const MismatchInfo& ab, const MismatchInfo& bc) {
  MismatchInfo r;
  size_t i = 0, j = 0;
  const auto& e1 = ab.entries();
  const auto& e2 = bc.entries();
  while (i < e1.size() || j < e2.size()) {
    if (j == e2.size() || (i < e1.size() && e1[i].pos < e2[j].pos)) {
      // B = C here, so the A/B difference is also the A/C difference.
      r.add(e1[i].pos, e1[i].left, e1[i].right);
      ++i;
    } else if (i == e1.size() || e2[j].pos < e1[i].pos) {
      // A = B here.
      r.add(e2[j].pos, e2[j].left, e2[j].right);
      ++j;
    } else {
      if (e1[i].right != e2[j].left)
        throw InvalidInput("mismatch info composition disagrees on middle string");
      if (e1[i].left != e2[j].right) r.add(e1[i].pos, e1[i].left, e2[j].right);
      ++i;
      ++j;
    }
  }
  return r;
}

}  // namespace kper
