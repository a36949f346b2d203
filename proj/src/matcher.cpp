#include "kper/matcher.hpp"

#include <algorithm>
#include <cassert>
#include <cstddef>

#include "kper/algebra.hpp"

namespace kper {

namespace {

uint64_t default_threshold(uint64_t k) { return 576 * std::max<uint64_t>(k, 1); }

// Cheap intermediate check: the aligned differences of two equal-length
// strings with hd <= k yield first-family syndrome differences generated by a
// linear recurrence of order <= k. Accepting on that alone can pass windows
// with larger distance, which a later full comparison rejects; it can never
// reject a window within budget.
bool light_match(const KMismatchSketch& a, const KMismatchSketch& b) {
  assert(a.length == b.length && a.seed_id == b.seed_id);
  uint64_t kk = std::min(a.k, b.k);
  size_t m = 2 * kk + 2;
  std::vector<Fe> diff(m);
  bool all_zero = true;
  for (size_t j = 0; j < m; ++j) {
    diff[j] = a.s_sums[j] - b.s_sums[j];
    if (!diff[j].is_zero()) all_zero = false;
  }
  if (all_zero) return true;
  return berlekamp_massey(diff).length() <= kk;
}

} // namespace

OwnedTextTap::OwnedTextTap(uint64_t budget_k, uint64_t lag, const RunContext& ctx,
                           const WeightPlugin* weight)
    : lag_(lag),
      main_(budget_k, ctx),
      trail_(budget_k, ctx),
      weight_(weight),
      w_total_(weight ? weight->empty() : Weight::undefined()),
      w_trail_(weight ? weight->empty() : Weight::undefined()) {}

void OwnedTextTap::push(unsigned char c) {
  main_.append(c);
  if (weight_) w_total_ = weight_->feed(w_total_, c);
  ring_.push_back(c);
  if (ring_.size() > lag_) {
    unsigned char old = ring_.front();
    ring_.pop_front();
    trail_.append(old);
    if (weight_) w_trail_ = weight_->feed(w_trail_, old);
  }
}

KMismatchSketch OwnedTextTap::snap(uint64_t k) const {
  return main_.snapshot_truncated(k);
}

KMismatchSketch OwnedTextTap::trail_snap(uint64_t k) const {
  return trail_.snapshot_truncated(k);
}

uint64_t OwnedTextTap::payload_bytes() const {
  return main_.payload_bytes() + trail_.payload_bytes() + ring_.size();
}

KMatcher::KMatcher(const MatcherOptions& opts, const RunContext& ctx, TextTap* shared_tap)
    : opts_(opts), ctx_(ctx), tap_(shared_tap) {
  threshold_ = opts_.compress_threshold ? opts_.compress_threshold
                                        : default_threshold(opts_.k);
  if (opts_.pattern_len > 0) {
    pat_len_ = opts_.pattern_len;
    build_ladder_plan();
    if (!tap_) {
      owned_tap_ = std::make_unique<OwnedTextTap>(opts_.k, first_len_, ctx_, opts_.weight);
      tap_ = owned_tap_.get();
    }
    assert(tap_->lag() == first_len_);
    assert(tap_->position() == 0);
    pattern_ready_ = true;
  } else {
    pat_builder_ = std::make_unique<SketchBuilder>(opts_.k, ctx_);
    pat_w_acc_ = opts_.weight ? opts_.weight->empty() : Weight::undefined();
  }
}

void KMatcher::build_ladder_plan() {
  assert(pat_len_ > 0);
  // Candidates materialize once their window reaches k+1 characters: any
  // shorter window is within budget unconditionally. Report lengths must
  // exceed k, so none precedes the materialization point.
  first_len_ = std::min(opts_.k + 1, pat_len_);
  std::vector<uint64_t> lens;
  for (uint64_t v = 1; v < pat_len_; v <<= 1) lens.push_back(v);
  lens.push_back(pat_len_);
  std::vector<uint64_t> reports{pat_len_};
  for (uint64_t len : pending_report_lens_) {
    assert(len <= pat_len_);
    reports.push_back(len);
    if (std::find(lens.begin(), lens.end(), len) == lens.end()) lens.push_back(len);
  }
  pending_report_lens_.clear();
  std::sort(lens.begin(), lens.end());
  rungs_.clear();
  rungs_.reserve(lens.size());
  for (uint64_t len : lens) {
    Rung r;
    r.len = len;
    r.report = std::find(reports.begin(), reports.end(), len) != reports.end();
    r.active = len >= first_len_;
    rungs_.push_back(std::move(r));
  }
  ladder_lens_ = lens;
  next_ladder_ = 0;
}

void KMatcher::feed_pattern_char(unsigned char c) {
  assert(pat_builder_ && !pattern_ready_);
  pat_builder_->append(c);
  if (opts_.weight) pat_w_acc_ = opts_.weight->feed(pat_w_acc_, c);
  ++pat_fed_;
  // Power-of-two prefixes are snapshotted as they pass.
  if ((pat_fed_ & (pat_fed_ - 1)) == 0) {
    pow2_snaps_.push_back({pat_fed_, pat_builder_->snapshot(), pat_w_acc_});
  } else if (!pending_report_lens_.empty() &&
             std::find(pending_report_lens_.begin(), pending_report_lens_.end(),
                       pat_fed_) != pending_report_lens_.end()) {
    pow2_snaps_.push_back({pat_fed_, pat_builder_->snapshot(), pat_w_acc_});
  }
}

void KMatcher::pattern_done() {
  assert(pat_builder_ && !pattern_ready_);
  if (pat_fed_ == 0) throw InvalidInput("empty pattern");
  pat_len_ = pat_fed_;
  build_ladder_plan();
  for (auto& rung : rungs_) {
    if (rung.len == pat_len_) {
      rung.pat_sk = pat_builder_->snapshot();
      rung.pat_w = pat_w_acc_;
      rung.pat_ready = true;
      continue;
    }
    for (auto& snap : pow2_snaps_) {
      if (snap.len == rung.len) {
        rung.pat_sk = snap.sk;
        rung.pat_w = snap.w;
        rung.pat_ready = true;
        break;
      }
    }
    assert(rung.pat_ready);
  }
  pow2_snaps_.clear();
  pat_builder_.reset();
  owned_tap_ = std::make_unique<OwnedTextTap>(opts_.k, first_len_, ctx_, opts_.weight);
  tap_ = owned_tap_.get();
  next_ladder_ = rungs_.size();
  pattern_ready_ = true;
}

void KMatcher::add_report_length(uint64_t len) {
  assert(len >= 1);
  if (!pattern_ready_ && pat_fed_ == 0) {
    // Standalone, before the pattern: remember the length, snapshot later.
    pending_report_lens_.push_back(len);
    return;
  }
  assert(len <= pat_len_);
  // No window of this length may already have passed, and no candidate may
  // have been retired for lack of it.
  assert(tap_ == nullptr || tap_->position() < opts_.start_lo + len - 1);
  assert(spawn_gated_ == 0);
  size_t idx = 0;
  while (idx < rungs_.size() && rungs_[idx].len < len) ++idx;
  if (idx < rungs_.size() && rungs_[idx].len == len) {
    rungs_[idx].report = true;
    return;
  }
  assert(len >= first_len_);
  Rung r;
  r.len = len;
  r.report = true;
  r.active = true;
  if (pattern_ready_ && opts_.pattern_len > 0) {
    // Interleaved: the ladder sketch is captured when the stream reaches len.
    assert(tap_->position() < len);
  } else {
    assert(false && "report length without a ladder sketch");
  }
  // Candidates queued for the next longer rung have not yet passed this
  // length; they owe it a visit first.
  r.runs = std::move(rungs_[idx].runs);
  r.cands = std::move(rungs_[idx].cands);
  r.seed = std::move(rungs_[idx].seed);
  rungs_[idx].runs.clear();
  rungs_[idx].cands.clear();
  rungs_[idx].seed.reset();
  rungs_.insert(rungs_.begin() + static_cast<ptrdiff_t>(idx), std::move(r));
  ladder_lens_.insert(std::lower_bound(ladder_lens_.begin(), ladder_lens_.end(), len), len);
  if (next_ladder_ > idx) next_ladder_ = std::min<uint64_t>(next_ladder_, idx);
}

bool KMatcher::oracle_covers(uint64_t x) const {
  if (opts_.prefix_covered) return opts_.prefix_covered(x);
  return opts_.prefix_oracle && opts_.prefix_oracle(x).has_value();
}

void KMatcher::maybe_capture_ladder(uint64_t pos) {
  while (next_ladder_ < rungs_.size() && rungs_[next_ladder_].pat_ready) ++next_ladder_;
  if (next_ladder_ >= rungs_.size()) return;
  Rung& rung = rungs_[next_ladder_];
  if (pos == rung.len) {
    if (opts_.compressed && opts_.prefix_oracle && oracle_covers(rung.len)) {
      rung.pat_virtual = true;
      rung.pat_ready = true;
      ++next_ladder_;
      return;
    }
    rung.pat_sk = tap_->snap(opts_.k);
    rung.pat_w = tap_->weight_total();
    rung.pat_ready = true;
    ++next_ladder_;
  }
}

std::vector<Occurrence> KMatcher::feed_text_char(unsigned char c) {
  assert(pattern_ready_);
  assert(owned_tap_ && "use on_shared_char with a shared tap");
  owned_tap_->push(c);
  return process_position();
}

std::vector<Occurrence> KMatcher::on_shared_char() {
  assert(pattern_ready_ && !owned_tap_);
  return process_position();
}

bool KMatcher::reachable_from(size_t rung_idx, uint64_t start) const {
  for (size_t i = rung_idx; i < rungs_.size(); ++i) {
    if (!rungs_[i].report) continue;
    if (start + rungs_[i].len - 1 <= opts_.end_hi) return true;
  }
  return false;
}

uint64_t KMatcher::rung_front_start(const Rung& rung) const {
  // Order of age: runs, then the held seed, then explicit candidates.
  if (!rung.runs.empty()) return rung.runs.front().first_start;
  if (rung.seed) return rung.seed->start;
  return rung.cands.front().start;
}

bool KMatcher::rung_has_front(const Rung& rung) const {
  return !rung.runs.empty() || rung.seed.has_value() || !rung.cands.empty();
}

KMismatchSketch KMatcher::run_member_prefix(const Run& run, uint64_t index) const {
  assert(!run.virt);
  if (index == 0) return run.first_sk;
  KMismatchSketch span = sketch_power(run.unit_sk, index, ctx_);
  MismatchInfo fix = run.defects.restricted(1, index * run.diff);
  if (!fix.empty()) span = sketch_apply_mi(span, fix, ctx_);
  return sketch_concat(run.first_sk, span, ctx_);
}

Weight KMatcher::run_member_weight(const Run& run, uint64_t index) const {
  if (!opts_.weight) return Weight::undefined();
  const WeightPlugin& wp = *opts_.weight;
  Weight w = wp.combine(run.first_w, wp.scale(run.unit_w, index));
  // Repetition-predicted weight corrected by the recorded deviations.
  Weight span = wp.update_from_mi(Weight::of(0), run.defects.restricted(1, index * run.diff));
  return wp.combine(w, span);
}

KMatcher::Cand KMatcher::rung_pop_front(Rung& rung) {
  if (!rung.runs.empty()) {
    Run& run = rung.runs.front();
    if (run.virt) {
      // Stays virtual: verification decides whether a sketch is ever needed.
      Cand c;
      c.start = run.first_start;
      c.pre_virtual = true;
      if (run.count == 1) {
        rung.runs.pop_front();
      } else {
        run.first_start += run.diff;
        --run.count;
      }
      return c;
    }
    Cand c;
    c.start = run.first_start;
    c.pre_sk = run.first_sk;
    c.pre_w = run.first_w;
    if (run.count == 1) {
      rung.runs.pop_front();
    } else {
      run.first_sk = run_member_prefix(run, 1);
      run.first_w = run_member_weight(run, 1);
      run.first_start += run.diff;
      --run.count;
      MismatchInfo rest;
      for (const auto& e : run.defects.entries())
        if (e.pos > run.diff) rest.add(e.pos - run.diff, e.left, e.right);
      run.defects = std::move(rest);
    }
    return c;
  }
  if (rung.seed) {
    Cand c = std::move(*rung.seed);
    rung.seed.reset();
    return c;
  }
  Cand c = std::move(rung.cands.front());
  rung.cands.pop_front();
  return c;
}

void KMatcher::fold_front(Rung& rung) {
  // Candidates whose prefix the oracle can reproduce need no storage at all.
  if (opts_.prefix_oracle && !rung.seed) {
    Cand& front = rung.cands.front();
    auto v = opts_.prefix_oracle(front.start - 1);
    if (v && v->first == front.pre_sk && v->second == front.pre_w) {
      if (!rung.runs.empty() && rung.runs.back().virt) {
        Run& run = rung.runs.back();
        if (run.count == 1) {
          assert(front.start > run.first_start);
          run.diff = front.start - run.first_start;
          run.count = 2;
          rung.cands.pop_front();
          return;
        }
        if (front.start == run.first_start + run.count * run.diff) {
          ++run.count;
          rung.cands.pop_front();
          return;
        }
      }
      Run run;
      run.first_start = front.start;
      run.count = 1;
      run.virt = true;
      rung.runs.push_back(std::move(run));
      rung.cands.pop_front();
      return;
    }
  }
  // Move the oldest explicit candidate into the run representation.
  Cand c = std::move(rung.cands.front());
  rung.cands.pop_front();
  if (!rung.seed) {
    if (!rung.runs.empty()) {
      Run& run = rung.runs.back();
      if (!run.virt && c.start == run.first_start + run.count * run.diff) {
        KMismatchSketch predicted = run_member_prefix(run, run.count);
        CompareOutcome cmp = sketch_compare(predicted, c.pre_sk, ctx_);
        uint64_t cap = 6 * std::max<uint64_t>(opts_.k, 1) + 4;
        if (cmp.within() && run.defects.size() + cmp.mi.size() <= cap) {
          uint64_t base = run.first_start - 1;
          bool ok = true;
          MismatchInfo merged = run.defects;
          for (const auto& e : cmp.mi.entries()) {
            // compare() was predicted-vs-actual; store actual on the right.
            uint64_t rel = e.pos - base;
            if (rel <= (run.count - 1) * run.diff ||
                (!merged.entries().empty() && merged.entries().back().pos >= rel)) {
              ok = false;
              break;
            }
            merged.add(rel, e.left, e.right);
          }
          if (ok) {
            run.defects = std::move(merged);
            ++run.count;
            return;
          }
        }
      }
    }
    rung.seed = std::move(c);
    return;
  }
  // Pair the held seed with this candidate to open a fresh run.
  Cand seed = std::move(*rung.seed);
  rung.seed.reset();
  assert(c.start > seed.start);
  Run run;
  run.first_start = seed.start;
  run.diff = c.start - seed.start;
  run.count = 2;
  run.first_sk = std::move(seed.pre_sk);
  run.first_w = seed.pre_w;
  run.unit_sk = sketch_split(c.pre_sk, run.first_sk, SplitSide::Left, ctx_);
  run.unit_w = opts_.weight ? opts_.weight->subtract(c.pre_w, run.first_w)
                            : Weight::undefined();
  rung.runs.push_back(std::move(run));
}

void KMatcher::push_candidate(size_t rung_idx, Cand&& c) {
  Rung& rung = rungs_[rung_idx];
  if (c.pre_virtual) {
    // The cover behind the oracle is a growing position prefix, so virtual
    // candidates precede every explicit one in start order at every rung;
    // nothing can be queued ahead of them and they extend the newest
    // progression directly.
    if (rung.cands.empty() && !rung.seed) {
      if (!rung.runs.empty() && rung.runs.back().virt) {
        Run& run = rung.runs.back();
        if (run.count == 1 && c.start > run.first_start) {
          run.diff = c.start - run.first_start;
          run.count = 2;
          return;
        }
        if (run.diff && c.start == run.first_start + run.count * run.diff) {
          ++run.count;
          return;
        }
      }
      Run run;
      run.first_start = c.start;
      run.count = 1;
      run.virt = true;
      rung.runs.push_back(std::move(run));
      return;
    }
    assert(false && "virtual candidate behind explicit queue entries");
    auto v = opts_.prefix_oracle(c.start - 1);
    if (v) {
      c.pre_sk = std::move(v->first);
      c.pre_w = v->second;
      c.pre_virtual = false;
    }
  }
  rung.cands.push_back(std::move(c));
  if (opts_.compressed) {
    while (rung.cands.size() > threshold_) fold_front(rung);
  }
}

void KMatcher::verify_candidate(size_t rung_idx, Cand&& c,
                                const KMismatchSketch& now_snap,
                                std::vector<Occurrence>* out) {
  Rung& rung = rungs_[rung_idx];
  assert(rung.pat_ready);
  if (c.pre_virtual) {
    // Interleaved windows compare against the stream's own prefix, so the
    // probe answers exactly; a candidate beyond budget at this length cannot
    // recover at a longer one.
    MismatchInfo mi;
    const int pr = opts_.window_probe
                       ? opts_.window_probe(c.start, rung.len, opts_.k, &mi)
                       : -1;
    if (pr == 0) return;
    if (pr == 1) {
      if (rung.report) {
        Occurrence occ;
        occ.endpoint = c.start + rung.len - 1;
        occ.pattern_len = rung.len;
        occ.mi = std::move(mi);
        occ.prefix_omitted = true;
        out->push_back(std::move(occ));
      }
      if (rung_idx + 1 < rungs_.size() && reachable_from(rung_idx + 1, c.start))
        push_candidate(rung_idx + 1, std::move(c));
      return;
    }
    auto v = opts_.prefix_oracle(c.start - 1);
    assert(v && "oracle coverage shrank under a virtual candidate");
    c.pre_sk = std::move(v->first);
    c.pre_w = v->second;
    c.pre_virtual = false;
  }
  KMismatchSketch pat_store;
  const KMismatchSketch* pat = &rung.pat_sk;
  if (rung.pat_virtual) {
    auto v = opts_.prefix_oracle(rung.len);
    assert(v && "oracle coverage shrank under a virtual ladder sketch");
    pat_store = std::move(v->first);
    pat = &pat_store;
  }
  KMismatchSketch window = sketch_split(now_snap, c.pre_sk, SplitSide::Left, ctx_);
  if (rung.report) {
    CompareOutcome cmp = sketch_compare(window, *pat, ctx_);
    if (!cmp.within()) return; // dead: distance only grows with length
    Occurrence occ;
    occ.endpoint = c.start + rung.len - 1;
    occ.pattern_len = rung.len;
    occ.mi = cmp.mi;
    occ.prefix_sketch = c.pre_sk;
    occ.prefix_weight = c.pre_w;
    out->push_back(std::move(occ));
  } else {
    if (!light_match(window, *pat)) return;
  }
  if (rung_idx + 1 < rungs_.size() && reachable_from(rung_idx + 1, c.start))
    push_candidate(rung_idx + 1, std::move(c));
}

std::vector<Occurrence> KMatcher::process_position() {
  uint64_t pos = tap_->position();
  std::vector<Occurrence> out;
  maybe_capture_ladder(pos);
  size_t first_active = 0;
  while (first_active < rungs_.size() && !rungs_[first_active].active) ++first_active;
  assert(first_active < rungs_.size());
  std::optional<KMismatchSketch> now_snap;
  auto snap_now = [&]() -> const KMismatchSketch& {
    if (!now_snap) now_snap = tap_->snap(opts_.k);
    return *now_snap;
  };
  // Materialize the start whose window just reached first_len_ characters;
  // it queues at the first active rung and is verified there in due course
  // (possibly right away when that rung's length equals the lag).
  if (pos >= opts_.start_lo + first_len_ - 1 && pos >= first_len_) {
    uint64_t start = pos - first_len_ + 1;
    if (reachable_from(first_active, start)) {
      Cand c;
      c.start = start;
      if (opts_.compressed && opts_.prefix_covered &&
          opts_.prefix_covered(start - 1)) {
        c.pre_virtual = true;
      } else {
        c.pre_sk = tap_->trail_snap(opts_.k);
        c.pre_w = tap_->trail_weight();
      }
      push_candidate(first_active, std::move(c));
    } else {
      ++spawn_gated_;
    }
  }
  for (size_t i = first_active; i < rungs_.size(); ++i) {
    Rung& rung = rungs_[i];
    while (rung_has_front(rung) && rung_front_start(rung) + rung.len - 1 == pos) {
      Cand c = rung_pop_front(rung);
      verify_candidate(i, std::move(c), snap_now(), &out);
    }
  }
  return out;
}

uint64_t KMatcher::live_candidates() const {
  uint64_t n = 0;
  for (const auto& rung : rungs_) {
    n += rung.cands.size() + rung.runs.size();
    if (rung.seed) ++n;
  }
  return n;
}

uint64_t KMatcher::max_level_candidates() const {
  uint64_t best = 0;
  for (const auto& rung : rungs_) {
    uint64_t n = rung.cands.size() + rung.runs.size() + (rung.seed ? 1 : 0);
    best = std::max(best, n);
  }
  return best;
}

void KMatcher::materialize_pats() {
  if (!opts_.prefix_oracle) return;
  for (auto& rung : rungs_) {
    if (!rung.pat_ready || !rung.pat_virtual) continue;
    auto v = opts_.prefix_oracle(rung.len);
    assert(v && "oracle coverage shrank under a virtual ladder sketch");
    rung.pat_sk = std::move(v->first);
    rung.pat_w = v->second;
    rung.pat_virtual = false;
  }
}

uint64_t KMatcher::payload_bytes() const {
  // Retained stream-derived payload: sketches, weights, queued candidates and
  // progression bookkeeping. The rung table itself is a fixed function of the
  // configuration and is not tallied. All candidate prefix sketches share one
  // budget, so their size is a constant and the walk stays O(#rungs + #runs).
  const uint64_t sk_b = 8 * (4 + 2 * (2 * opts_.k + 2) + 1);
  const uint64_t cand_b = 8 + sk_b + 9;
  uint64_t b = 0;
  for (const auto& rung : rungs_) {
    if (rung.pat_ready && !rung.pat_virtual) b += sk_b + 9;
    for (const auto& c : rung.cands) b += c.pre_virtual ? 9 : cand_b;
    if (rung.seed) b += rung.seed->pre_virtual ? 9 : cand_b;
    for (const auto& run : rung.runs) {
      if (run.virt) {
        b += 16;  // start, step, count
      } else {
        b += 24 + 2 * sk_b + 18 + 17 * run.defects.size();
      }
    }
  }
  if (owned_tap_) b += owned_tap_->payload_bytes();
  if (pat_builder_) b += pat_builder_->payload_bytes();
  return b;
}

} // namespace kper
