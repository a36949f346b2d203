#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "kper/errors.hpp"
#include "kper/mismatch_info.hpp"
#include "kper/sketch.hpp"
#include "kper/weights.hpp"

namespace kper {

// Boyer-Moore style streaming majority vote: one stored value and a counter.
// If some item occurs more than half the time it is returned; otherwise the
// result is arbitrary.
template <typename T>
class MajorityVote {
 public:
  void feed(const T& item) {
    if (count_ == 0) {
      current_ = item;
      count_ = 1;
    } else if (*current_ == item) {
      ++count_;
    } else {
      --count_;
    }
    ++total_;
  }

  uint64_t total() const { return total_; }

  const T& result() const {
    if (total_ == 0) throw EmptyStream("majority vote over empty stream");
    return *current_;
  }

 private:
  std::optional<T> current_;
  uint64_t count_ = 0;
  uint64_t total_ = 0;
};

// A reported occurrence of a pattern prefix P[1..pattern_len] ending at
// `endpoint` (1-based, inclusive) in the streamed text.
struct Occurrence {
  uint64_t endpoint = 0;
  uint64_t pattern_len = 0;
  MismatchInfo mi;               // MI(T[endpoint-len+1..endpoint], P[1..len])
  KMismatchSketch prefix_sketch; // sketch of T[1..endpoint-len]
  Weight prefix_weight;          // w(T[1..endpoint-len]); undefined without a plugin
  // The prefix sketch was not attached; the consumer rebuilds it through its
  // prefix oracle (interleaved compressed mode only).
  bool prefix_omitted = false;
};

// Answers "sketch and weight of the pattern-source prefix of length x" when
// the caller can rebuild that prefix from auxiliary structure (e.g. a verified
// periodic decomposition of the stream). Returning nullopt means "not
// covered"; coverage must only ever grow for positions once answered.
using PrefixOracle =
    std::function<std::optional<std::pair<KMismatchSketch, Weight>>(uint64_t)>;

// Exact comparison of the window T[start..start+len-1] against the stream's
// own prefix T[1..len] (interleaved mode). Returns 1 and fills *mi when the
// Hamming distance is at most cap, 0 when it provably exceeds cap, and -1
// when the answer is outside the oracle's reach.
using WindowProbe =
    std::function<int(uint64_t start, uint64_t len, uint64_t cap, MismatchInfo* mi)>;

// Cheap coverage test matching the prefix oracle, with a stronger contract:
// once true for x it stays true for x forever, and true answers form a
// position prefix at any instant. Candidates spawned without a stored sketch
// rely on both properties.
using PrefixCover = std::function<bool(uint64_t)>;

struct MatcherOptions {
  uint64_t k = 0;
  // Occurrence windows must start at or after start_lo and end at or before
  // end_hi.
  uint64_t start_lo = 1;
  uint64_t end_hi = UINT64_MAX;
  // Nonzero: the pattern is the first pattern_len characters of the text
  // stream itself (single interleaved stream, no separate pattern phase).
  uint64_t pattern_len = 0;
  // Store overflowing candidate queues as arithmetic progressions.
  bool compressed = false;
  uint64_t compress_threshold = 0; // 0 = default 576*max(k,1)
  const WeightPlugin* weight = nullptr;
  // Optional (compressed + interleaved only): prefix sketches that match the
  // oracle are not stored at all; ladder and run members resolve through it.
  PrefixOracle prefix_oracle;
  // Optional companions to the oracle: candidates whose prefix the cover
  // already reaches are held as bare start positions and verified by the
  // probe; occurrences they produce carry prefix_omitted.
  WindowProbe window_probe;
  PrefixCover prefix_covered;
};

// Read-only view of a streamed text: the current prefix sketch, a lagged
// prefix sketch (exactly `lag` characters behind), and running weights.
// Lets many matchers share one set of builders.
class TextTap {
 public:
  virtual ~TextTap() = default;
  virtual uint64_t position() const = 0;
  virtual uint64_t lag() const = 0;
  virtual KMismatchSketch snap(uint64_t k) const = 0;       // sk_k(T[1..position])
  virtual KMismatchSketch trail_snap(uint64_t k) const = 0; // sk_k(T[1..position-lag])
  virtual Weight weight_total() const = 0;
  virtual Weight trail_weight() const = 0;
  virtual uint64_t payload_bytes() const = 0;
};

// Self-contained TextTap backed by two builders and a small ring buffer.
class OwnedTextTap : public TextTap {
 public:
  OwnedTextTap(uint64_t budget_k, uint64_t lag, const RunContext& ctx,
               const WeightPlugin* weight);
  void push(unsigned char c);

  uint64_t position() const override { return main_.length(); }
  uint64_t lag() const override { return lag_; }
  KMismatchSketch snap(uint64_t k) const override;
  KMismatchSketch trail_snap(uint64_t k) const override;
  Weight weight_total() const override { return w_total_; }
  Weight trail_weight() const override { return w_trail_; }
  uint64_t payload_bytes() const override;

 private:
  uint64_t lag_;
  SketchBuilder main_;
  SketchBuilder trail_;
  std::deque<unsigned char> ring_;
  const WeightPlugin* weight_;
  Weight w_total_;
  Weight w_trail_;
};

// Streaming k-mismatch matcher: reports every position p with
// start_lo+len-1 <= p <= end_hi and hd(T[p-len+1..p], P[1..len]) <= k for the
// full pattern length and any extra report lengths, at the moment T[p]
// arrives. Candidates survive a cascade of pattern-prefix checks at
// power-of-two lengths.
class KMatcher {
 public:
  // Standalone mode (opts.pattern_len == 0): construct, feed the pattern,
  // call pattern_done(), then feed text characters.
  // Interleaved mode (opts.pattern_len > 0): the pattern is the text prefix;
  // just feed text characters (or drive a shared tap and call
  // on_shared_char()).
  KMatcher(const MatcherOptions& opts, const RunContext& ctx,
           TextTap* shared_tap = nullptr);

  void feed_pattern_char(unsigned char c);
  void pattern_done();

  // Also report occurrences of P[1..len], for k < len <= pattern length. In
  // interleaved mode may be called mid-stream as long as no occurrence of
  // that length could have been missed yet; in standalone mode only before
  // the pattern is fed or for a length whose prefix sketch is already on the
  // ladder.
  void add_report_length(uint64_t len);

  // Owned-tap mode: push one text character, return occurrences ending here.
  std::vector<Occurrence> feed_text_char(unsigned char c);
  // Shared-tap mode: the owner already advanced the tap by one character.
  std::vector<Occurrence> on_shared_char();

  uint64_t pattern_len() const { return pat_len_; }
  // Ladder lengths: 1, 2, 4, ..., then the pattern length.
  const std::vector<uint64_t>& prefix_lengths() const { return ladder_lens_; }
  // Explicitly stored candidates plus one per compressed block.
  uint64_t live_candidates() const;
  // The same count for the fullest single level.
  uint64_t max_level_candidates() const;
  uint64_t payload_bytes() const;

  // Resolve every oracle-backed ladder sketch into storage; called when the
  // cover behind the oracle stops growing.
  void materialize_pats();

 private:
  struct Cand {
    uint64_t start = 0;
    // The prefix lives behind the prefix oracle; no sketch is stored.
    bool pre_virtual = false;
    KMismatchSketch pre_sk; // sk_k(T[1..start-1])
    Weight pre_w;
  };

  // Maximal block of equally spaced candidates stored as one progression.
  // Member i (0-based) starts at first_start + i*diff; its prefix sketch is
  // rebuilt from first_sk, powers of unit_sk, and the defect list (mismatch
  // info of the covering text versus pure repetition of the first block).
  struct Run {
    uint64_t first_start = 0;
    uint64_t diff = 0;
    uint64_t count = 0;
    KMismatchSketch first_sk;
    Weight first_w;
    KMismatchSketch unit_sk; // sk of T[first_start .. first_start+diff-1]
    Weight unit_w;
    MismatchInfo defects; // positions relative to first_start-1
    // Virtual runs keep no sketches; members are materialized through the
    // prefix oracle. diff == 0 until a second member fixes the step.
    bool virt = false;
  };

  struct Rung {
    uint64_t len = 0;
    bool report = false;
    // Inactive rungs (length below the candidate materialization lag) keep a
    // ladder sketch but no queue: every window passes them trivially.
    bool active = false;
    KMismatchSketch pat_sk;
    Weight pat_w;
    bool pat_ready = false;
    bool pat_virtual = false; // resolved through the prefix oracle on use
    std::deque<Run> runs;      // older candidates, verified first
    std::deque<Cand> cands;    // newer candidates
    std::optional<Cand> seed;  // pending first element of the next run
  };

  void build_ladder_plan();
  void finish_pattern_setup();
  bool oracle_covers(uint64_t x) const;
  void maybe_capture_ladder(uint64_t pos);
  std::vector<Occurrence> process_position();
  bool reachable_from(size_t rung_idx, uint64_t start) const;
  void push_candidate(size_t rung_idx, Cand&& c);
  void fold_front(Rung& rung);
  bool rung_has_front(const Rung& rung) const;
  uint64_t rung_front_start(const Rung& rung) const;
  Cand rung_pop_front(Rung& rung);
  KMismatchSketch run_member_prefix(const Run& run, uint64_t index) const;
  Weight run_member_weight(const Run& run, uint64_t index) const;
  void verify_candidate(size_t rung_idx, Cand&& c, const KMismatchSketch& now_snap,
                        std::vector<Occurrence>* out);

  struct PatSnap {
    uint64_t len;
    KMismatchSketch sk;
    Weight w;
  };

  MatcherOptions opts_;
  RunContext ctx_;
  TextTap* tap_ = nullptr;
  std::unique_ptr<OwnedTextTap> owned_tap_;

  // Pattern state (standalone mode only).
  std::unique_ptr<SketchBuilder> pat_builder_;
  std::vector<PatSnap> pow2_snaps_;
  Weight pat_w_acc_;
  uint64_t pat_fed_ = 0;
  bool pattern_ready_ = false;

  uint64_t pat_len_ = 0;
  uint64_t first_len_ = 0; // smallest verified length (lag of the tap)
  std::vector<uint64_t> ladder_lens_;
  std::vector<uint64_t> pending_report_lens_;
  std::vector<Rung> rungs_;
  uint64_t next_ladder_ = 0; // index into rungs_ of next pending capture
  uint64_t spawn_gated_ = 0;
  uint64_t threshold_ = 0;
};

} // namespace kper
