#include "kper/periods.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kper/errors.hpp"
#include "kper/matcher.hpp"
#include "kper/oracle.hpp"
#include "kper/sketch.hpp"

namespace kper {

LevelPlan LevelPlan::build(uint64_t n) {
  LevelPlan plan;
  const uint64_t half = n / 2;
  if (half == 0) return plan;
  using u128 = unsigned __int128;
  u128 p2 = 1, p3 = 1;
  for (uint64_t j = 1;; ++j) {
    p2 *= 2;
    p3 *= 3;
    const uint64_t len = static_cast<uint64_t>(u128(n) * p2 / p3);
    if (len == 0) break;
    const uint64_t next = static_cast<uint64_t>(u128(n) * p2 * 2 / (p3 * 3));
    Level lv;
    lv.j = j;
    lv.len = len;
    lv.next_len = next;
    lv.lo = (half > len) ? half - len : 1;
    lv.hi = (half >= next + 2) ? half - next - 1 : 0;
    if (lv.hi >= lv.lo) plan.levels.push_back(lv);
  }
  return plan;
}

namespace {

using Clock = std::chrono::steady_clock;

uint64_t kk_of(uint64_t k) { return k ? k : 1; }

uint64_t sk_payload(const KMismatchSketch& s) {
  return 8 * (4 + s.s_sums.size() + s.t_sums.size() + 1);
}

uint64_t sk_payload_k(uint64_t k) { return 8 * (4 + 2 * (2 * k + 2) + 1); }

uint64_t mi_payload(const MismatchInfo& mi) { return 17 * mi.size(); }

struct PrefVal {
  KMismatchSketch sk;
  Weight w;
};

using PrefFn = std::function<std::optional<PrefVal>(uint64_t)>;

// ---------------------------------------------------------------------------
// Prefix snapshots keyed by strictly ascending position. A compressed bank
// folds entries whose positions advance by a fixed step and whose sketches
// extend by one fixed block; entries the prefix oracle can reproduce keep no
// sketch at all.
class SnapBank {
 public:
  void configure(bool compressed, const PrefFn* oracle, const WeightPlugin* wp,
                 const RunContext* ctx) {
    compressed_ = compressed;
    oracle_ = oracle;
    wp_ = wp;
    ctx_ = ctx;
  }

  uint64_t logical_size() const { return logical_; }
  uint64_t payload_bytes() const { return bytes_; }

  void clear() {
    runs_.clear();
    logical_ = 0;
    bytes_ = 0;
  }

  void insert(uint64_t pos, const KMismatchSketch& sk, const Weight& w) {
    assert(runs_.empty() || pos > last_pos());
    ++logical_;
    if (compressed_ && oracle_) {
      if (auto v = (*oracle_)(pos); v && v->sk == sk && v->w == w) {
        absorb_virtual(pos);
        return;
      }
    }
    if (compressed_ && !runs_.empty() && !runs_.back().virt) {
      Run& r = runs_.back();
      if (r.count == 1) {
        // Any second explicit entry fixes the step; the unit block is the
        // split between the two snapshots, so the chain is exact by
        // construction.
        bytes_ -= run_bytes(r);
        r.step = pos - r.first;
        r.unit_sk = sketch_split(sk, r.first_sk, SplitSide::Left, *ctx_);
        r.unit_w = wp_->subtract(w, r.first_w);
        r.last_sk = sk;
        r.last_w = w;
        r.count = 2;
        bytes_ += run_bytes(r);
        return;
      }
      if (r.step && pos == r.first + r.count * r.step) {
        KMismatchSketch want = sketch_concat(r.last_sk, r.unit_sk, *ctx_);
        if (want == sk && wp_->combine(r.last_w, r.unit_w) == w) {
          r.last_sk = std::move(want);
          r.last_w = w;
          ++r.count;
          return;
        }
      }
    }
    Run r;
    r.first = pos;
    r.first_sk = sk;
    r.first_w = w;
    r.last_sk = sk;
    r.last_w = w;
    bytes_ += run_bytes(r);
    runs_.push_back(std::move(r));
  }

  // Trusted absorption: the caller guarantees the prefix oracle reproduces
  // this snapshot from the same stream, so no value is captured or compared.
  void insert_covered(uint64_t pos) {
    assert(runs_.empty() || pos > last_pos());
    ++logical_;
#ifndef NDEBUG
    if (logical_ % 64 == 0 && oracle_)
      assert((*oracle_)(pos) && "trusted absorption outside oracle coverage");
#endif
    absorb_virtual(pos);
  }

  bool contains(uint64_t pos) const { return locate(pos) != nullptr; }

  std::optional<PrefVal> find(uint64_t pos) const {
    const Run* r = locate(pos);
    if (!r) return std::nullopt;
    if (r->virt) {
      auto v = (*oracle_)(pos);
      assert(v && "oracle coverage shrank under a virtual bank run");
      return v;
    }
    if (pos == r->first) return PrefVal{r->first_sk, r->first_w};
    if (pos == r->first + (r->count - 1) * r->step)
      return PrefVal{r->last_sk, r->last_w};
    const uint64_t idx = (pos - r->first) / r->step;
    return PrefVal{
        sketch_concat(r->first_sk, sketch_power(r->unit_sk, idx, *ctx_), *ctx_),
        wp_->combine(r->first_w, wp_->scale(r->unit_w, idx))};
  }

  // Ascending (pos, value) traversal; virtual members resolve on the fly.
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& r : runs_) {
      if (r.virt) {
        for (uint64_t i = 0; i < r.count; ++i) {
          const uint64_t pos = r.first + i * r.step;
          auto v = (*oracle_)(pos);
          assert(v && "oracle coverage shrank under a virtual bank run");
          f(pos, *v);
        }
      } else if (r.count == 1) {
        f(r.first, PrefVal{r.first_sk, r.first_w});
      } else {
        PrefVal cur{r.first_sk, r.first_w};
        for (uint64_t i = 0;; ++i) {
          f(r.first + i * r.step, cur);
          if (i + 1 == r.count) break;
          cur.sk = sketch_concat(cur.sk, r.unit_sk, *ctx_);
          cur.w = wp_->combine(cur.w, r.unit_w);
        }
      }
    }
  }

 private:
  struct Run {
    uint64_t first = 0;
    uint64_t step = 0;
    uint64_t count = 1;
    bool virt = false;
    KMismatchSketch first_sk, unit_sk, last_sk;
    Weight first_w, unit_w, last_w;
  };

  static uint64_t run_bytes(const Run& r) {
    if (r.virt) return 24;
    if (r.count == 1) return 8 + sk_payload(r.first_sk) + 9;
    return 24 + 3 * (sk_payload(r.first_sk) + 9);
  }

  uint64_t last_pos() const {
    const Run& r = runs_.back();
    return r.first + (r.count - 1) * r.step;
  }

  void absorb_virtual(uint64_t pos) {
    if (!runs_.empty() && runs_.back().virt) {
      Run& r = runs_.back();
      if (r.count == 1) {
        r.step = pos - r.first;
        r.count = 2;
        return;
      }
      if (pos == r.first + r.count * r.step) {
        ++r.count;
        return;
      }
    }
    Run r;
    r.first = pos;
    r.virt = true;
    bytes_ += run_bytes(r);
    runs_.push_back(std::move(r));
  }

  const Run* locate(uint64_t pos) const {
    // Last run starting at or before pos.
    size_t lo = 0, hi = runs_.size();
    while (lo < hi) {
      size_t mid = (lo + hi) / 2;
      if (runs_[mid].first <= pos)
        lo = mid + 1;
      else
        hi = mid;
    }
    if (lo == 0) return nullptr;
    const Run& r = runs_[lo - 1];
    if (pos == r.first) return &r;
    if (!r.step) return nullptr;
    if ((pos - r.first) % r.step) return nullptr;
    if ((pos - r.first) / r.step >= r.count) return nullptr;
    return &r;
  }

  std::vector<Run> runs_;
  uint64_t logical_ = 0;
  uint64_t bytes_ = 0;
  bool compressed_ = false;
  const PrefFn* oracle_ = nullptr;
  const WeightPlugin* wp_ = nullptr;
  const RunContext* ctx_ = nullptr;
};

// ---------------------------------------------------------------------------
// Future positions at which a full-prefix snapshot must be captured while the
// stream passes; refcounted so independent consumers can share a slot.
class SnapSchedule {
 public:
  void configure(const PrefFn* oracle, std::function<bool(uint64_t)> covered) {
    oracle_ = oracle;
    covered_ = std::move(covered);
  }

  void request(uint64_t pos) {
    auto [it, fresh] = slots_.try_emplace(pos);
    ++it->second.refs;
  }

  void release(uint64_t pos) {
    auto it = slots_.find(pos);
    if (it == slots_.end()) return;
    if (--it->second.refs == 0) slots_.erase(it);
  }

  void on_char(uint64_t now, const OwnedTextTap& tap, uint64_t k) {
    auto it = slots_.find(now);
    if (it == slots_.end() || it->second.val || it->second.virt) return;
    // A position the prefix oracle covers when the stream passes it stays
    // covered for good, so the slot needs no stored value.
    if (covered_ && covered_(now))
      it->second.virt = true;
    else
      it->second.val = PrefVal{tap.snap(k), tap.weight_total()};
  }

  std::optional<PrefVal> find(uint64_t pos) const {
    auto it = slots_.find(pos);
    if (it == slots_.end()) return std::nullopt;
    if (it->second.virt) {
      auto v = (*oracle_)(pos);
      assert(v && "oracle coverage shrank under a virtual snapshot slot");
      return v;
    }
    if (!it->second.val) return std::nullopt;
    return *it->second.val;
  }

  uint64_t payload_bytes() const {
    uint64_t b = 0;
    for (const auto& [pos, s] : slots_)
      b += s.virt ? 13 : 12 + (s.val ? sk_payload(s.val->sk) + 9 : 0);
    return b;
  }

 private:
  struct Slot {
    uint32_t refs = 0;
    bool virt = false;
    std::optional<PrefVal> val;
  };
  std::map<uint64_t, Slot> slots_;
  const PrefFn* oracle_ = nullptr;
  std::function<bool(uint64_t)> covered_;
};

// ---------------------------------------------------------------------------
// The last `cap` streamed characters, addressable by absolute position.
class RawRing {
 public:
  void reset(uint64_t cap) {
    cap_ = cap;
    buf_.clear();
    end_ = 0;
  }

  void push(unsigned char c) {
    ++end_;
    if (!cap_) return;
    buf_.push_back(c);
    if (buf_.size() > cap_) buf_.pop_front();
  }

  bool covers(uint64_t pos) const {
    return pos >= 1 && pos <= end_ && pos + buf_.size() > end_;
  }

  unsigned char at(uint64_t pos) const {
    assert(covers(pos));
    return buf_[buf_.size() - (end_ - pos) - 1];
  }

  std::string substr(uint64_t lo, uint64_t hi) const {  // T[lo..hi]
    std::string s;
    s.reserve(hi >= lo ? hi - lo + 1 : 0);
    for (uint64_t p = lo; p <= hi; ++p) s.push_back(static_cast<char>(at(p)));
    return s;
  }

  uint64_t payload_bytes() const { return buf_.size(); }

 private:
  uint64_t cap_ = 0;
  uint64_t end_ = 0;
  std::deque<unsigned char> buf_;
};

// Length of the shortest string whose repetition covers s (classic prefix
// function). The prefix of that length is always primitive.
uint64_t smallest_period(const std::string& s) {
  const size_t m = s.size();
  if (m == 0) return 0;
  std::vector<uint32_t> pi(m, 0);
  for (size_t i = 1; i < m; ++i) {
    size_t j = pi[i - 1];
    while (j && s[i] != s[j]) j = pi[j - 1];
    if (s[i] == s[j]) ++j;
    pi[i] = static_cast<uint32_t>(j);
  }
  return m - pi[m - 1];
}

// ---------------------------------------------------------------------------
// Running lossless encoding of the streamed text as repetitions of one short
// block plus a list of positional defects. While the defect list stays under
// its cap the encoding covers the whole prefix read so far; prefix sketches,
// window comparisons, and grid defect lists are then answered by defect
// arithmetic instead of stored snapshots. When the defect list overflows the
// coder rebases onto the exact smallest period of a prefix window; when no
// block of bounded length fits, it freezes and keeps its last covered prefix
// for the rest of the stream (coverage never shrinks).
class PrefixCoder {
 public:
  static constexpr uint64_t kBlockMax = 128;

  PrefixCoder(uint64_t k, const RunContext& ctx, const WeightPlugin& wp)
      : cap_(32 * kk_of(k) + 16), ctx_(ctx), wp_(&wp) {}

  void push(unsigned char c) {
    ++now_;
    if (frozen_) return;
    if (now_ == 1) {
      q_ = 1;
      rawq_.assign(1, static_cast<char>(c));
      on_block_changed();
      return;
    }
    const unsigned char want = block_char(now_);
    if (c != want) defects_.add(now_, want, c);
    if (defects_.size() > cap_) rebase();
  }

  bool frozen() const { return frozen_; }
  uint64_t cover_end() const { return frozen_ ? freeze_end_ : now_; }
  bool covers(uint64_t x) const { return x <= cover_end(); }

  // T[lo..hi] reconstructed from the encoding.
  std::string decode(uint64_t lo, uint64_t hi) const {
    assert(lo >= 1 && hi <= cover_end());
    std::string s;
    if (hi < lo) return s;
    s.reserve(hi - lo + 1);
    for (uint64_t p = lo; p <= hi; ++p)
      s.push_back(static_cast<char>(block_char(p)));
    const auto& es = defects_.entries();
    for (size_t i = first_defect_at(lo); i < es.size() && es[i].pos <= hi; ++i)
      s[es[i].pos - lo] = static_cast<char>(es[i].right);
    return s;
  }

  // (sk_budget(T[1..x]), w(T[1..x])) for covered x.
  PrefVal synth(uint64_t x, uint64_t budget) {
    assert(covers(x));
    if (x == 0)
      return PrefVal{sketch_of_string(std::string(), budget, ctx_),
                     wp_->empty()};
    for (auto& sl : slots_)
      if (sl.budget == budget && sl.x == x) return PrefVal{sl.sk, sl.w};
    Slot* base = nullptr;
    for (auto& sl : slots_)
      if (sl.budget == budget && sl.x && sl.x < x && x - sl.x <= 4 * q_ &&
          (!base || sl.x > base->x))
        base = &sl;
    PrefVal out;
    if (base) {
      const std::string part = decode(base->x + 1, x);
      out.sk = sketch_concat(base->sk, sketch_of_string(part, budget, ctx_),
                             ctx_);
      out.w = wp_->combine(base->w, wp_->of_string(part));
    } else {
      const uint64_t m = x / q_, r = x % q_;
      if (m == 0) {
        const std::string part = rawq_.substr(0, r);
        out.sk = sketch_of_string(part, budget, ctx_);
        out.w = wp_->of_string(part);
      } else {
        out.sk = sketch_power(block_sketch(budget), m, ctx_);
        out.w = wp_->scale(block_weight(), m);
        if (r) {
          const std::string part = rawq_.substr(0, r);
          out.sk = sketch_concat(out.sk,
                                 sketch_of_string(part, budget, ctx_), ctx_);
          out.w = wp_->combine(out.w, wp_->of_string(part));
        }
      }
      const MismatchInfo mi = defects_.restricted(1, x);
      if (!mi.empty()) {
        out.sk = sketch_apply_mi(out.sk, mi, ctx_);
        out.w = wp_->update_from_mi(out.w, mi);
      }
    }
    Slot& sl = slots_[slot_next_];
    slot_next_ = (slot_next_ + 1) % slots_.size();
    sl.budget = budget;
    sl.x = x;
    sl.sk = out.sk;
    sl.w = out.w;
    return out;
  }

  // Exact comparison of T[s..s+len-1] against T[1..len]: 1 and *mi when the
  // distance is at most cap, 0 when it exceeds cap, -1 when out of reach.
  int probe(uint64_t s, uint64_t len, uint64_t cap, MismatchInfo* mi) const {
    MismatchInfo out;
    if (len == 0) {
      if (mi) *mi = std::move(out);
      return 1;
    }
    if (s == 0 || s + len - 1 > cover_end()) return -1;
    if (s == 1) {
      if (mi) *mi = std::move(out);
      return 1;
    }
    const uint64_t r = (s - 1) % q_;
    const auto& es = defects_.entries();
    if (r == 0) {
      // Aligned: block predictions agree on both sides, so every difference
      // touches a recorded defect. Merge the two defect streams by offset.
      const uint64_t w_hi = s + len - 1;
      size_t i = first_defect_at(s);
      size_t j = 0;
      while (true) {
        const uint64_t o1 = (i < es.size() && es[i].pos <= w_hi)
                                ? es[i].pos - (s - 1)
                                : UINT64_MAX;
        const uint64_t o2 =
            (j < es.size() && es[j].pos <= len) ? es[j].pos : UINT64_MAX;
        if (o1 == UINT64_MAX && o2 == UINT64_MAX) break;
        if (o1 < o2) {
          if (out.size() == cap) return 0;
          out.add(o1, es[i].right, block_char(o1));
          ++i;
        } else if (o2 < o1) {
          if (out.size() == cap) return 0;
          out.add(o2, es[j].left, es[j].right);
          ++j;
        } else {
          if (es[i].right != es[j].right) {
            if (out.size() == cap) return 0;
            out.add(o1, es[i].right, es[j].right);
          }
          ++i;
          ++j;
        }
      }
    } else {
      // Misaligned: each whole block contributes at least the rotation cost
      // in pure-prediction differences, and each defect can cancel at most
      // two (once per side of the comparison).
      const uint64_t nfull = len / q_;
      if (nfull * rot_cost_[r] > cap + 2 * defects_.size()) return 0;
      if (len > (1u << 17)) return -1;  // bound inconclusive, span too wide
      const std::string a = decode(s, s + len - 1);
      const std::string b = decode(1, len);
      for (uint64_t o = 0; o < len; ++o) {
        if (a[o] == b[o]) continue;
        if (out.size() == cap) return 0;
        out.add(o + 1, static_cast<unsigned char>(a[o]),
                static_cast<unsigned char>(b[o]));
      }
    }
    if (mi) *mi = std::move(out);
    return 1;
  }

  // Exact MI(T[1..len], V^(len/|V|)) when V is a stack of coder blocks;
  // nullopt when V is incompatible with the encoding or len is uncovered.
  std::optional<MismatchInfo> grid_mi(const std::string& v,
                                      uint64_t len) const {
    if (len == 0 || len > cover_end()) return std::nullopt;
    if (v.empty() || v.size() % q_ || len % v.size()) return std::nullopt;
    for (size_t i = 0; i < v.size(); ++i)
      if (v[i] != rawq_[i % q_]) return std::nullopt;
    MismatchInfo out;
    for (const auto& e : defects_.entries()) {
      if (e.pos > len) break;
      out.add(e.pos, e.right, e.left);
    }
    return out;
  }

  uint64_t payload_bytes() const {
    uint64_t b = rawq_.size() + 17 * defects_.size() + 2 * rot_cost_.size();
    for (const auto& [budget, sk] : skq_) b += sk_payload(sk);
    if (have_wq_) b += 9;
    for (const auto& sl : slots_)
      if (sl.x) b += 16 + sk_payload(sl.sk) + 9;
    return b;
  }

 private:
  struct Slot {
    uint64_t budget = 0;
    uint64_t x = 0;
    KMismatchSketch sk;
    Weight w;
  };

  unsigned char block_char(uint64_t pos) const {
    return static_cast<unsigned char>(rawq_[(pos - 1) % q_]);
  }

  size_t first_defect_at(uint64_t pos) const {
    const auto& es = defects_.entries();
    return static_cast<size_t>(
        std::lower_bound(es.begin(), es.end(), pos,
                         [](const MismatchEntry& e, uint64_t v) {
                           return e.pos < v;
                         }) -
        es.begin());
  }

  const KMismatchSketch& block_sketch(uint64_t budget) {
    auto it = skq_.find(budget);
    if (it == skq_.end())
      it = skq_.emplace(budget, sketch_of_string(rawq_, budget, ctx_)).first;
    return it->second;
  }

  const Weight& block_weight() {
    if (!have_wq_) {
      wq_ = wp_->of_string(rawq_);
      have_wq_ = true;
    }
    return wq_;
  }

  void on_block_changed() {
    skq_.clear();
    have_wq_ = false;
    rot_cost_.assign(q_, 0);
    for (uint64_t r = 1; r < q_; ++r)
      for (uint64_t i = 0; i < q_; ++i)
        if (rawq_[(i + r) % q_] != rawq_[i]) ++rot_cost_[r];
    // Cached synthesized values stay valid: they describe the text itself,
    // not the encoding.
  }

  // Count the whole prefix against a candidate block, aborting past the
  // adoption threshold. Reads the current encoding, never the raw stream.
  bool recount(const std::string& nb, MismatchInfo* fresh) const {
    const uint64_t p = nb.size();
    const auto& es = defects_.entries();
    MismatchInfo out;
    size_t di = 0;
    uint64_t rq = 0, rp = 0;
    for (uint64_t pos = 1; pos <= now_; ++pos) {
      unsigned char actual = static_cast<unsigned char>(rawq_[rq]);
      if (di < es.size() && es[di].pos == pos) {
        actual = es[di].right;
        ++di;
      }
      const unsigned char want = static_cast<unsigned char>(nb[rp]);
      if (actual != want) {
        if (out.size() == cap_ / 2) return false;
        out.add(pos, want, actual);
      }
      if (++rq == q_) rq = 0;
      if (++rp == p) rp = 0;
    }
    *fresh = std::move(out);
    return true;
  }

  void rebase() {
    if (++rebases_ > kRebaseLimit) {
      freeze();
      return;
    }
    // Try the exact smallest period of prefix windows, widest first; a
    // window clipped before local damage can still expose the global block.
    for (uint64_t w = std::min<uint64_t>(now_, 2 * kBlockMax); w >= 1;
         w /= 2) {
      const std::string pref = decode(1, w);
      const uint64_t p = smallest_period(pref);
      if (p > kBlockMax || p == q_) continue;
      const std::string nb = pref.substr(0, p);
      MismatchInfo fresh;
      if (!recount(nb, &fresh)) continue;
      q_ = p;
      rawq_ = nb;
      defects_ = std::move(fresh);
      on_block_changed();
      return;
    }
    freeze();
  }

  void freeze() {
    frozen_ = true;
    freeze_end_ = now_;  // the overflowing defect was recorded: still lossless
  }

  static constexpr uint64_t kRebaseLimit = 24;

  const uint64_t cap_;
  RunContext ctx_;
  const WeightPlugin* wp_;

  uint64_t now_ = 0;
  uint64_t q_ = 0;
  std::string rawq_;
  MismatchInfo defects_;
  bool frozen_ = false;
  uint64_t freeze_end_ = 0;
  uint64_t rebases_ = 0;
  std::vector<uint16_t> rot_cost_;

  std::map<uint64_t, KMismatchSketch> skq_;  // block sketch per budget
  Weight wq_;
  bool have_wq_ = false;
  std::array<Slot, 3> slots_;
  size_t slot_next_ = 0;
};

// ---------------------------------------------------------------------------
// Candidate periods tested head-on at the end of the stream. Each candidate p
// needs sk(T[1..p-1]) and sk(T[1..n-p+1]); contiguous position ranges are
// captured as one base snapshot plus the raw characters that follow it.
class DirectTester {
 public:
  void add_periods(uint64_t lo, uint64_t hi) {
    if (lo >= 1 && lo <= hi) spans_.push_back({lo, hi});
  }

  void prepare(uint64_t n, uint64_t k, const RunContext& ctx,
               const WeightPlugin& wp) {
    n_ = n;
    k_ = k;
    std::vector<std::pair<uint64_t, uint64_t>> want;
    for (auto [lo, hi] : spans_) {
      for (uint64_t p = lo; p <= hi; ++p) periods_.push_back(p);
      want.push_back({lo - 1, hi - 1});
      want.push_back({n - hi + 1, n - lo + 1});
    }
    std::sort(periods_.begin(), periods_.end());
    periods_.erase(std::unique(periods_.begin(), periods_.end()),
                   periods_.end());
    std::sort(want.begin(), want.end());
    for (auto [a, b] : want) {
      if (!ranges_.empty() && a <= ranges_.back().hi + 1)
        ranges_.back().hi = std::max(ranges_.back().hi, b);
      else
        ranges_.push_back(Range{a, b});
    }
    for (auto& r : ranges_) {
      if (r.lo == 0) {
        r.base_sk = sketch_of_string(std::string(), k_, ctx);
        r.base_w = wp.empty();
        r.base_ready = true;
      }
    }
  }

  void on_char(uint64_t now, unsigned char c, const OwnedTextTap& tap) {
    for (auto& r : ranges_) {
      if (now == r.lo) {
        r.base_sk = tap.snap(k_);
        r.base_w = tap.weight_total();
        r.base_ready = true;
      } else if (now > r.lo && now <= r.hi) {
        r.chars.push_back(static_cast<char>(c));
      }
    }
  }

  std::optional<PrefVal> prefix(uint64_t x, const RunContext& ctx,
                                const WeightPlugin& wp) const {
    for (const auto& r : ranges_) {
      if (x < r.lo || x > r.hi) continue;
      if (!r.base_ready) return std::nullopt;
      if (x == r.lo) return PrefVal{r.base_sk, r.base_w};
      if (x - r.lo > r.chars.size()) return std::nullopt;
      const std::string part = r.chars.substr(0, x - r.lo);
      return PrefVal{
          sketch_concat(r.base_sk, sketch_of_string(part, k_, ctx), ctx),
          wp.combine(r.base_w, wp.of_string(part))};
    }
    return std::nullopt;
  }

  const std::vector<uint64_t>& periods() const { return periods_; }

  uint64_t payload_bytes() const {
    uint64_t b = 0;
    for (const auto& r : ranges_)
      b += (r.base_ready ? sk_payload(r.base_sk) + 9 : 0) + r.chars.size() + 16;
    return b;
  }

 private:
  struct Range {
    uint64_t lo = 0, hi = 0;
    bool base_ready = false;
    KMismatchSketch base_sk;
    Weight base_w;
    std::string chars;  // T[lo+1..], captured up to hi
  };

  uint64_t n_ = 0, k_ = 0;
  std::vector<std::pair<uint64_t, uint64_t>> spans_;
  std::vector<uint64_t> periods_;
  std::vector<Range> ranges_;
};

// Exact confirmation of period p: T[p..n] against T[1..n-p+1], both derived
// from full-prefix snapshots.
std::optional<MismatchInfo> candidate_test(const KMismatchSketch& whole,
                                           const KMismatchSketch& pre_sk,
                                           const KMismatchSketch& suf_sk,
                                           uint64_t k, const RunContext& ctx) {
  if (pre_sk.length + suf_sk.length != whole.length) return std::nullopt;
  KMismatchSketch rest = sketch_split(whole, pre_sk, SplitSide::Left, ctx);
  auto cmp = sketch_compare(rest, suf_sk, ctx);
  if (!cmp.within() || cmp.mi.size() > k) return std::nullopt;
  return std::move(cmp.mi);
}

// ---------------------------------------------------------------------------

// An occurrence awaiting its staged prefix checks.
struct Pending {
  uint64_t s = 0;              // window start; candidate period if confirmed
  bool virt = false;           // prefix reproducible through level synthesis
  KMismatchSketch pre_sk;      // sk(T[1..s-1]) for explicit entries
  Weight pre_w;
  bool have_occ = false;
  MismatchInfo occ_mi;         // MI of the original full-pattern window
  MismatchInfo miA;            // MI(T[s..s+|P''|-1], P'') once stage A passed
  bool have_suf = false;       // synthesized partner snapshot held
  KMismatchSketch suf_sk;
  Weight suf_w;
  uint64_t suf_u = 0;
  bool suf_sched = false;      // partner requested from the snapshot schedule
};

// Consecutive same-shape occurrences whose prefixes the level can synthesize:
// only the start progression is kept.
struct VirtRun {
  uint64_t s0 = 0;
  uint64_t step = 0;
  uint64_t count = 1;
};

// A speculative window for recovering the partial block at the end of a
// pattern's periodic decomposition; cross-checked against the raw block.
struct SuffixSpec {
  uint64_t start = 0;  // window start of the short occurrence
  uint64_t x = 0;      // its endpoint
  uint64_t r = 0;      // residue length
  uint64_t want = 0;   // scheduled snapshot position x + r
  bool lean = false;   // at-x snapshot reproducible through the prefix coder
  KMismatchSketch at_x;
  Weight w_x;
};

uint64_t pending_bytes(const Pending& e) {
  uint64_t b = 8 + 1;
  if (!e.virt) b += sk_payload(e.pre_sk) + 9;
  if (e.have_occ) b += mi_payload(e.occ_mi);
  b += mi_payload(e.miA);
  if (e.have_suf) b += sk_payload(e.suf_sk) + 9;
  return b;
}

// Per-level streaming state: one matcher, the nonperiodic candidate banks,
// and the periodic machinery (block vote, extension, staged checks).
struct LevelState {
  LevelPlan::Level lv;
  uint64_t lo = 0, hi = 0, len = 0;
  bool armed = false;

  std::unique_ptr<KMatcher> matcher;

  // Nonperiodic path.
  SnapBank pref, suf;
  bool bottom = false;

  // Shift scan: saturating mismatch counters per candidate block length.
  uint64_t W = 0;
  std::vector<uint8_t> counts;
  bool scanning = false;
  uint64_t q = 0;
  bool q_dead = false;

  // Block majority vote and the raw block hunt. While the prefix coder is
  // live the vote runs on raw block strings and no sketch machinery is built.
  bool arith = false;
  uint64_t b0 = 0;
  uint64_t vote_B = 0;
  MajorityVote<KMismatchSketch> vote_sk;
  MajorityVote<Weight> vote_w;
  MajorityVote<std::string> vote_raw;
  uint64_t last_boundary = 0;
  bool have_boundary = false;
  KMismatchSketch boundary_sk;  // running block boundary snapshot
  Weight boundary_w;
  std::string cur_block;
  bool vote_done = false;
  uint64_t vote_pos = 0;
  KMismatchSketch skQ3, skQk;
  Weight wQ;
  std::string rawQ;
  bool rawq_done = false;
  bool periodic_dead = false;

  // Extension along the block grid.
  uint64_t lambda = 0, bound = 0, first_grid = 0;
  uint64_t lambda_len = 0;  // short report length registered with the matcher
  KMismatchSketch skP1, skP2;  // full-budget snapshots at the last two grid points
  Weight wP1, wP2;
  bool have_p1 = false;
  MismatchInfo cur_mi;  // MI(T[1..g], Q-grid) at the last passing grid point
  bool have_cur = false;
  MismatchInfo m_pq;
  bool have_m_pq = false;
  std::map<uint64_t, std::pair<unsigned char, unsigned char>> dcov;
  uint64_t cov_end = 0;
  KMismatchSketch pw3;  // running power of skQ3 along the grid
  uint64_t pw3_m = 0;

  // Exit state.
  bool ext_exited = false;
  bool ap = false;
  uint64_t lp = 0, lpp = 0;
  KMismatchSketch p1_k, p2_k;
  Weight w_p1, w_p2;
  MismatchInfo mi_lp;   // MI(T[1..lp], Q-grid), FP exits only
  bool have_mi_lp = false;
  MismatchInfo mi_lpp;  // MI(T[1..lpp], Q-grid)
  bool have_mi_lpp = false;
  uint64_t s_cap = 0;
  std::string edge_chars;  // T[lpp+1..lp-1] at two outermost levels
  bool edge_ready = false;

  // Staged checks.
  std::deque<Pending> pend;     // awaiting stage A, ascending starts
  std::deque<VirtRun> vruns;    // ditto, synthesizable progressions
  std::deque<Pending> await_b;  // stage A passed, awaiting stage B
  uint64_t pend_bytes = 0;
  uint64_t await_bytes = 0;

  // Confirmed-start structure.
  SnapBank ap_pref, ap_suf;
  std::map<uint64_t, PrefVal> ap_suf_extra;
  bool ap_dead = false;
  uint64_t s1 = 0;
  bool have_s1 = false;
  std::deque<VirtRun> b_passes;
  uint64_t p_last = 0, s_last = 0;
  uint64_t vstar = 0;
  std::map<uint64_t, PrefVal> fp_extra;  // explicit prefixes past coverage holes

  // Residue-block speculation.
  std::deque<SuffixSpec> specs;
  bool qr_frozen = false;

  // Synthesis memo.
  uint64_t memo_x = 0;
  KMismatchSketch memo_sk;
  Weight memo_w;

  bool per_anom = false;  // periodic-path inconsistency; matters only if bottomed
};

// ---------------------------------------------------------------------------

class StreamRun {
 public:
  StreamRun(const StreamConfig& cfg, const RunContext& ctx)
      : cfg_(cfg),
        ctx_(ctx),
        wp_(cfg.weight),
        n_(cfg.n),
        k_(cfg.k),
        kk_(kk_of(cfg.k)),
        b3_(3 * kk_of(cfg.k)),
        Kcap_(cfg.capacity_override ? cfg.capacity_override
                                    : 576 * kk_of(cfg.k)),
        dcov_cap_(1024 * kk_of(cfg.k)),
        tap_(3 * kk_of(cfg.k), cfg.k + 1, ctx, cfg.weight),
        empty_k_(sketch_of_string(std::string(), cfg.k, ctx)) {
    oracle_ = [this](uint64_t x) { return oracle_lookup(x); };
    if (cfg.matcher_compression)
      coder_ = std::make_unique<PrefixCoder>(k_, ctx, *cfg.weight);
    sched_.configure(&oracle_,
                     [this](uint64_t x) { return coder_ && coder_->covers(x); });
    const uint64_t dcut =
        cfg.degenerate_cutoff ? cfg.degenerate_cutoff : 8 * (2 * k_ + 2);
    LevelPlan plan = LevelPlan::build(n_);
    uint64_t ring_cap = 0;
    for (const auto& pl : plan.levels) {
      if (pl.len <= dcut) {
        direct_.add_periods(pl.lo, pl.hi);
        continue;
      }
      auto L = std::make_unique<LevelState>();
      L->lv = pl;
      L->lo = pl.lo;
      L->hi = pl.hi;
      L->len = pl.len;
      L->armed = (pl.hi - pl.lo + 1) > Kcap_;
      if (L->armed) {
        L->W = pl.len / (128 * kk_);
        if (L->W == 0) L->W = 1;
        L->counts.assign(L->W + 1, 0);
        L->scanning = true;
        ring_cap = std::max(ring_cap, L->W + 2);
      }
      L->pref.configure(cfg.matcher_compression, &oracle_, wp_, &ctx_);
      L->suf.configure(cfg.matcher_compression, &oracle_, wp_, &ctx_);
      L->ap_pref.configure(cfg.matcher_compression, &oracle_, wp_, &ctx_);
      L->ap_suf.configure(cfg.matcher_compression, &oracle_, wp_, &ctx_);
      levels_.push_back(std::move(L));
    }
    const uint64_t half = n_ / 2;
    {
      const uint64_t dlo = std::max<uint64_t>(half, 1);
      const uint64_t dhi = std::min(n_, half + cfg.delta);
      direct_.add_periods(dlo, dhi);
    }
    direct_.prepare(n_, k_, ctx_, *wp_);
    ring_.reset(ring_cap);
    for (auto& L : levels_) {
      if (L->armed && !tracker_) tracker_ = L.get();
      MatcherOptions mo;
      mo.k = k_;
      mo.start_lo = L->lo;
      mo.end_hi = L->armed ? n_ : std::min(n_, L->hi + L->len - 1);
      mo.pattern_len = L->len;
      mo.compressed = cfg.matcher_compression;
      mo.weight = wp_;
      if (cfg.matcher_compression) {
        mo.prefix_oracle = [this](uint64_t x) {
          auto v = oracle_lookup(x);
          if (!v) return std::optional<std::pair<KMismatchSketch, Weight>>{};
          return std::optional<std::pair<KMismatchSketch, Weight>>(
              std::in_place, std::move(v->sk), v->w);
        };
        mo.prefix_covered = [this](uint64_t x) {
          return coder_ && coder_->covers(x);
        };
        mo.window_probe = [this](uint64_t s, uint64_t len, uint64_t cap,
                                 MismatchInfo* mi) {
          return coder_ ? coder_->probe(s, len, cap, mi) : -1;
        };
      }
      L->matcher = std::make_unique<KMatcher>(mo, ctx_, &tap_);
    }
  }

  void push(unsigned char c) {
    const auto t0 = Clock::now();
    ++now_;
    tap_.push(c);
    ring_.push(c);
    if (coder_) {
      coder_->push(c);
      if (coder_->frozen() && !coder_frozen_handled_) {
        // One-way switch: every consumer that leaned on live coder coverage
        // falls back to its sketch machinery from here on.
        coder_frozen_handled_ = true;
        for (auto& Lp : levels_)
          if (Lp->arith) demote_level(*Lp);
        for (auto& Lp : levels_) Lp->matcher->materialize_pats();
      }
#ifndef NDEBUG
      if (!coder_->frozen() && (now_ & 255u) == 0) {
        auto v = coder_->synth(now_, k_);
        assert(v.sk == tap_.snap(k_) && v.w == tap_.weight_total() &&
               "prefix coder diverged from the text tap");
      }
#endif
    }
    sched_.on_char(now_, tap_, k_);
    for (auto& Lp : levels_) {
      LevelState& L = *Lp;
      if (L.armed) {
        scan_step(L, c);
        block_step(L, c);
        grid_step(L);
      }
      auto occs = L.matcher->on_shared_char();
      for (auto& o : occs) route_occurrence(L, std::move(o));
      if (L.armed && L.ext_exited) process_dues(L);
      watch_step(L);
    }
    direct_.on_char(now_, c, tap_);
    sample_stats();
    timer_.add_ns(static_cast<uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0)
            .count()));
  }

  struct Outcome {
    std::vector<PeriodReport> reports;
    bool anomaly = false;
  };

  Outcome finalize() {
    assert(now_ == n_);
    skT_ = tap_.snap(k_);
    wT_ = tap_.weight_total();
    Outcome out;
    for (auto& Lp : levels_) {
      LevelState& L = *Lp;
      if (!L.bottom) {
        nonper_finalize(L, out);
        continue;
      }
      assert(L.armed && "capacity cannot overflow on a narrow interval");
      if (!L.q || !L.vote_done || !L.rawq_done || !L.ext_exited ||
          L.periodic_dead || L.ap_dead || L.per_anom) {
#ifndef NDEBUG
        if (std::getenv("KPER_TRACE"))
          std::fprintf(stderr,
                       "[kper] level j=%llu len=%llu incomplete: q=%llu "
                       "vote=%d rawq=%d exited=%d pdead=%d apdead=%d "
                       "panom=%d qdead=%d\n",
                       (unsigned long long)L.lv.j, (unsigned long long)L.len,
                       (unsigned long long)L.q, (int)L.vote_done,
                       (int)L.rawq_done, (int)L.ext_exited,
                       (int)L.periodic_dead, (int)L.ap_dead, (int)L.per_anom,
                       (int)L.q_dead);
#endif
        flag(out, "periodic path incomplete on a bottomed level");
        continue;
      }
      if (L.ap)
        ap_finalize(L, out);
      else
        fp_finalize(L, out);
      tail_four_step(L, out);
    }
    direct_finalize(out);
    std::sort(out.reports.begin(), out.reports.end(),
              [](const PeriodReport& a, const PeriodReport& b) {
                return a.period < b.period;
              });
    for (size_t i = 1; i < out.reports.size(); ++i)
      if (out.reports[i].period == out.reports[i - 1].period)
        flag(out, "duplicate period across levels");
    if (n_ / 2 >= 1 &&
        (out.reports.empty() || out.reports.front().period != 1))
      flag(out, "identity period missing");
    return out;
  }

  const ByteLedger& ledger() const { return ledger_; }
  const TimeRecorder& timer() const { return timer_; }

 private:
  // ---- shift scan ----------------------------------------------------------
  void scan_step(LevelState& L, unsigned char c) {
    if (!L.scanning) return;
    const uint64_t half_l = L.len / 2;
    const uint64_t d_lo = (now_ > half_l) ? now_ - half_l : 1;
    const uint64_t d_hi = std::min(L.W, now_ ? now_ - 1 : 0);
    for (uint64_t d = d_lo; d <= d_hi; ++d) {
      if (!ring_.covers(now_ - d)) break;
      if (ring_.at(now_ - d) != c && L.counts[d] != 255) ++L.counts[d];
    }
    if (now_ <= half_l) return;
    const uint64_t froze = now_ - half_l;  // in [1..W] while scanning
    if (L.counts[froze] <= 8 * k_) {
      L.scanning = false;
      on_q_found(L, froze);
    } else if (froze == L.W) {
      L.scanning = false;
      L.q_dead = true;
    }
    if (!L.scanning) {
      L.counts.clear();
      L.counts.shrink_to_fit();
    }
  }

  void on_q_found(LevelState& L, uint64_t q) {
    L.q = q;
    L.arith = coder_ && !coder_->frozen();
    L.b0 = now_ / q + 2;
    L.vote_B = 12 * kk_ + 1;
    L.lambda = (L.len / q - 2) * q;
    L.bound = std::min(2 * L.len, n_ - q + 1);
    assert(L.bound >= L.lambda + q);
    // Short report length for the residue-block speculation; skipped if its
    // first window could already have been missed, or if the matcher may
    // already have retired starts that a shorter length would have kept.
    if (L.lambda > k_ && now_ < L.lo + L.lambda - 1 &&
        now_ + L.len <= n_ + k_ + 1) {
      L.lambda_len = L.lambda;
      L.matcher->add_report_length(L.lambda);
    }
  }

  // ---- block vote and raw block hunt --------------------------------------
  void block_step(LevelState& L, unsigned char c) {
    if (!L.q || L.rawq_done || L.periodic_dead) return;
    const uint64_t start = (L.b0 - 1) * L.q;
    if (now_ > start) L.cur_block.push_back(static_cast<char>(c));
    if (now_ < start || now_ % L.q) return;
    if (now_ == start) {
      if (!L.arith) {
        L.boundary_sk = tap_.snap(b3_);
        L.boundary_w = tap_.weight_total();
      }
      L.have_boundary = true;
      L.last_boundary = now_;
      L.cur_block.clear();
      return;
    }
    assert(L.have_boundary);
    if (L.arith) {
      // Vote on raw block strings; the winner is the raw block itself, so
      // the hunt phase disappears along with the sketch machinery.
      L.vote_raw.feed(L.cur_block);
      if (L.vote_raw.total() == L.vote_B) {
        L.vote_done = true;
        L.vote_pos = now_;
        L.rawQ = L.vote_raw.result();
        L.rawq_done = true;
        L.wQ = wp_->of_string(L.rawQ);
        L.first_grid = now_ + L.q;
        L.vote_raw = MajorityVote<std::string>();
      }
      L.last_boundary = now_;
      L.cur_block.clear();
      return;
    }
    KMismatchSketch here = tap_.snap(b3_);
    Weight w_here = tap_.weight_total();
    KMismatchSketch blk =
        sketch_split(here, L.boundary_sk, SplitSide::Left, ctx_);
    Weight blk_w = wp_->subtract(w_here, L.boundary_w);
    if (!L.vote_done) {
      L.vote_sk.feed(blk);
      L.vote_w.feed(blk_w);
      if (L.vote_sk.total() == L.vote_B) {
        L.vote_done = true;
        L.vote_pos = now_;
        L.skQ3 = L.vote_sk.result();
        L.skQk = sketch_truncate(L.skQ3, k_);
        L.wQ = L.vote_w.result();
        L.first_grid = now_ + L.q;
        L.vote_sk = MajorityVote<KMismatchSketch>();
        L.vote_w = MajorityVote<Weight>();
        // Seed the grid's rolling prefix snapshot with this boundary.
        L.skP1 = std::move(here);
        L.wP1 = w_here;
        L.have_p1 = true;
      }
    } else if (blk == L.skQ3 && blk_w == L.wQ) {
      L.rawQ = L.cur_block;
      L.rawq_done = true;
      L.boundary_sk = KMismatchSketch();  // boundary only feeds the hunt
      if (L.ext_exited) L.skQ3 = KMismatchSketch();
    } else if (now_ > (L.b0 + 2 * L.vote_B + 2) * L.q) {
      L.periodic_dead = true;  // no block matched the vote in time
    }
    if (!L.rawq_done && !L.periodic_dead) {
      L.boundary_sk = tap_.snap(b3_);
      L.boundary_w = w_here;
    }
    L.last_boundary = now_;
    L.cur_block.clear();
  }

  // ---- grid extension ------------------------------------------------------
  KMismatchSketch grid_power(LevelState& L, uint64_t m) {
    if (!L.pw3_m) {
      L.pw3 = sketch_power(L.skQ3, m, ctx_);
      L.pw3_m = m;
    }
    while (L.pw3_m < m) {
      L.pw3 = sketch_concat(L.pw3, L.skQ3, ctx_);
      ++L.pw3_m;
    }
    if (L.pw3_m != m) {
      L.pw3 = sketch_power(L.skQ3, m, ctx_);
      L.pw3_m = m;
    }
    return L.pw3;
  }

  void grid_step(LevelState& L) {
    if (!L.vote_done || L.ext_exited || L.periodic_dead) return;
    if (now_ < L.first_grid || now_ % L.q) return;
    if (L.arith) {
      // Same pass/fail decisions as the sketch compare below, taken on the
      // exact defect list the prefix coder already holds.
      auto gm = coder_ ? coder_->grid_mi(L.rawQ, now_) : std::nullopt;
      if (gm) {
        if (now_ == L.lambda + L.q && gm->size() <= b3_) {
          L.m_pq = *gm;
          L.have_m_pq = true;
        }
        if (gm->size() <= 2 * k_) {
          L.cur_mi = std::move(*gm);
          L.have_cur = true;
          L.dcov.clear();
          for (const auto& e : L.cur_mi.entries())
            L.dcov[e.pos] = {e.right, e.left};
          L.cov_end = now_;
          if (now_ >= L.bound) on_ext_exit(L, false);
        } else {
          on_ext_exit(L, true);
        }
        return;
      }
      demote_level(L);  // block shape incompatible with the coder: fall back
    }
    KMismatchSketch here = tap_.snap(b3_);
    L.skP2 = std::move(L.skP1);
    L.wP2 = L.wP1;
    L.skP1 = std::move(here);
    L.wP1 = tap_.weight_total();
    auto cmp = sketch_compare(L.skP1, grid_power(L, now_ / L.q), ctx_);
    const bool pass = cmp.within() && cmp.mi.size() <= 2 * k_;
    if (now_ == L.lambda + L.q && cmp.within()) {
      L.m_pq = cmp.mi;
      L.have_m_pq = true;
    }
    if (pass) {
      L.cur_mi = std::move(cmp.mi);
      L.have_cur = true;
      L.dcov.clear();
      for (const auto& e : L.cur_mi.entries())
        L.dcov[e.pos] = {e.right, e.left};
      L.cov_end = now_;
      if (now_ >= L.bound) on_ext_exit(L, false);
    } else {
      on_ext_exit(L, true);
    }
  }

  void on_ext_exit(LevelState& L, bool ap) {
    L.ext_exited = true;
    L.ap = ap;
    L.lp = now_;
    L.lpp = now_ - L.q;
    if (L.arith) {
      auto v1 = coder_->synth(L.lp, k_);
      L.p1_k = std::move(v1.sk);
      L.w_p1 = v1.w;
      auto v2 = coder_->synth(L.lpp, k_);
      L.p2_k = std::move(v2.sk);
      L.w_p2 = v2.w;
    } else {
      L.p1_k = sketch_truncate(L.skP1, k_);
      L.p2_k = sketch_truncate(L.skP2, k_);
      L.w_p1 = L.wP1;
      L.w_p2 = L.wP2;
    }
    if (!ap) {
      L.mi_lp = L.cur_mi;
      L.have_mi_lp = true;
    } else {
      if (L.have_cur) {
        L.mi_lpp = L.cur_mi;
        L.have_mi_lpp = true;
      } else if (L.arith) {
        auto gm = coder_->grid_mi(L.rawQ, L.lpp);
        if (gm && gm->size() <= b3_) {
          L.mi_lpp = std::move(*gm);
          L.have_mi_lpp = true;
          for (const auto& e : L.mi_lpp.entries())
            L.dcov[e.pos] = {e.right, e.left};
          L.cov_end = L.lpp;
        }
      } else {
        // The failing grid point was the first compare; re-derive the state
        // one grid step back (the seeded vote boundary).
        auto cmp = sketch_compare(L.skP2, grid_power(L, L.lpp / L.q), ctx_);
        if (cmp.within()) {
          L.mi_lpp = std::move(cmp.mi);
          L.have_mi_lpp = true;
          for (const auto& e : L.mi_lpp.entries())
            L.dcov[e.pos] = {e.right, e.left};
          L.cov_end = L.lpp;
        }
      }
      // Coverage freezes at the last verified grid point.
      L.cov_end = std::min(L.cov_end, L.lpp);
    }
    L.s_cap = n_ >= L.lp ? n_ - L.lp + 1 : 0;
    if (ap) L.s_cap = std::min(L.s_cap, L.hi);
    purge_pending(L);
    if (ap && L.lv.j <= 2) {
      if (L.lp - 1 == L.lpp) {
        L.edge_ready = true;  // adjacent grid points: nothing in between
      } else if (coder_ && coder_->covers(L.lp - 1)) {
        L.edge_chars = coder_->decode(L.lpp + 1, L.lp - 1);
        L.edge_ready = true;
      } else if (ring_.covers(L.lpp + 1)) {
        L.edge_chars = ring_.substr(L.lpp + 1, L.lp - 1);
        L.edge_ready = true;
      }
    }
    if (!ap && L.lv.j >= 2) {
      for (int64_t dc = -1; dc <= 2; ++dc) {
        const uint64_t x = L.lo + L.lp + static_cast<uint64_t>(dc);
        if (x > now_ && x <= n_) sched_.request(x);
      }
    }
    // The extension's own budget-3k machinery is done; only the k-budget
    // exit snapshots and the block sketch stay reachable.
    L.skP1 = KMismatchSketch();
    L.skP2 = KMismatchSketch();
    L.pw3 = KMismatchSketch();
    L.pw3_m = 0;
    if (L.rawq_done) L.skQ3 = KMismatchSketch();
    drain_at_exit(L);
  }

  void purge_pending(LevelState& L) {
    while (!L.pend.empty() && L.pend.back().s > L.s_cap) {
      L.pend_bytes -= pending_bytes(L.pend.back());
      L.pend.pop_back();
    }
    while (!L.vruns.empty()) {
      VirtRun& r = L.vruns.back();
      if (r.s0 > L.s_cap) {
        L.vruns.pop_back();
        continue;
      }
      if (r.count == 1 || r.s0 + (r.count - 1) * r.step <= L.s_cap) break;
      r.count = (L.s_cap - r.s0) / r.step + 1;
      break;
    }
  }

  std::optional<uint64_t> front_stage_a(LevelState& L) {
    std::optional<uint64_t> s;
    if (!L.pend.empty()) s = L.pend.front().s;
    if (!L.vruns.empty() && (!s || L.vruns.front().s0 < *s))
      s = L.vruns.front().s0;
    return s;
  }

  Pending pop_stage_a(LevelState& L) {
    const bool take_virt =
        !L.vruns.empty() &&
        (L.pend.empty() || L.vruns.front().s0 < L.pend.front().s);
    if (!take_virt) {
      Pending e = std::move(L.pend.front());
      L.pend_bytes -= pending_bytes(e);
      L.pend.pop_front();
      return e;
    }
    VirtRun& r = L.vruns.front();
    Pending e;
    e.s = r.s0;
    e.virt = true;
    if (r.count == 1) {
      L.vruns.pop_front();
    } else {
      r.s0 += r.step;
      --r.count;
    }
    return e;
  }

  void drain_at_exit(LevelState& L) {
    if (L.lpp <= L.len) {
      // Stage windows fall inside the buffered occurrences themselves.
      assert(L.vruns.empty() && "synthesizable entries before a short exit");
      std::deque<Pending> held;
      held.swap(L.pend);
      L.pend_bytes = 0;
      for (auto& e : held) intake_post_exit(L, std::move(e));
      return;
    }
    while (auto sf = front_stage_a(L)) {
      if (*sf + L.lpp - 1 >= now_) break;
      Pending e = pop_stage_a(L);
      assert(L.lv.j == 1 && e.s <= L.q &&
             "stale stage dues outside the first level's head");
      if (e.virt) materialize_pre(L, e);
      early_a_check(L, std::move(e));
    }
  }

  void materialize_pre(LevelState& L, Pending& e) {
    auto v = resolve_pre(L, e.s - 1);
    e.pre_sk = std::move(v.sk);
    e.pre_w = v.w;
    e.virt = false;
  }

  void early_a_check(LevelState& L, Pending e) {
    const uint64_t due = e.s + L.lpp - 1;  // in [lpp .. lp)
    KMismatchSketch pre_due = L.p2_k;
    if (due > L.lpp) {
      if (!ring_.covers(L.lpp + 1)) {
        L.per_anom = true;
        return;
      }
      const std::string extra = ring_.substr(L.lpp + 1, due);
      pre_due = sketch_concat(pre_due, sketch_of_string(extra, k_, ctx_), ctx_);
    }
    KMismatchSketch win =
        sketch_split(pre_due, e.pre_sk, SplitSide::Left, ctx_);
    auto cmp = sketch_compare(win, L.p2_k, ctx_);
    if (cmp.within() && cmp.mi.size() <= k_) {
      e.miA = std::move(cmp.mi);
      stage_a_passed(L, std::move(e));
    }
  }

  // ---- occurrence routing --------------------------------------------------
  void route_occurrence(LevelState& L, Occurrence&& occ) {
    const uint64_t s = occ.endpoint - occ.pattern_len + 1;
    if (L.armed && L.lambda_len && occ.pattern_len == L.lambda_len) {
      spec_open(L, std::move(occ), s);
      return;
    }
    assert(occ.pattern_len == L.len);
    if (L.armed && L.q) spec_close(L, occ, s);
    if (!L.bottom && s >= L.lo && s <= L.hi) {
      if (occ.prefix_omitted)
        L.pref.insert_covered(s - 1);
      else
        L.pref.insert(s - 1, occ.prefix_sketch, occ.prefix_weight);
      if (L.pref.logical_size() > Kcap_) {
        L.bottom = true;
        L.pref.clear();
        L.suf.clear();
      }
    }
    if (!L.armed) return;
    if (!L.ext_exited) {
      buffer_pre_exit(L, std::move(occ), s);
    } else {
      if (s > L.s_cap) return;
      if (try_absorb_virtual(L, occ, s, /*post_exit=*/true)) return;
      intake_post_exit(L, make_pending(std::move(occ), s));
    }
  }

  Pending make_pending(Occurrence&& occ, uint64_t s) {
    Pending e;
    e.s = s;
    if (occ.prefix_omitted) {
      e.virt = true;  // the coder reproduces the prefix on demand
    } else {
      e.pre_sk = std::move(occ.prefix_sketch);
      e.pre_w = occ.prefix_weight;
    }
    e.occ_mi = std::move(occ.mi);
    e.have_occ = true;
    return e;
  }

  bool synth_covered(const LevelState& L, uint64_t x) const {
    return L.rawq_done && !L.periodic_dead && x <= L.cov_end;
  }

  bool try_absorb_virtual(LevelState& L, const Occurrence& occ, uint64_t s,
                          bool post_exit) {
    if (!cfg_.matcher_compression) return false;
    if (post_exit && (L.ap || L.lpp <= L.len)) return false;
    // Starts the prefix coder reproduces need no stored value; the pre-exit
    // time gate keeps any future stage-A due past the present, so stale dues
    // can only be explicit first-level head entries.
    bool ok = coder_ && coder_->covers(s - 1) &&
              (post_exit || (L.q && now_ >= L.len + L.q));
    if (!ok && !occ.prefix_omitted && L.q && L.rawq_done) {
      // Fallback: the level's own grid synthesis reproduces aligned starts
      // inside verified coverage; cross-check the value before dropping it.
      const bool gate = post_exit || L.cov_end >= L.len + L.q;
      if (gate && (s - 1) % L.q == 0 && synth_covered(L, s - 1)) {
        auto v = level_synth(L, s - 1);
        ok = v.sk == occ.prefix_sketch && v.w == occ.prefix_weight;
      }
    }
    if (!ok) return false;
    if (!L.vruns.empty()) {
      VirtRun& r = L.vruns.back();
      if (r.count == 1 && s > r.s0) {
        r.step = s - r.s0;
        r.count = 2;
        return true;
      }
      if (r.step && s == r.s0 + r.count * r.step) {
        ++r.count;
        return true;
      }
    }
    VirtRun r;
    r.s0 = s;
    L.vruns.push_back(r);
    return true;
  }

  void buffer_pre_exit(LevelState& L, Occurrence&& occ, uint64_t s) {
    if (try_absorb_virtual(L, occ, s, /*post_exit=*/false)) return;
    Pending e = make_pending(std::move(occ), s);
    assert(L.pend.empty() || L.pend.back().s < e.s);
    L.pend_bytes += pending_bytes(e);
    L.pend.push_back(std::move(e));
  }

  void intake_post_exit(LevelState& L, Pending e) {
    if (e.s > L.s_cap) return;
    if (L.lpp <= L.len) {
      assert(e.have_occ);
      MismatchInfo miA = e.occ_mi.restricted(1, L.lpp);
      if (miA.size() > k_) return;
      e.miA = std::move(miA);
      stage_a_passed(L, std::move(e));
      return;
    }
    const uint64_t due = e.s + L.lpp - 1;
    if (due < now_) {
      assert(L.lv.j == 1 && e.s <= L.q + 1);
      if (e.virt) materialize_pre(L, e);
      early_a_check(L, std::move(e));
      return;
    }
    assert(L.pend.empty() || L.pend.back().s < e.s);
    L.pend_bytes += pending_bytes(e);
    L.pend.push_back(std::move(e));
  }

  void process_dues(LevelState& L) {
    std::optional<KMismatchSketch> live;
    auto live_k = [&]() -> const KMismatchSketch& {
      if (!live) live = tap_.snap(k_);
      return *live;
    };
    if (L.lpp > L.len) {
      while (auto sf = front_stage_a(L)) {
        if (*sf + L.lpp - 1 != now_) {
          assert(*sf + L.lpp - 1 > now_);
          break;
        }
        Pending e = pop_stage_a(L);
        if (e.virt) {
          // The exact defect-walk answers the same at-most-k question the
          // sketch compare below answers, with the same mismatch list.
          MismatchInfo mi;
          const int pr = coder_ ? coder_->probe(e.s, L.lpp, k_, &mi) : -1;
          if (pr == 0) continue;
          if (pr == 1) {
            e.miA = std::move(mi);
            stage_a_passed(L, std::move(e));
            continue;
          }
          materialize_pre(L, e);
        }
        KMismatchSketch win =
            sketch_split(live_k(), e.pre_sk, SplitSide::Left, ctx_);
        auto cmp = sketch_compare(win, L.p2_k, ctx_);
        if (cmp.within() && cmp.mi.size() <= k_) {
          e.miA = std::move(cmp.mi);
          stage_a_passed(L, std::move(e));
        }
      }
    }
    while (!L.await_b.empty() && L.await_b.front().s + L.lp - 1 == now_) {
      Pending e = std::move(L.await_b.front());
      L.await_bytes -= pending_bytes(e);
      L.await_b.pop_front();
      if (e.virt) {
        MismatchInfo mi;
        const int pr = coder_ ? coder_->probe(e.s, L.lp, k_, &mi) : -1;
        if (pr == 0) {
          if (e.suf_sched) sched_.release(e.suf_u);
          continue;
        }
        if (pr == 1) {
          confirm(L, std::move(e), mi);
          continue;
        }
        materialize_pre(L, e);
      }
      KMismatchSketch win =
          sketch_split(live_k(), e.pre_sk, SplitSide::Left, ctx_);
      auto cmp = sketch_compare(win, L.p1_k, ctx_);
      if (cmp.within() && cmp.mi.size() <= k_) {
        confirm(L, std::move(e), cmp.mi);
      } else if (e.suf_sched) {
        sched_.release(e.suf_u);
      }
    }
  }

  void stage_a_passed(LevelState& L, Pending e) {
    if (L.ap) {
      const uint64_t t = e.s - 1;
      const uint64_t u = n_ - t;
      const uint64_t due_a = e.s + L.lpp - 1;
      const uint64_t due_b = e.s + L.lp - 1;
      if (u <= due_a) {
        if (e.virt) materialize_pre(L, e);
        synth_partner(L, e, u);
      } else if (u < due_b) {
        if (u == now_) {
          e.suf_sk = tap_.snap(k_);
          e.suf_w = tap_.weight_total();
          e.have_suf = true;
          e.suf_u = u;
        } else if (u > now_) {
          sched_.request(u);
          e.suf_sched = true;
          e.suf_u = u;
        } else {
          L.per_anom = true;  // partner position already passed unscheduled
        }
      }
      // u >= due_b: the bank watcher captures it live.
    }
    if (L.lp <= L.len) {
      assert(e.have_occ);
      MismatchInfo miB = e.occ_mi.restricted(1, L.lp);
      if (miB.size() <= k_) confirm(L, std::move(e), miB);
      else if (e.suf_sched) sched_.release(e.suf_u);
      return;
    }
    assert(e.s + L.lp - 1 >= now_);
    L.await_bytes += pending_bytes(e);
    L.await_b.push_back(std::move(e));
  }

  // Partner prefix sk(T[1..u]) assembled from the candidate's own prefix and
  // a window synthesized on the block grid.
  void synth_partner(LevelState& L, Pending& e, uint64_t u) {
    const uint64_t t = e.s - 1;
    const uint64_t w_len = u - t;  // n - 2t, fits inside P''
    if (!L.have_mi_lpp || !L.rawq_done || w_len > L.lpp) {
      L.per_anom = true;
      return;
    }
    MismatchInfo mi =
        compose(L.mi_lpp.flipped().restricted(1, w_len),
                e.miA.flipped().restricted(1, w_len));
    PrefVal rep = qrep(L, w_len);
    KMismatchSketch win =
        mi.empty() ? rep.sk : sketch_apply_mi(rep.sk, mi, ctx_);
    Weight ww = wp_->update_from_mi(rep.w, mi);
    e.suf_sk = sketch_concat(e.pre_sk, win, ctx_);
    e.suf_w = wp_->combine(e.pre_w, ww);
    e.have_suf = true;
    e.suf_u = u;
  }

  void confirm(LevelState& L, Pending e, const MismatchInfo& miB) {
    if (L.ap)
      ap_confirm(L, std::move(e));
    else
      fp_confirm(L, std::move(e), miB);
  }

  void ap_confirm(LevelState& L, Pending e) {
    if (L.ap_dead) return;
    const uint64_t t = e.s - 1;
    if (e.virt && coder_ && coder_->covers(t)) {
      L.ap_pref.insert_covered(t);
    } else {
      if (e.virt) materialize_pre(L, e);
      L.ap_pref.insert(t, e.pre_sk, e.pre_w);
    }
    if (L.ap_pref.logical_size() > Kcap_) {
      L.ap_dead = true;
      L.ap_pref.clear();
      L.ap_suf.clear();
      L.ap_suf_extra.clear();
      return;
    }
    if (e.have_suf) {
      L.ap_suf_extra[e.suf_u] = PrefVal{std::move(e.suf_sk), e.suf_w};
    } else if (e.suf_sched) {
      auto v = sched_.find(e.suf_u);
      if (v)
        L.ap_suf_extra[e.suf_u] = *v;
      else
        L.per_anom = true;
      sched_.release(e.suf_u);
    }
  }

  void fp_confirm(LevelState& L, Pending e, const MismatchInfo& miB) {
    if (!L.have_s1) {
      L.s1 = e.s;
      L.have_s1 = true;
    } else if ((e.s - L.s1) % L.q) {
      L.per_anom = true;
      return;
    }
    if (!L.b_passes.empty()) {
      VirtRun& r = L.b_passes.back();
      if (r.count == 1 && e.s > r.s0) {
        r.step = e.s - r.s0;
        r.count = 2;
      } else if (r.step && e.s == r.s0 + r.count * r.step) {
        ++r.count;
      } else {
        VirtRun nr;
        nr.s0 = e.s;
        L.b_passes.push_back(nr);
      }
    } else {
      VirtRun nr;
      nr.s0 = e.s;
      L.b_passes.push_back(nr);
    }
    if (!L.have_mi_lp) {
      L.per_anom = true;
      return;
    }
    // Fold this window's defects into the absolute grid-defect map.
    MismatchInfo gridmi = compose(L.mi_lp.flipped(), miB.flipped());
    const uint64_t p_end = e.s + L.lp - 1;
    std::map<uint64_t, std::pair<unsigned char, unsigned char>> fresh;
    for (const auto& d : gridmi.entries())
      fresh[d.pos + e.s - 1] = {d.left, d.right};
    for (auto it = L.dcov.lower_bound(e.s);
         it != L.dcov.end() && it->first <= p_end; ++it) {
      auto f = fresh.find(it->first);
      if (f == fresh.end() || f->second != it->second) {
        L.per_anom = true;
        return;
      }
    }
    for (auto& [pos, chars] : fresh) {
      auto it = L.dcov.find(pos);
      if (it == L.dcov.end())
        L.dcov[pos] = chars;
      else if (it->second != chars) {
        L.per_anom = true;
        return;
      }
    }
    if (L.dcov.size() > dcov_cap_) {
      L.per_anom = true;
      return;
    }
    if (e.s <= L.cov_end + 1) L.cov_end = std::max(L.cov_end, p_end);
    L.p_last = std::max(L.p_last, p_end);
    L.s_last = e.s;
    if (e.s - 1 > L.cov_end) {
      // Past a coverage hole: keep the prefix explicitly unless the shared
      // oracle already reproduces it.
      if (!oracle_covers(e.s - 1)) {
        if (e.virt) {
          // Unreachable: a start confirmed through the coder stays covered.
          L.per_anom = true;
          return;
        }
        if (L.fp_extra.size() < Kcap_)
          L.fp_extra[e.s - 1] = PrefVal{std::move(e.pre_sk), e.pre_w};
        else
          L.per_anom = true;
      }
    }
    // Partner snapshot just past the final covered point, on the residue the
    // partners of aligned candidates share.
    const uint64_t u1 = n_ - L.s1 + 1;
    uint64_t d = (u1 % L.q + L.q - L.p_last % L.q) % L.q;
    if (d == 0) d = L.q;
    const uint64_t target = L.p_last + d;
    if (target != L.vstar && target <= n_) {
      if (L.vstar) sched_.release(L.vstar);
      assert(target > now_);
      sched_.request(target);
      L.vstar = target;
    }
  }

  // ---- residue-block speculation ------------------------------------------
  void spec_open(LevelState& L, Occurrence&& occ, uint64_t s) {
    if (L.qr_frozen || L.specs.size() >= 4 || !L.q) return;
    const uint64_t x = occ.endpoint;
    const uint64_t e_full = x + (L.len - L.lambda_len);
    const int64_t m = static_cast<int64_t>(n_) - 2 * static_cast<int64_t>(e_full);
    const uint64_t r = static_cast<uint64_t>(
        ((m % static_cast<int64_t>(L.q)) + static_cast<int64_t>(L.q)) %
        static_cast<int64_t>(L.q));
    if (r == 0) {
      L.qr_frozen = true;  // empty residue: nothing to cross-check
      return;
    }
    SuffixSpec sp;
    sp.start = s;
    sp.x = x;
    sp.r = r;
    sp.want = x + r;
    if (coder_ && coder_->covers(x)) {
      sp.lean = true;
    } else {
      sp.at_x = tap_.snap(k_);
      sp.w_x = tap_.weight_total();
    }
    if (sp.want > n_) return;
    sched_.request(sp.want);
    L.specs.push_back(std::move(sp));
  }

  void spec_close(LevelState& L, const Occurrence& occ, uint64_t s) {
    while (!L.specs.empty() && L.specs.front().start < s) {
      sched_.release(L.specs.front().want);
      L.specs.pop_front();
    }
    if (L.specs.empty() || L.specs.front().start != s) return;
    SuffixSpec sp = std::move(L.specs.front());
    L.specs.pop_front();
    if (!L.qr_frozen && L.rawq_done && L.have_m_pq && sp.r <= L.rawQ.size()) {
      auto v = sched_.find(sp.want);
      if (v) {
        if (sp.lean) {
          auto pv = coder_->synth(sp.x, k_);
          sp.at_x = std::move(pv.sk);
          sp.w_x = pv.w;
        }
        KMismatchSketch win =
            sketch_split(v->sk, sp.at_x, SplitSide::Left, ctx_);
        MismatchInfo conv =
            compose(occ.mi.restricted(L.lambda + 1, L.lambda + sp.r),
                    L.m_pq.restricted(L.lambda + 1, L.lambda + sp.r));
        KMismatchSketch got =
            conv.empty() ? win : sketch_apply_mi(win, conv, ctx_);
        Weight got_w =
            wp_->update_from_mi(wp_->subtract(v->w, sp.w_x), conv);
        const std::string rq = L.rawQ.substr(0, sp.r);
        if (got == sketch_of_string(rq, k_, ctx_) &&
            got_w == wp_->of_string(rq)) {
          L.qr_frozen = true;
        } else {
          L.per_anom = true;
        }
      }
    }
    sched_.release(sp.want);
  }

  // ---- candidate banks -----------------------------------------------------
  void watch_step(LevelState& L) {
    const bool covered = coder_ && coder_->covers(now_);
    if (!L.bottom && L.pref.contains(n_ - now_)) {
      if (covered)
        L.suf.insert_covered(now_);
      else
        L.suf.insert(now_, tap_.snap(k_), tap_.weight_total());
    }
    if (L.armed && L.ext_exited && L.ap && !L.ap_dead &&
        L.ap_pref.contains(n_ - now_)) {
      if (covered)
        L.ap_suf.insert_covered(now_);
      else
        L.ap_suf.insert(now_, tap_.snap(k_), tap_.weight_total());
    }
  }

  // ---- synthesis -----------------------------------------------------------
  MismatchInfo dcov_mi(const LevelState& L, uint64_t lo, uint64_t hi) const {
    MismatchInfo mi;
    for (auto it = L.dcov.lower_bound(lo);
         it != L.dcov.end() && it->first <= hi; ++it)
      mi.add(it->first - lo + 1, it->second.first, it->second.second);
    return mi;
  }

  // Raw grid prefix: floor(x/q) whole blocks plus a residue of raw
  // characters, no defects applied.
  PrefVal qrep(LevelState& L, uint64_t x) {
    const uint64_t i = x / L.q, r = x % L.q;
    PrefVal out;
    if (!i)
      out.sk = empty_k_;
    else if (L.arith)  // no resident block sketch: build it transiently
      out.sk = sketch_power(sketch_of_string(L.rawQ, k_, ctx_), i, ctx_);
    else
      out.sk = sketch_power(L.skQk, i, ctx_);
    out.w = wp_->scale(L.wQ, i);
    if (r) {
      const std::string part = L.rawQ.substr(0, r);
      out.sk = sketch_concat(out.sk, sketch_of_string(part, k_, ctx_), ctx_);
      out.w = wp_->combine(out.w, wp_->of_string(part));
    }
    return out;
  }

  // sk(T[1..x]) for x inside verified grid coverage.
  PrefVal level_synth(LevelState& L, uint64_t x) {
    assert(L.rawq_done && x <= L.cov_end);
    assert(!L.arith && "coder-backed levels resolve through the coder");
    if (x == 0) return PrefVal{empty_k_, wp_->empty()};
    if (L.memo_x == x) return PrefVal{L.memo_sk, L.memo_w};
    PrefVal out;
    if (L.memo_x && x == L.memo_x + L.q && L.memo_x % L.q == 0) {
      MismatchInfo blk = dcov_mi(L, L.memo_x + 1, x);
      KMismatchSketch bsk =
          blk.empty() ? L.skQk : sketch_apply_mi(L.skQk, blk, ctx_);
      out.sk = sketch_concat(L.memo_sk, bsk, ctx_);
      out.w = wp_->combine(L.memo_w, wp_->update_from_mi(L.wQ, blk));
    } else {
      PrefVal rep = qrep(L, x);
      MismatchInfo mi = dcov_mi(L, 1, x);
      out.sk = mi.empty() ? rep.sk : sketch_apply_mi(rep.sk, mi, ctx_);
      out.w = wp_->update_from_mi(rep.w, mi);
    }
    L.memo_x = x;
    L.memo_sk = out.sk;
    L.memo_w = out.w;
    return out;
  }

  // The prefix used by the level's own synthesis when it can, otherwise by
  // the shared oracle; valid whenever the entry was created under coverage.
  PrefVal resolve_pre(LevelState& L, uint64_t x) {
    if (coder_ && coder_->covers(x)) return coder_->synth(x, k_);
    return level_synth(L, x);
  }

  // Rebuild the sketch-side state a level skipped while it leaned on the
  // prefix coder, so the classic machinery can take over seamlessly.
  void demote_level(LevelState& L) {
    if (!L.arith) return;
    L.arith = false;
    L.vote_raw = MajorityVote<std::string>();
    if (!L.q || L.periodic_dead) return;
    if (L.rawq_done && L.skQk.s_sums.empty())
      L.skQk = sketch_of_string(L.rawQ, k_, ctx_);
    if (L.ext_exited) return;
    if (!L.vote_done) {
      // Restart the vote from the current boundary; the deadline has slack
      // for a full second pass.
      if (L.have_boundary) {
        auto v = coder_->synth(L.last_boundary, b3_);
        L.boundary_sk = std::move(v.sk);
        L.boundary_w = v.w;
      }
      return;
    }
    L.skQ3 = sketch_of_string(L.rawQ, b3_, ctx_);
    uint64_t gp = now_ > 0 ? ((now_ - 1) / L.q) * L.q : 0;
    if (gp < L.first_grid) gp = L.vote_pos;
    auto v = coder_->synth(gp, b3_);
    L.skP1 = std::move(v.sk);
    L.wP1 = v.w;
    L.have_p1 = true;
  }

  bool tracker_covers(uint64_t x) const {
    return tracker_ && x <= tracker_->cov_end && tracker_->rawq_done &&
           !tracker_->periodic_dead && !tracker_->arith;
  }

  bool oracle_covers(uint64_t x) const {
    if (coder_ && coder_->covers(x)) return true;
    return tracker_covers(x);
  }

  std::optional<PrefVal> oracle_lookup(uint64_t x) {
    if (x == 0) return PrefVal{empty_k_, wp_->empty()};
    if (coder_ && coder_->covers(x)) return coder_->synth(x, k_);
    if (!tracker_covers(x)) return std::nullopt;
    return level_synth(*tracker_, x);
  }

  // Full-prefix lookup for candidate partners at the end of the stream.
  std::optional<PrefVal> lookup_prefix(LevelState& L, uint64_t u) {
    if (u == 0) return PrefVal{empty_k_, wp_->empty()};
    if (auto v = oracle_lookup(u)) return v;
    if (synth_covered(L, u)) return level_synth(L, u);
    if (L.ap && L.edge_ready && u > L.lpp && u < L.lp) {
      const std::string part = L.edge_chars.substr(0, u - L.lpp);
      return PrefVal{
          sketch_concat(L.p2_k, sketch_of_string(part, k_, ctx_), ctx_),
          wp_->combine(L.w_p2, wp_->of_string(part))};
    }
    if (auto v = sched_.find(u)) return *v;
    if (synth_covered(L, L.cov_end) && u > L.cov_end && u <= now_ &&
        L.cov_end >= 1 && ring_.covers(L.cov_end + 1)) {
      PrefVal base = level_synth(L, L.cov_end);
      const std::string part = ring_.substr(L.cov_end + 1, u);
      return PrefVal{
          sketch_concat(base.sk, sketch_of_string(part, k_, ctx_), ctx_),
          wp_->combine(base.w, wp_->of_string(part))};
    }
    return std::nullopt;
  }

  // ---- finalization --------------------------------------------------------
  void emit(Outcome& out, uint64_t p, const PrefVal& pre,
            const KMismatchSketch& suf_sk) {
    if (auto mi = candidate_test(skT_, pre.sk, suf_sk, k_, ctx_)) {
      PeriodReport rep;
      rep.period = p;
      rep.weight = wp_->subtract(wT_, pre.w);
      rep.mi = std::move(*mi);
      out.reports.push_back(std::move(rep));
    }
  }

  void nonper_finalize(LevelState& L, Outcome& out) {
    L.pref.for_each([&](uint64_t t, const PrefVal& pre) {
      auto suf = L.suf.find(n_ - t);
      if (!suf) {
        flag(out, "missing partner snapshot for a banked candidate");
        return;
      }
      emit(out, t + 1, pre, suf->sk);
    });
  }

  void ap_finalize(LevelState& L, Outcome& out) {
    L.ap_pref.for_each([&](uint64_t t, const PrefVal& pre) {
      const uint64_t p = t + 1;
      if (p < L.lo || p > L.hi) return;
      std::optional<PrefVal> suf = L.ap_suf.find(n_ - t);
      if (!suf) {
        auto it = L.ap_suf_extra.find(n_ - t);
        if (it != L.ap_suf_extra.end()) suf = it->second;
      }
      if (!suf) {
        if (auto v = sched_.find(n_ - t)) suf = *v;
      }
      if (!suf) {
        flag(out, "missing partner snapshot for a confirmed candidate");
        return;
      }
      emit(out, p, pre, suf->sk);
    });
  }

  void fp_finalize(LevelState& L, Outcome& out) {
    for (const VirtRun& r : L.b_passes) {
      for (uint64_t i = 0; i < r.count; ++i) {
        const uint64_t s_c = r.s0 + i * r.step;
        if (s_c > L.hi) break;
        if (s_c < L.lo) continue;
        std::optional<PrefVal> pre = oracle_lookup(s_c - 1);
        if (!pre && synth_covered(L, s_c - 1)) pre = level_synth(L, s_c - 1);
        if (!pre) {
          auto it = L.fp_extra.find(s_c - 1);
          if (it != L.fp_extra.end()) pre = it->second;
        }
        if (!pre) {
          flag(out, "confirmed start without a reachable prefix");
          continue;
        }
        auto suf = lookup_prefix(L, n_ - s_c + 1);
        if (!suf) {
          flag(out, "no route to a confirmed candidate's partner");
          continue;
        }
        emit(out, s_c, *pre, suf->sk);
      }
    }
  }

  void tail_four_step(LevelState& L, Outcome& out) {
    if (n_ - L.lp + 1 >= L.hi) return;  // no candidates past the checked span
    if (L.lv.j > 2) {
      flag(out, "deep level with tail candidates");
      return;
    }
    uint64_t t = n_ - L.lp + 2;
    if (t < L.lo) t = L.lo;
    // Align to the grid: candidate shifts are multiples of the block length.
    const uint64_t rem = (t - 1) % L.q;
    if (rem) t += L.q - rem;
    for (; t <= L.hi; t += L.q) {
      auto pre = lookup_prefix(L, t - 1);
      auto suf = lookup_prefix(L, n_ - t + 1);
      if (!pre || !suf) {
        flag(out, "no route to a tail candidate's prefixes");
        continue;
      }
      emit(out, t, *pre, suf->sk);
    }
  }

  void direct_finalize(Outcome& out) {
    for (uint64_t p : direct_.periods()) {
      auto pre = direct_.prefix(p - 1, ctx_, *wp_);
      auto suf = direct_.prefix(n_ - p + 1, ctx_, *wp_);
      if (!pre || !suf) {
        flag(out, "direct candidate prefix was not captured");
        continue;
      }
      emit(out, p, *pre, suf->sk);
    }
  }

  void flag(Outcome& out, const char* why) {
    out.anomaly = true;
    if (why_.empty()) why_ = why;
#ifndef NDEBUG
    if (std::getenv("KPER_TRACE"))
      std::fprintf(stderr, "[kper] anomaly: %s\n", why);
#endif
  }

  // ---- stats ---------------------------------------------------------------
  uint64_t level_payload(const LevelState& L) const {
    // Retained stream-derived payload in a packed serialization; sketches are
    // charged by their actual size, empty slots cost nothing.
    auto sk_b = [](const KMismatchSketch& s) {
      return s.s_sums.empty() ? 0 : sk_payload(s) + 9;
    };
    uint64_t b = L.pref.payload_bytes() + L.suf.payload_bytes() +
                 L.ap_pref.payload_bytes() + L.ap_suf.payload_bytes();
    b += L.pend_bytes + L.await_bytes;
    b += 16 * (L.vruns.size() + L.b_passes.size());  // start, step, count
    b += (8 + sk_payload_k(k_) + 9) *
         (L.ap_suf_extra.size() + L.fp_extra.size());
    if (L.scanning) b += L.counts.size();
    b += L.cur_block.size() + L.rawQ.size() + L.edge_chars.size();
    b += 18 * L.dcov.size();
    for (const auto& sp : L.specs)
      b += 40 + (sp.lean ? 0 : sk_payload(sp.at_x) + 9);
    b += sk_b(L.boundary_sk) + sk_b(L.skQ3) + sk_b(L.skQk) + sk_b(L.skP1) +
         sk_b(L.skP2) + sk_b(L.pw3) + sk_b(L.p1_k) + sk_b(L.p2_k);
    if (L.memo_x) b += sk_b(L.memo_sk);
    if (L.q && !L.vote_done && !L.periodic_dead)
      b += L.arith ? L.q : sk_payload_k(b3_) + 9;  // vote majority candidate
    b += mi_payload(L.cur_mi) + mi_payload(L.m_pq) + mi_payload(L.mi_lp) +
         mi_payload(L.mi_lpp);
    return b;
  }

  void sample_stats() {
    ledger_.sample(ByteCategory::Sketch, tap_.payload_bytes());
    uint64_t mb = 0, pb = 0;
    for (const auto& Lp : levels_) {
      mb += Lp->matcher->payload_bytes();
      pb += level_payload(*Lp);
    }
    pb += sched_.payload_bytes() + ring_.payload_bytes() +
          direct_.payload_bytes();
    if (coder_) pb += coder_->payload_bytes();
    ledger_.sample(ByteCategory::Matcher, mb);
    ledger_.sample(ByteCategory::Periods, pb);
  }

  const StreamConfig& cfg_;
  RunContext ctx_;
  const WeightPlugin* wp_;
  const uint64_t n_, k_, kk_, b3_, Kcap_, dcov_cap_;

  OwnedTextTap tap_;
  KMismatchSketch empty_k_;
  PrefFn oracle_;
  std::unique_ptr<PrefixCoder> coder_;
  bool coder_frozen_handled_ = false;
  SnapSchedule sched_;
  RawRing ring_;
  DirectTester direct_;
  std::vector<std::unique_ptr<LevelState>> levels_;
  LevelState* tracker_ = nullptr;

  uint64_t now_ = 0;
  KMismatchSketch skT_;
  Weight wT_;
  std::string why_;

  ByteLedger ledger_;
  TimeRecorder timer_;
};

uint64_t mix_seed(uint64_t seed, uint64_t attempt) {
  return seed + attempt * 0x9e3779b97f4a7c15ull;
}

void fill_times(RunStats& st, const TimeRecorder& t) {
  st.time_p50_ns = t.percentile_ns(0.50);
  st.time_p90_ns = t.percentile_ns(0.90);
  st.time_p99_ns = t.percentile_ns(0.99);
  st.time_max_ns = t.max_ns();
}

}  // namespace

DetectResult detect_periods(CharSource& src, const StreamConfig& cfg) {
  if (cfg.n == 0) throw InvalidInput("stream length must be positive");
  if (!cfg.weight) throw InvalidInput("missing weight plugin");
  const uint64_t naive_cut =
      cfg.naive_cutoff ? cfg.naive_cutoff : 64 * (cfg.k + 1);
  if (cfg.n <= naive_cut && !cfg.force_pipeline) {
    std::string t;
    t.reserve(cfg.n);
    TimeRecorder timer;
    for (uint64_t i = 0; i < cfg.n; ++i) {
      const auto t0 = Clock::now();
      unsigned char c;
      if (!src.next(&c)) throw InvalidInput("stream shorter than declared");
      t.push_back(static_cast<char>(c));
      timer.add_ns(static_cast<uint64_t>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() -
                                                               t0)
              .count()));
    }
    DetectResult res;
    res.reports = naive_kmismatch_periods(t, cfg.k, cfg.delta, *cfg.weight);
    res.stats.seed = cfg.seed;
    res.stats.chars = cfg.n;
    res.stats.peak_bytes_periods = cfg.n;  // the buffered text itself
    fill_times(res.stats, timer);
    return res;
  }
  for (uint64_t attempt = 0;; ++attempt) {
    const RunContext ctx = RunContext::from_seed(mix_seed(cfg.seed, attempt));
    StreamRun run(cfg, ctx);
    for (uint64_t i = 0; i < cfg.n; ++i) {
      unsigned char c;
      if (!src.next(&c)) throw InvalidInput("stream shorter than declared");
      run.push(c);
    }
    auto out = run.finalize();
    const bool last_chance = attempt == cfg.retry_limit;
    bool reopened = false;
    if (out.anomaly && !last_chance) reopened = src.reopen();
    if (!out.anomaly || !reopened) {
      if (out.anomaly && last_chance)
        throw RetryExhausted("verification failures persisted across retries");
      DetectResult res;
      res.reports = std::move(out.reports);
      res.warning = out.anomaly;  // single-shot stream: report what we have
      res.stats.seed = cfg.seed;
      res.stats.retries = attempt;
      res.stats.chars = cfg.n;
      res.stats.peak_bytes_sketch = run.ledger().peak(ByteCategory::Sketch);
      res.stats.peak_bytes_matcher = run.ledger().peak(ByteCategory::Matcher);
      res.stats.peak_bytes_periods = run.ledger().peak(ByteCategory::Periods);
      fill_times(res.stats, run.timer());
      return res;
    }
  }
}

DetectResult detect_periods(const std::string& text, const StreamConfig& cfg) {
  StreamConfig local = cfg;
  if (local.n == 0) local.n = text.size();
  if (local.n != text.size())
    throw InvalidInput("declared length disagrees with the text");
  StringSource src(text);
  return detect_periods(src, local);
}

}  // namespace kper
