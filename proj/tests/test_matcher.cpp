#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kper/matcher.hpp"
#include "kper/oracle.hpp"
#include "kper/sketch.hpp"

using namespace kper;

namespace {

std::string rand_string(std::mt19937_64& rng, size_t n, unsigned sigma) {
  std::string s(n, 'a');
  for (auto& c : s) c = static_cast<char>('a' + rng() % sigma);
  return s;
}

std::vector<Occurrence> run_standalone(const std::string& p, const std::string& t,
                                       const MatcherOptions& opts,
                                       const RunContext& ctx) {
  KMatcher m(opts, ctx);
  for (unsigned char c : p) m.feed_pattern_char(c);
  m.pattern_done();
  std::vector<Occurrence> out;
  for (unsigned char c : t) {
    auto occ = m.feed_text_char(c);
    out.insert(out.end(), occ.begin(), occ.end());
  }
  return out;
}

void check_against_oracle(const std::string& p, const std::string& t,
                          const std::vector<Occurrence>& got, uint64_t k,
                          uint64_t lo, uint64_t hi, const WeightPlugin* w,
                          const RunContext& ctx) {
  auto want = naive_occurrences(p, t, k);
  size_t gi = 0;
  for (const auto& o : want) {
    uint64_t start = o.endpoint - p.size() + 1;
    if (start < lo || o.endpoint > hi) continue;
    REQUIRE(gi < got.size());
    CHECK(got[gi].endpoint == o.endpoint);
    CHECK(got[gi].pattern_len == p.size());
    CHECK(got[gi].mi == o.mi);
    CHECK(got[gi].prefix_sketch ==
          sketch_of_string(t.substr(0, start - 1), k, ctx));
    if (w)
      CHECK(got[gi].prefix_weight == w->of_string(t.substr(0, start - 1)));
    else
      CHECK(!got[gi].prefix_weight.defined);
    ++gi;
  }
  CHECK(gi == got.size());
}

} // namespace

TEST_CASE("occurrences match the brute-force oracle over random triples") {
  auto ctx = RunContext::from_seed(77);
  std::mt19937_64 rng(31);
  for (int it = 0; it < 300; ++it) {
    uint64_t k = rng() % 5;
    size_t m = 1 + rng() % 24;
    size_t n = rng() % 400;
    unsigned sigma = 2 + rng() % 2;
    std::string p = rand_string(rng, m, sigma);
    std::string t = rand_string(rng, n, sigma);
    MatcherOptions opts;
    opts.k = k;
    opts.weight = (it % 2) ? &charsum_weight() : nullptr;
    auto got = run_standalone(p, t, opts, ctx);
    check_against_oracle(p, t, got, k, 1, UINT64_MAX, opts.weight, ctx);
  }
}

TEST_CASE("start and end bounds clip the reported windows") {
  auto ctx = RunContext::from_seed(78);
  std::mt19937_64 rng(32);
  for (int it = 0; it < 120; ++it) {
    uint64_t k = rng() % 3;
    size_t m = 2 + rng() % 10;
    size_t n = 40 + rng() % 200;
    std::string p = rand_string(rng, m, 2);
    std::string t = rand_string(rng, n, 2);
    MatcherOptions opts;
    opts.k = k;
    opts.start_lo = 1 + rng() % (n / 2);
    opts.end_hi = opts.start_lo + rng() % n;
    auto got = run_standalone(p, t, opts, ctx);
    check_against_oracle(p, t, got, k, opts.start_lo, opts.end_hi, nullptr, ctx);
  }
}

TEST_CASE("interleaved mode treats the stream prefix as the pattern") {
  auto ctx = RunContext::from_seed(79);
  std::mt19937_64 rng(33);
  for (int it = 0; it < 120; ++it) {
    uint64_t k = rng() % 4;
    size_t n = 30 + rng() % 300;
    size_t m = 1 + rng() % std::min<size_t>(n, 40);
    std::string t = rand_string(rng, n, 2 + rng() % 2);
    std::string p = t.substr(0, m);
    MatcherOptions opts;
    opts.k = k;
    opts.pattern_len = m;
    opts.weight = &charsum_weight();
    KMatcher im(opts, ctx);
    std::vector<Occurrence> got;
    for (unsigned char c : t) {
      auto occ = im.feed_text_char(c);
      got.insert(got.end(), occ.begin(), occ.end());
    }
    check_against_oracle(p, t, got, k, 1, UINT64_MAX, opts.weight, ctx);
  }
}

TEST_CASE("ladder stores power-of-two prefixes plus the full length") {
  auto ctx = RunContext::from_seed(80);
  std::mt19937_64 rng(34);
  std::string p = rand_string(rng, 100, 3);
  MatcherOptions opts;
  opts.k = 2;
  KMatcher m(opts, ctx);
  for (unsigned char c : p) m.feed_pattern_char(c);
  m.pattern_done();
  CHECK(m.prefix_lengths() ==
        std::vector<uint64_t>({1, 2, 4, 8, 16, 32, 64, 100}));
  CHECK(m.pattern_len() == 100);
}

TEST_CASE("extra report lengths emit their own occurrences") {
  auto ctx = RunContext::from_seed(81);
  std::mt19937_64 rng(35);
  for (int it = 0; it < 80; ++it) {
    uint64_t k = rng() % 3;
    size_t n = 60 + rng() % 200;
    size_t m = 6 + rng() % 20;
    size_t extra = 3 + rng() % (m - 3);
    std::string t = rand_string(rng, n, 2);
    std::string p = t.substr(0, m);
    MatcherOptions opts;
    opts.k = k;
    opts.pattern_len = m;
    KMatcher im(opts, ctx);
    im.add_report_length(extra);
    std::vector<Occurrence> full, part;
    for (unsigned char c : t) {
      for (auto& occ : im.feed_text_char(c)) {
        if (occ.pattern_len == m)
          full.push_back(occ);
        else
          part.push_back(occ);
      }
    }
    check_against_oracle(p, t, full, k, 1, UINT64_MAX, nullptr, ctx);
    // A window can reach the short report only if it will still be alive
    // there; shorter-length occurrences whose starts already failed earlier
    // rungs cannot exist, so the sets coincide with the oracle's.
    check_against_oracle(t.substr(0, extra), t, part, k, 1, UINT64_MAX, nullptr, ctx);
  }
}

TEST_CASE("compressed queues reproduce baseline output exactly") {
  auto ctx = RunContext::from_seed(82);
  std::mt19937_64 rng(36);
  SUBCASE("uniform run with forced small threshold") {
    std::string t(700, 'a');
    std::string p(19, 'a');
    MatcherOptions base;
    base.k = 1;
    base.weight = &charsum_weight();
    MatcherOptions comp = base;
    comp.compressed = true;
    comp.compress_threshold = 8;
    auto a = run_standalone(p, t, base, ctx);
    auto b = run_standalone(p, t, comp, ctx);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].endpoint == b[i].endpoint);
      CHECK(a[i].mi == b[i].mi);
      CHECK(a[i].prefix_sketch == b[i].prefix_sketch);
      CHECK(a[i].prefix_weight == b[i].prefix_weight);
    }
  }
  SUBCASE("perturbed periodic text") {
    for (int it = 0; it < 20; ++it) {
      uint64_t k = 1 + rng() % 3;
      std::string t;
      while (t.size() < 900) t += "ab";
      for (uint64_t i = 0; i < 2 * k; ++i) t[rng() % t.size()] = 'c';
      std::string p = t.substr(0, 8 + 2 * (rng() % 8));
      MatcherOptions base;
      base.k = k;
      base.weight = &charsum_weight();
      MatcherOptions comp = base;
      comp.compressed = true;
      comp.compress_threshold = 6;
      auto a = run_standalone(p, t, base, ctx);
      auto b = run_standalone(p, t, comp, ctx);
      REQUIRE(a.size() == b.size());
      for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].endpoint == b[i].endpoint);
        CHECK(a[i].mi == b[i].mi);
        CHECK(a[i].prefix_sketch == b[i].prefix_sketch);
        CHECK(a[i].prefix_weight == b[i].prefix_weight);
      }
    }
  }
  SUBCASE("random text equivalence") {
    for (int it = 0; it < 30; ++it) {
      uint64_t k = rng() % 3;
      std::string t = rand_string(rng, 500, 2);
      std::string p = rand_string(rng, 5 + rng() % 10, 2);
      MatcherOptions base;
      base.k = k;
      MatcherOptions comp = base;
      comp.compressed = true;
      comp.compress_threshold = 4;
      auto a = run_standalone(p, t, base, ctx);
      auto b = run_standalone(p, t, comp, ctx);
      REQUIRE(a.size() == b.size());
      for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].endpoint == b[i].endpoint);
        CHECK(a[i].mi == b[i].mi);
        CHECK(a[i].prefix_sketch == b[i].prefix_sketch);
      }
    }
  }
}

TEST_CASE("compressed mode bounds per-level candidates on a uniform stream") {
  // A long uniform pattern makes every position a candidate; the widest
  // level gap (2048 here) is what compression must tame.
  auto ctx = RunContext::from_seed(83);
  uint64_t k = 1;
  std::string t(9000, 'a');
  std::string p(4096, 'a');
  MatcherOptions opts;
  opts.k = k;
  opts.compressed = true;
  KMatcher m(opts, ctx);
  for (unsigned char c : p) m.feed_pattern_char(c);
  m.pattern_done();
  uint64_t cap = 2 * 576 * std::max<uint64_t>(k, 1) + 64;
  uint64_t peak = 0;
  size_t occs = 0;
  for (unsigned char c : t) {
    occs += m.feed_text_char(c).size();
    peak = std::max(peak, m.max_level_candidates());
  }
  CHECK(peak <= cap);
  CHECK(occs == 9000 - 4096 + 1);
  // Baseline keeps every pending start explicit by design.
  MatcherOptions base;
  base.k = k;
  KMatcher mb(base, ctx);
  for (unsigned char c : p) mb.feed_pattern_char(c);
  mb.pattern_done();
  uint64_t peak_base = 0;
  for (unsigned char c : t) {
    mb.feed_text_char(c);
    peak_base = std::max(peak_base, mb.max_level_candidates());
  }
  CHECK(peak_base > cap);
}

TEST_CASE("majority vote") {
  MajorityVote<int> mv;
  CHECK_THROWS_AS(mv.result(), EmptyStream);
  mv.feed(3);
  CHECK(mv.result() == 3);
  mv.feed(5);
  mv.feed(5);
  CHECK(mv.result() == 5);

  // Forced majority among noise, 1000 items.
  std::mt19937_64 rng(37);
  MajorityVote<uint64_t> big;
  int planted = 0;
  for (int i = 0; i < 1000; ++i) {
    if (i % 2 == 0) {
      big.feed(42);
      ++planted;
    } else if (i % 4 == 1) {
      big.feed(rng() % 7);
    } else {
      big.feed(42);
      ++planted;
    }
  }
  REQUIRE(planted > 500);
  CHECK(big.result() == 42);
  CHECK(big.total() == 1000);
}
