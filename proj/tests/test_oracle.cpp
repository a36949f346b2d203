#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kper/oracle.hpp"

using namespace kper;

namespace {

std::vector<uint64_t> period_values(const std::vector<PeriodReport>& rs) {
  std::vector<uint64_t> v;
  for (const auto& r : rs) v.push_back(r.period);
  return v;
}

// Definition check done a second, even more literal way: count disagreeing
// aligned pairs for shift p-1.
uint64_t shift_distance(const std::string& t, uint64_t p) {
  uint64_t d = 0;
  for (size_t i = 0; i + p <= t.size(); ++i)
    if (t[i] != t[i + p - 1 + 1 - 1]) ++d; // t[i] vs t[i+p-1]
  return d;
}

} // namespace

TEST_CASE("periods of tiny fixtures") {
  // Period p aligns T[p..n] with T[1..n-p+1]; p = 1 is the identity
  // alignment and always qualifies.
  auto rs = naive_kmismatch_periods("abab", 0);
  CHECK(period_values(rs) == std::vector<uint64_t>({1}));

  // p = 2 aligns bab with aba: three flips.
  rs = naive_kmismatch_periods("abab", 3);
  CHECK(period_values(rs) == std::vector<uint64_t>({1, 2}));

  rs = naive_kmismatch_periods("aaaa", 0);
  CHECK(period_values(rs) == std::vector<uint64_t>({1, 2}));

  // Single character: floor(1/2) = 0, empty range.
  CHECK(naive_kmismatch_periods("a", 5).empty());

  rs = naive_kmismatch_periods("ab", 0);
  CHECK(period_values(rs) == std::vector<uint64_t>({1}));
}

TEST_CASE("period reports carry the aligned differences and weights") {
  // T = abcab, p = 3 (reachable with delta = 1): T[3..5] = cab vs
  // T[1..3] = abc.
  auto rs = naive_kmismatch_periods("abcab", 3, 1, charsum_weight());
  bool found = false;
  for (const auto& r : rs) {
    if (r.period != 3) continue;
    found = true;
    REQUIRE(r.mi.size() == 3);
    CHECK(r.mi.entries()[0].pos == 1);
    CHECK(r.mi.entries()[0].left == 'c');
    CHECK(r.mi.entries()[0].right == 'a');
    CHECK(r.weight == Weight::of(('c' + 1) + ('a' + 1) + ('b' + 1)));
  }
  CHECK(found);
}

TEST_CASE("delta widens the tested range") {
  std::string t = "abcabcab"; // n = 8; T[4..8] = abcab matches T[1..5]
  auto rs0 = naive_kmismatch_periods(t, 0, 0);
  CHECK(period_values(rs0) == std::vector<uint64_t>({1, 4}));
  auto rs2 = naive_kmismatch_periods(t, 0, 2);
  for (const auto& r : rs2) CHECK(r.period <= 4 + 2);
  for (uint64_t p = 1; p <= 6; ++p) {
    bool expect = shift_distance(t, p) == 0;
    bool got = false;
    for (const auto& r : rs2) got |= r.period == p;
    CHECK(got == expect);
  }
}

TEST_CASE("periods against the literal shift definition") {
  std::mt19937_64 rng(21);
  for (int it = 0; it < 400; ++it) {
    size_t n = 2 + rng() % 60;
    unsigned sigma = 2 + rng() % 3;
    uint64_t k = rng() % 5;
    uint64_t delta = rng() % 4;
    std::string t(n, 'a');
    for (auto& c : t) c = static_cast<char>('a' + rng() % sigma);
    auto rs = naive_kmismatch_periods(t, k, delta);
    uint64_t hi = std::min<uint64_t>(n, n / 2 + delta);
    std::vector<uint64_t> expect;
    for (uint64_t p = 1; p <= hi; ++p)
      if (shift_distance(t, p) <= k) expect.push_back(p);
    CHECK(period_values(rs) == expect);
  }
}

TEST_CASE("occurrences against direct window comparison") {
  std::mt19937_64 rng(22);
  for (int it = 0; it < 400; ++it) {
    size_t m = 1 + rng() % 12;
    size_t n = m + rng() % 80;
    unsigned sigma = 2 + rng() % 2;
    uint64_t k = rng() % 4;
    std::string p(m, 'a'), t(n, 'a');
    for (auto& c : p) c = static_cast<char>('a' + rng() % sigma);
    for (auto& c : t) c = static_cast<char>('a' + rng() % sigma);
    auto occs = naive_occurrences(p, t, k);
    size_t oi = 0;
    for (size_t s = 0; s + m <= n; ++s) {
      uint64_t d = 0;
      for (size_t i = 0; i < m; ++i)
        if (t[s + i] != p[i]) ++d;
      if (d > k) continue;
      REQUIRE(oi < occs.size());
      CHECK(occs[oi].endpoint == s + m);
      CHECK(occs[oi].mi.size() == d);
      for (const auto& e : occs[oi].mi.entries()) {
        CHECK(t[s + e.pos - 1] == static_cast<char>(e.left));
        CHECK(p[e.pos - 1] == static_cast<char>(e.right));
      }
      ++oi;
    }
    CHECK(oi == occs.size());
  }
}

TEST_CASE("primitivity") {
  CHECK(is_primitive("a"));
  CHECK(is_primitive("ab"));
  CHECK(is_primitive("aab"));
  CHECK(!is_primitive("abab"));
  CHECK(!is_primitive("aaa"));
  CHECK(is_primitive("aba"));
}

TEST_CASE("approximate period of noisy repetitions") {
  std::mt19937_64 rng(23);
  for (int it = 0; it < 60; ++it) {
    std::string q = it % 2 ? "ab" : "abc";
    uint64_t k = 1 + rng() % 3;
    // Long enough that |q| <= floor(n/(128k)).
    size_t reps = (128 * k * q.size() * 2) / q.size();
    std::string p;
    for (size_t i = 0; i < reps; ++i) p += q;
    // Up to 2k scattered substitutions keep q recoverable.
    for (uint64_t i = 0; i < 2 * k; ++i) {
      size_t pos = rng() % p.size();
      p[pos] = static_cast<char>('a' + (p[pos] - 'a' + 1) % 3);
    }
    auto ap = naive_approx_period(p, k);
    REQUIRE(ap.has_value());
    CHECK(ap->q.size() == q.size());
    CHECK(ap->hd <= 2 * k);
  }
}

TEST_CASE("approximate period absent for random-ish strings") {
  std::mt19937_64 rng(24);
  std::string p(600, 'a');
  for (auto& c : p) c = static_cast<char>('a' + rng() % 4);
  CHECK(!naive_approx_period(p, 1).has_value());
}

TEST_CASE("wildcard periods on fixtures") {
  // The wildcard byte forgives any pair it participates in.
  auto ps = naive_wildcard_periods("a?aaa", '?');
  CHECK(ps == std::vector<uint64_t>({1, 2}));

  auto ps2 = naive_wildcard_periods("ab?ab", '?');
  CHECK(ps2 == std::vector<uint64_t>({1})); // p=2 pairs (a,b) with no '?'

  auto ps3 = naive_wildcard_periods("abcab", '?');
  CHECK(ps3 == std::vector<uint64_t>({1}));

  auto ps4 = naive_wildcard_periods("abab", '?');
  CHECK(ps4 == std::vector<uint64_t>({1}));

  auto ps5 = naive_wildcard_periods("aa?aaa", '?');
  CHECK(ps5 == std::vector<uint64_t>({1, 2, 3}));
}
