#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "kper/algebra.hpp"
#include "kper/errors.hpp"
#include "kper/field.hpp"

using namespace kper;

namespace {

std::vector<Fe> fes(std::initializer_list<uint64_t> xs) {
  std::vector<Fe> v;
  for (uint64_t x : xs) v.push_back(fe(x));
  return v;
}

} // namespace

TEST_CASE("berlekamp_massey constant and geometric sequences") {
  auto r = berlekamp_massey(fes({1, 1, 1, 1}));
  REQUIRE(r.length() == 1);
  CHECK(r.coeffs[0] == fe(1));

  r = berlekamp_massey(fes({3, 15, 75, 375}));
  REQUIRE(r.length() == 1);
  CHECK(r.coeffs[0] == fe(5));

  r = berlekamp_massey(fes({0, 0, 0, 0, 0, 0}));
  CHECK(r.length() == 0);

  r = berlekamp_massey(fes({1, 2, 4, 8, 16, 32}));
  REQUIRE(r.length() == 1);
  CHECK(r.coeffs[0] == fe(2));
}

TEST_CASE("berlekamp_massey two-spike sequence and characteristic roots") {
  // s[j] = 3*2^j + 4*5^j; minimal recurrence order 2 with char roots {2, 5}.
  std::vector<Fe> seq;
  for (int j = 0; j < 8; ++j) seq.push_back(fe(3) * fe(2).pow(j) + fe(4) * fe(5).pow(j));
  auto r = berlekamp_massey(seq);
  REQUIRE(r.length() == 2);
  auto roots = roots_in_range(r.characteristic(), 10);
  REQUIRE(roots.has_value());
  REQUIRE(roots->size() == 2);
  CHECK((*roots)[0] == 2);
  CHECK((*roots)[1] == 5);
}

TEST_CASE("roots_in_range accepts exactly full in-range splits") {
  // (x-3)(x-7) = 21 - 10x + x^2
  std::vector<Fe> poly{fe(21), -fe(10), fe(1)};
  auto roots = roots_in_range(poly, 10);
  REQUIRE(roots.has_value());
  CHECK(*roots == std::vector<uint64_t>({3, 7}));

  CHECK(!roots_in_range(poly, 5).has_value()); // 7 outside range

  // (x-3)^2: repeated root must be rejected.
  std::vector<Fe> sq{fe(9), -fe(6), fe(1)};
  CHECK(!roots_in_range(sq, 10).has_value());

  // x(x-3): root 0 lies outside [1..m].
  std::vector<Fe> z{fe(0), -fe(3), fe(1)};
  CHECK(!roots_in_range(z, 10).has_value());

  // Irreducible-over-range: x^2+1 has no small integer roots.
  std::vector<Fe> ir{fe(1), fe(0), fe(1)};
  CHECK(!roots_in_range(ir, 1000).has_value());
}

TEST_CASE("solve_transposed_vandermonde recovers coefficients") {
  // c = [3, 4] on nodes [2, 5]: rhs_j = 3*2^j + 4*5^j.
  auto sol = solve_transposed_vandermonde(fes({2, 5}), fes({7, 26}));
  REQUIRE(sol.size() == 2);
  CHECK(sol[0] == fe(3));
  CHECK(sol[1] == fe(4));

  // Three nodes.
  std::vector<Fe> nodes = fes({1, 2, 3});
  std::vector<Fe> c = fes({5, 1, 2});
  std::vector<Fe> rhs;
  for (int j = 0; j < 3; ++j) {
    Fe s = fe(0);
    for (size_t i = 0; i < nodes.size(); ++i) s += c[i] * nodes[i].pow(j);
    rhs.push_back(s);
  }
  sol = solve_transposed_vandermonde(nodes, rhs);
  CHECK(sol == c);

  CHECK_THROWS_AS(solve_transposed_vandermonde(fes({4, 4}), fes({1, 2})),
                  SingularSystem);
}

TEST_CASE("range_power_sum small cases") {
  CHECK(range_power_sum(0, 5) == fe(5));  // five terms of r^0, with 0^0 = 1
  CHECK(range_power_sum(1, 5) == fe(10)); // 0+1+2+3+4
  CHECK(range_power_sum(2, 5) == fe(30)); // 0+1+4+9+16
  CHECK(range_power_sum(0, 1) == fe(1));
  CHECK(range_power_sum(3, 1) == fe(0));
  CHECK(range_power_sum(0, 0) == fe(0));
}

TEST_CASE("range_power_sum versus direct summation") {
  std::mt19937_64 rng(1234);
  for (int it = 0; it < 200; ++it) {
    uint64_t s = rng() % 12;
    uint64_t m = rng() % 300;
    Fe direct = fe(0);
    for (uint64_t r = 0; r < m; ++r)
      direct += (s == 0) ? fe(1) : fe(r).pow(s);
    CHECK(range_power_sum(s, m) == direct);
  }
}

TEST_CASE("binomial table rows") {
  BinomialTable bt(12);
  CHECK(bt.at(5, 2) == fe(10));
  CHECK(bt.at(10, 0) == fe(1));
  CHECK(bt.at(10, 10) == fe(1));
  CHECK(bt.at(6, 3) == fe(20));
  CHECK(bt.at(12, 6) == fe(924));
}

// Full spike-recovery pipeline: plant L spikes c_i at positions x_i, form
// power sums s_j = sum c_i x_i^j, and recover positions and magnitudes via
// recurrence + root finding + transposed Vandermonde.
TEST_CASE("spike recovery pipeline over random instances") {
  std::mt19937_64 rng(99);
  for (int it = 0; it < 2000; ++it) {
    uint64_t k = 1 + rng() % 8;
    uint64_t m = 2 + rng() % 1000;
    uint64_t L = 1 + rng() % std::min<uint64_t>(k, m);
    std::vector<std::pair<uint64_t, int64_t>> spikes;
    while (spikes.size() < L) {
      uint64_t p = 1 + rng() % m;
      bool dup = false;
      for (const auto& s : spikes) dup |= s.first == p;
      if (dup) continue;
      int64_t v = 1 + static_cast<int64_t>(rng() % 255);
      if (rng() & 1) v = -v;
      spikes.push_back({p, v});
    }
    std::sort(spikes.begin(), spikes.end());
    std::vector<uint64_t> pos;
    std::vector<int64_t> mag;
    for (const auto& s : spikes) {
      pos.push_back(s.first);
      mag.push_back(s.second);
    }
    std::vector<Fe> syn(2 * k + 2);
    for (size_t j = 0; j < syn.size(); ++j) {
      Fe s = fe(0);
      for (uint64_t i = 0; i < L; ++i)
        s += Fe::from_int(mag[i]) * fe(pos[i]).pow(j);
      syn[j] = s;
    }
    auto rec = berlekamp_massey(syn);
    REQUIRE(rec.length() == L);
    auto roots = roots_in_range(rec.characteristic(), m);
    REQUIRE(roots.has_value());
    REQUIRE(*roots == pos);
    std::vector<Fe> nodes;
    for (uint64_t p : pos) nodes.push_back(fe(p));
    std::vector<Fe> rhs(syn.begin(), syn.begin() + L);
    auto sol = solve_transposed_vandermonde(nodes, rhs);
    for (uint64_t i = 0; i < L; ++i) {
      int64_t got = 0;
      REQUIRE(fe_as_small_int(sol[i], 512, &got));
      CHECK(got == mag[i]);
    }
  }
}
