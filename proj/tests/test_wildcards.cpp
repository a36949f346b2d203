#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kper/oracle.hpp"
#include "kper/wildcards.hpp"

using namespace kper;

namespace {

std::vector<uint64_t> period_set(const WildcardResult& r) {
  std::vector<uint64_t> out;
  for (const auto& rep : r.reports) out.push_back(rep.period);
  return out;
}

// Independent set check plus a report-level check: the result must equal the
// mismatch-tolerant reports of the sentinel-substituted text, filtered to
// entries that touch the sentinel.
void check_wild(const std::string& t, const WildcardConfig& cfg) {
  auto got = detect_wildcard_periods(t, cfg);
  CHECK(!got.warning);

  auto want = naive_wildcard_periods(t, static_cast<unsigned char>(cfg.wildcard));
  INFO("t=" << t);
  REQUIRE(period_set(got) == want);

  std::string sub = t;
  uint64_t count = 0;
  for (auto& c : sub)
    if (c == cfg.wildcard) {
      c = cfg.sentinel;
      ++count;
    }
  CHECK(got.wildcards == count);
  auto raw = naive_kmismatch_periods(sub, 2 * cfg.max_wildcards, 0, *cfg.weight);
  std::vector<PeriodReport> filtered;
  for (auto& r : raw) {
    bool compatible = true;
    for (const auto& e : r.mi.entries())
      if (e.left != static_cast<unsigned char>(cfg.sentinel) &&
          e.right != static_cast<unsigned char>(cfg.sentinel))
        compatible = false;
    if (compatible) filtered.push_back(std::move(r));
  }
  REQUIRE(got.reports.size() == filtered.size());
  for (size_t i = 0; i < filtered.size(); ++i) {
    CHECK(got.reports[i].period == filtered[i].period);
    CHECK(got.reports[i].mi == filtered[i].mi);
    CHECK(got.reports[i].weight == filtered[i].weight);
  }
}

std::string rand_wild(std::mt19937_64& rng, size_t n, unsigned sigma,
                      int wilds) {
  std::string s(n, 'a');
  for (auto& c : s) c = static_cast<char>('a' + rng() % sigma);
  for (int i = 0; i < wilds; ++i) s[rng() % n] = '?';
  return s;
}

}  // namespace

TEST_CASE("hand-checked fixtures") {
  WildcardConfig cfg;
  CHECK(period_set(detect_wildcard_periods(std::string("a?aaa"), cfg)) ==
        std::vector<uint64_t>{1, 2});
  CHECK(period_set(detect_wildcard_periods(std::string("ab?ab"), cfg)) ==
        std::vector<uint64_t>{1});
  CHECK(period_set(detect_wildcard_periods(std::string("abcab"), cfg)) ==
        std::vector<uint64_t>{1});
  CHECK(period_set(detect_wildcard_periods(std::string("abab"), cfg)) ==
        std::vector<uint64_t>{1});
  CHECK(period_set(detect_wildcard_periods(std::string("aa?aaa"), cfg)) ==
        std::vector<uint64_t>{1, 2, 3});
  // Trailing wildcards stay in play.
  CHECK(period_set(detect_wildcard_periods(std::string("aaa??"), cfg)) ==
        std::vector<uint64_t>{1, 2});
}

TEST_CASE("no wildcards degenerates to exact periods") {
  std::mt19937_64 rng(11);
  WildcardConfig cfg;
  for (int rep = 0; rep < 30; ++rep) {
    std::string t(4 + rng() % 120, 'a');
    for (auto& c : t) c = static_cast<char>('a' + rng() % 2);
    auto got = detect_wildcard_periods(t, cfg);
    auto exact = naive_kmismatch_periods(t, 0);
    REQUIRE(got.reports.size() == exact.size());
    for (size_t i = 0; i < exact.size(); ++i) {
      CHECK(got.reports[i].period == exact[i].period);
      CHECK(got.reports[i].mi.empty());
    }
  }
}

TEST_CASE("random instances match the position-wise oracle") {
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 60; ++rep) {
    WildcardConfig cfg;
    if (rep % 3 == 0) cfg.weight = &charsum_weight();
    size_t n = 8 + rng() % 250;
    check_wild(rand_wild(rng, n, 2 + rng() % 3, 1 + rng() % 6), cfg);
  }
  for (int rep = 0; rep < 20; ++rep) {
    WildcardConfig cfg;
    size_t n = 300 + rng() % 725;
    check_wild(rand_wild(rng, n, 2, 1 + rng() % 6), cfg);
  }
}

TEST_CASE("highly periodic hosts with wildcards") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    size_t n = 40 + rng() % 400;
    uint64_t q = 1 + rng() % 4;
    std::string t;
    for (size_t i = 0; i < n; ++i)
      t.push_back(static_cast<char>('a' + i % q));
    for (int w = 0; w < 1 + static_cast<int>(rng() % 4); ++w)
      t[rng() % n] = '?';
    WildcardConfig cfg;
    check_wild(t, cfg);
  }
}

TEST_CASE("wildcards survive the streaming pipeline") {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 3; ++rep) {
    std::string t;
    for (size_t i = 0; i < 4000; ++i)
      t.push_back(static_cast<char>('a' + i % 2));
    for (int w = 0; w < 3; ++w) t[rng() % t.size()] = '?';
    WildcardConfig cfg;
    cfg.matcher_compression = (rep % 2) != 0;
    check_wild(t, cfg);
  }
}

TEST_CASE("alternate wildcard byte") {
  WildcardConfig cfg;
  cfg.wildcard = '*';
  CHECK(period_set(detect_wildcard_periods(std::string("a*aaa"), cfg)) ==
        std::vector<uint64_t>{1, 2});
  // '?' is an ordinary character now.
  CHECK(period_set(detect_wildcard_periods(std::string("a?aaa"), cfg)) ==
        std::vector<uint64_t>{1});
}

TEST_CASE("byte-contract violations throw") {
  WildcardConfig cfg;
  cfg.max_wildcards = 4;
  CHECK_THROWS_AS(detect_wildcard_periods(std::string("?????aaaa?"), cfg),
                  TooManyWildcards);
  CHECK_THROWS_AS(detect_wildcard_periods(std::string("ab#ab"), cfg),
                  InvalidInput);
  WildcardConfig same;
  same.wildcard = '#';
  CHECK_THROWS_AS(detect_wildcard_periods(std::string("abab"), same),
                  InvalidInput);
}

TEST_CASE("streamed and buffered overloads agree") {
  std::mt19937_64 rng(3);
  std::string t = rand_wild(rng, 600, 2, 4);
  WildcardConfig cfg;
  cfg.n = t.size();
  StringSource src(t);
  auto a = detect_wildcard_periods(src, cfg);
  auto b = detect_wildcard_periods(t, cfg);
  REQUIRE(a.reports.size() == b.reports.size());
  for (size_t i = 0; i < a.reports.size(); ++i)
    CHECK(a.reports[i] == b.reports[i]);
  CHECK(a.wildcards == b.wildcards);
}
