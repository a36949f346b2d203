#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kper/sketch.hpp"

using namespace kper;

namespace {

std::string rand_string(std::mt19937_64& rng, size_t n, unsigned sigma) {
  std::string s(n, 'a');
  for (auto& c : s) c = static_cast<char>('a' + rng() % sigma);
  return s;
}

// Flip exactly d positions to different characters.
std::string mutate(std::mt19937_64& rng, const std::string& s, size_t d,
                   unsigned sigma) {
  std::string t = s;
  std::vector<size_t> idx(s.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  for (size_t i = 0; i < d; ++i) {
    char c;
    do {
      c = static_cast<char>('a' + rng() % (sigma + 1));
    } while (c == s[idx[i]]);
    t[idx[i]] = c;
  }
  return t;
}

MismatchInfo naive_mi(const std::string& x, const std::string& y) {
  MismatchInfo mi;
  for (size_t i = 0; i < x.size(); ++i)
    if (x[i] != y[i])
      mi.add(i + 1, static_cast<unsigned char>(x[i]), static_cast<unsigned char>(y[i]));
  return mi;
}

} // namespace

TEST_CASE("builder matches whole-string sketching and serialization round-trips") {
  auto ctx = RunContext::from_seed(42);
  std::mt19937_64 rng(7);
  for (int it = 0; it < 50; ++it) {
    uint64_t k = rng() % 6;
    std::string s = rand_string(rng, 1 + rng() % 200, 4);
    SketchBuilder b(k, ctx);
    for (unsigned char c : s) b.append(c);
    auto direct = sketch_of_string(s, k, ctx);
    CHECK(b.snapshot() == direct);
    auto bytes = direct.serialize();
    CHECK(KMismatchSketch::deserialize(bytes) == direct);
  }
}

TEST_CASE("truncation of a build equals a lower-budget build") {
  auto ctx = RunContext::from_seed(43);
  std::mt19937_64 rng(8);
  for (int it = 0; it < 1000; ++it) {
    uint64_t k = 1 + rng() % 8;
    uint64_t k2 = rng() % k;
    std::string s = rand_string(rng, 1 + rng() % 150, 3);
    auto big = sketch_of_string(s, k, ctx);
    auto small = sketch_of_string(s, k2, ctx);
    CHECK(sketch_truncate(big, k2) == small);
    SketchBuilder b(k, ctx);
    for (unsigned char c : s) b.append(c);
    CHECK(b.snapshot_truncated(k2) == small);
  }
}

TEST_CASE("concat homomorphism") {
  auto ctx = RunContext::from_seed(44);
  std::mt19937_64 rng(9);
  for (int it = 0; it < 1000; ++it) {
    uint64_t k = rng() % 7;
    std::string u = rand_string(rng, rng() % 120, 4);
    std::string v = rand_string(rng, rng() % 120, 4);
    auto got = sketch_concat(sketch_of_string(u, k, ctx), sketch_of_string(v, k, ctx), ctx);
    CHECK(got == sketch_of_string(u + v, k, ctx));
  }
}

TEST_CASE("split recovers either half") {
  auto ctx = RunContext::from_seed(45);
  std::mt19937_64 rng(10);
  for (int it = 0; it < 1000; ++it) {
    uint64_t k = rng() % 7;
    std::string u = rand_string(rng, rng() % 100, 4);
    std::string v = rand_string(rng, rng() % 100, 4);
    auto whole = sketch_of_string(u + v, k, ctx);
    auto sku = sketch_of_string(u, k, ctx);
    auto skv = sketch_of_string(v, k, ctx);
    CHECK(sketch_split(whole, sku, SplitSide::Left, ctx) == skv);
    CHECK(sketch_split(whole, skv, SplitSide::Right, ctx) == sku);
  }
}

TEST_CASE("power equals explicit repetition") {
  auto ctx = RunContext::from_seed(46);
  std::mt19937_64 rng(11);
  for (int it = 0; it < 1000; ++it) {
    uint64_t k = rng() % 6;
    std::string u = rand_string(rng, 1 + rng() % 30, 4);
    uint64_t t = rng() % 20;
    std::string rep;
    for (uint64_t i = 0; i < t; ++i) rep += u;
    CHECK(sketch_power(sketch_of_string(u, k, ctx), t, ctx) ==
          sketch_of_string(rep, k, ctx));
  }
}

TEST_CASE("apply_mi rewrites a sketch to the mutated string") {
  auto ctx = RunContext::from_seed(47);
  std::mt19937_64 rng(12);
  for (int it = 0; it < 1000; ++it) {
    uint64_t k = rng() % 7;
    std::string u = rand_string(rng, 1 + rng() % 150, 4);
    std::string v = mutate(rng, u, rng() % std::min<size_t>(u.size(), 10), 4);
    auto got = sketch_apply_mi(sketch_of_string(u, k, ctx), naive_mi(u, v), ctx);
    CHECK(got == sketch_of_string(v, k, ctx));
  }
}

TEST_CASE("compare decodes planted mismatches exactly") {
  auto ctx = RunContext::from_seed(48);
  std::mt19937_64 rng(13);
  int within = 0;
  for (int it = 0; it < 2000; ++it) {
    uint64_t k = rng() % 9;
    size_t n = 1 + rng() % 500;
    std::string x = rand_string(rng, n, 4);
    size_t d = rng() % (k + 1);
    d = std::min(d, n);
    std::string y = mutate(rng, x, d, 4);
    auto cmp = sketch_compare(sketch_of_string(x, k, ctx), sketch_of_string(y, k, ctx), ctx);
    REQUIRE(cmp.within());
    CHECK(cmp.mi == naive_mi(x, y));
    ++within;
  }
  CHECK(within == 2000);
}

TEST_CASE("compare rejects overfull distances") {
  auto ctx = RunContext::from_seed(49);
  std::mt19937_64 rng(14);
  int wrong = 0;
  for (int it = 0; it < 2000; ++it) {
    uint64_t k = rng() % 7;
    size_t n = 2 * k + 2 + rng() % 400;
    std::string x = rand_string(rng, n, 4);
    size_t d = k + 1 + rng() % (2 * k + 2);
    d = std::min(d, n);
    std::string y = mutate(rng, x, d, 4);
    auto cmp = sketch_compare(sketch_of_string(x, k, ctx), sketch_of_string(y, k, ctx), ctx);
    if (cmp.within()) ++wrong;
  }
  // Soundness is probabilistic; at these sizes misreads are vanishingly rare.
  CHECK(wrong == 0);
}

TEST_CASE("compare uses the smaller budget of its operands") {
  auto ctx = RunContext::from_seed(50);
  std::mt19937_64 rng(15);
  std::string x = rand_string(rng, 300, 4);
  std::string y3 = mutate(rng, x, 3, 4);
  std::string y4 = mutate(rng, x, 4, 4);
  auto a5 = sketch_of_string(x, 5, ctx);
  auto cmp = sketch_compare(a5, sketch_of_string(y3, 3, ctx), ctx);
  REQUIRE(cmp.within());
  CHECK(cmp.mi.size() == 3);
  cmp = sketch_compare(a5, sketch_of_string(y4, 3, ctx), ctx);
  CHECK(!cmp.within());
}

TEST_CASE("compare edge cases") {
  auto ctx = RunContext::from_seed(51);
  std::string x = "abcabc";
  auto sk = sketch_of_string(x, 2, ctx);
  auto cmp = sketch_compare(sk, sk, ctx);
  REQUIRE(cmp.within());
  CHECK(cmp.mi.empty());

  // k = 0 detects equality only.
  auto a = sketch_of_string("abab", 0, ctx);
  auto b = sketch_of_string("abab", 0, ctx);
  CHECK(sketch_compare(a, b, ctx).within());
  auto c = sketch_of_string("abaa", 0, ctx);
  CHECK(!sketch_compare(a, c, ctx).within());

  // Length mismatch is reported, not decoded.
  auto shorter = sketch_of_string("aba", 2, ctx);
  CHECK(sketch_compare(sk, shorter, ctx).status == CompareStatus::LengthMismatch);

  // Mixing epochs throws.
  auto other = RunContext::from_seed(52);
  auto foreign = sketch_of_string("abcabc", 2, other);
  CHECK_THROWS_AS(sketch_compare(sk, foreign, ctx), EpochMismatch);
  CHECK_THROWS_AS(sketch_concat(sk, foreign, ctx), EpochMismatch);
}

TEST_CASE("empty string behaves as the identity") {
  auto ctx = RunContext::from_seed(53);
  auto e = sketch_of_string("", 3, ctx);
  auto s = sketch_of_string("xyz", 3, ctx);
  CHECK(sketch_concat(e, s, ctx) == s);
  CHECK(sketch_concat(s, e, ctx) == s);
  CHECK(sketch_power(s, 0, ctx) == e);
  CHECK(sketch_power(s, 1, ctx) == s);
  CHECK(sketch_split(s, e, SplitSide::Left, ctx) == s);
  CHECK(sketch_split(s, s, SplitSide::Left, ctx) == e);
}

TEST_CASE("mixed pipelines compose") {
  auto ctx = RunContext::from_seed(54);
  std::mt19937_64 rng(16);
  for (int it = 0; it < 300; ++it) {
    uint64_t k = 1 + rng() % 5;
    std::string u = rand_string(rng, 2 + rng() % 20, 3);
    uint64_t t = 1 + rng() % 12;
    std::string rep;
    for (uint64_t i = 0; i < t; ++i) rep += u;
    std::string noisy = mutate(rng, rep, rng() % (k + 1), 3);
    // power then apply_mi should equal the direct sketch of the noisy text.
    auto synth = sketch_apply_mi(sketch_power(sketch_of_string(u, k, ctx), t, ctx),
                                 naive_mi(rep, noisy), ctx);
    CHECK(synth == sketch_of_string(noisy, k, ctx));
    // and cutting it in half must agree with sketches of the halves.
    size_t cut = rng() % (noisy.size() + 1);
    auto left = sketch_of_string(noisy.substr(0, cut), k, ctx);
    CHECK(sketch_split(synth, left, SplitSide::Left, ctx) ==
          sketch_of_string(noisy.substr(cut), k, ctx));
  }
}
