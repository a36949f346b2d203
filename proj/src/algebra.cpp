#include "kper/algebra.hpp"

#include <algorithm>
#include <random>

#include "kper/errors.hpp"

namespace kper {

std::vector<Fe> RecurrenceResult::characteristic() const {
  size_t L = coeffs.size();
  std::vector<Fe> poly(L + 1);
  poly[L] = fe(1);
  for (size_t t = 1; t <= L; ++t) poly[L - t] = -coeffs[t - 1];
  return poly;
}

RecurrenceResult berlekamp_massey(const std::vector<Fe>& seq) {
  // Standard Berlekamp-Massey over a prime field. C is the connection
  // polynomial with C[0] = 1; s[j] + sum_{t>=1} C[t] s[j-t] = 0.
  std::vector<Fe> C{fe(1)}, B{fe(1)};
  size_t L = 0, m = 1;
  Fe b = fe(1);
  for (size_t n = 0; n < seq.size(); ++n) {
    Fe d = seq[n];
    for (size_t t = 1; t <= L && t <= n; ++t) d += C[t] * seq[n - t];
    if (d.is_zero()) {
      ++m;
      continue;
    }
    Fe coef = d / b;
    if (2 * L <= n) {
      std::vector<Fe> T = C;
      if (C.size() < B.size() + m) C.resize(B.size() + m);
      for (size_t t = 0; t < B.size(); ++t) C[t + m] -= coef * B[t];
      L = n + 1 - L;
      B = std::move(T);
      b = d;
      m = 1;
    } else {
      if (C.size() < B.size() + m) C.resize(B.size() + m);
      for (size_t t = 0; t < B.size(); ++t) C[t + m] -= coef * B[t];
      ++m;
    }
  }
  RecurrenceResult r;
  r.coeffs.resize(L);
  C.resize(L + 1);
  for (size_t t = 1; t <= L; ++t) r.coeffs[t - 1] = -C[t];
  return r;
}

namespace {

using Poly = std::vector<Fe>;  // ascending coefficients

void poly_trim(Poly& p) {
  while (!p.empty() && p.back().is_zero()) p.pop_back();
}

Poly poly_mulmod(const Poly& a, const Poly& b, const Poly& mod) {
  Poly r(a.size() + b.size() - 1);
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].is_zero()) continue;
    for (size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  }
  // Reduce modulo mod (monic).
  size_t d = mod.size() - 1;
  for (size_t i = r.size(); i-- > d;) {
    Fe c = r[i];
    if (c.is_zero()) continue;
    r[i] = fe(0);
    for (size_t j = 0; j < d; ++j) r[i - d + j] -= c * mod[j];
  }
  r.resize(d);
  return r;
}

Poly poly_powmod(Poly base, uint64_t e, const Poly& mod) {
  Poly r{fe(1)};
  r.resize(mod.size() - 1);
  base.resize(std::max(base.size(), mod.size() - 1));
  while (e) {
    if (e & 1) r = poly_mulmod(r, base, mod);
    base = poly_mulmod(base, base, mod);
    e >>= 1;
  }
  return r;
}

Poly poly_gcd(Poly a, Poly b) {
  poly_trim(a);
  poly_trim(b);
  while (!b.empty()) {
    // a mod b
    Fe lead_inv = b.back().inv();
    while (a.size() >= b.size()) {
      Fe c = a.back() * lead_inv;
      size_t off = a.size() - b.size();
      for (size_t i = 0; i < b.size(); ++i) a[off + i] -= c * b[i];
      poly_trim(a);
      if (a.empty()) break;
    }
    std::swap(a, b);
  }
  if (!a.empty()) {
    Fe inv = a.back().inv();
    for (auto& c : a) c *= inv;
  }
  return a;
}

Fe poly_eval(const Poly& p, Fe x) {
  Fe r = fe(0);
  for (size_t i = p.size(); i-- > 0;) r = r * x + p[i];
  return r;
}

// num / den for monic den when the division is exact.
Poly poly_div_exact(Poly num, const Poly& den) {
  assert(num.size() >= den.size());
  size_t dq = num.size() - den.size();
  Poly quo(dq + 1);
  for (size_t i = dq + 1; i-- > 0;) {
    Fe c = num[i + den.size() - 1];
    quo[i] = c;
    if (!c.is_zero()) {
      for (size_t j = 0; j < den.size(); ++j) num[i + j] -= c * den[j];
    }
  }
  return quo;
}

// Collects roots of a polynomial known to split into distinct linear
// factors, by equal-degree splitting. Returns false on unexpected shape.
bool split_linear(const Poly& f, std::mt19937_64& rng, std::vector<Fe>& out) {
  size_t d = f.size() - 1;
  if (d == 0) return true;
  if (d == 1) {
    out.push_back(-f[0]);  // monic x + c -> root -c
    return true;
  }
  for (int attempt = 0; attempt < 128; ++attempt) {
    Fe delta = Fe(rng() % Fe::P);
    Poly shifted{delta, fe(1)};  // x + delta
    Poly h = poly_powmod(shifted, (Fe::P - 1) / 2, f);
    poly_trim(h);
    if (h.empty()) continue;
    h[0] -= fe(1);
    Poly g = poly_gcd(h, f);
    if (g.empty() || g.size() == 1 || g.size() == f.size()) continue;
    Poly q = poly_div_exact(f, g);
    return split_linear(g, rng, out) && split_linear(q, rng, out);
  }
  return false;
}

}  // namespace

std::optional<std::vector<uint64_t>> roots_in_range(const std::vector<Fe>& poly,
                                                    uint64_t m) {
  Poly f = poly;
  poly_trim(f);
  if (f.empty()) return std::nullopt;
  size_t d = f.size() - 1;
  if (d == 0) return std::vector<uint64_t>{};
  {
    Fe inv = f.back().inv();
    for (auto& c : f) c *= inv;
  }
  // Keep only the part that splits into distinct linear factors:
  // gcd(f, x^P - x). x^P mod f via powmod.
  Poly x{fe(0), fe(1)};
  Poly xp = poly_powmod(x, Fe::P, f);
  Poly diff = xp;
  if (diff.size() < 2) diff.resize(2);
  diff[1] -= fe(1);
  Poly lin = poly_gcd(diff, f);
  if (lin.size() != f.size()) return std::nullopt;  // repeated or nonlinear factors

  std::vector<Fe> roots;
  roots.reserve(d);
  std::mt19937_64 rng(0x6b706572u);  // fixed seed: deterministic decode
  if (!split_linear(f, rng, roots)) {
    // Degenerate fallback: direct scan over candidate positions.
    roots.clear();
    for (uint64_t v = 1; v <= m && roots.size() < d; ++v) {
      if (poly_eval(f, fe(v)).is_zero()) roots.push_back(fe(v));
    }
    if (roots.size() != d) return std::nullopt;
  }
  std::vector<uint64_t> out;
  out.reserve(d);
  for (Fe r : roots) {
    uint64_t v = r.value();
    if (v == 0 || v > m) return std::nullopt;
    out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  for (size_t i = 1; i < out.size(); ++i) {
    if (out[i] == out[i - 1]) return std::nullopt;
  }
  if (out.size() != d) return std::nullopt;
  return out;
}

std::vector<Fe> solve_transposed_vandermonde(const std::vector<Fe>& nodes,
                                             const std::vector<Fe>& rhs) {
  size_t n = nodes.size();
  assert(rhs.size() >= n);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (nodes[i] == nodes[j]) throw SingularSystem("repeated vandermonde node");
    }
  }
  if (n == 0) return {};
  // Master polynomial M(x) = prod (x - x_i).
  Poly master{fe(1)};
  for (Fe x : nodes) {
    master.insert(master.begin(), fe(0));
    for (size_t i = 0; i + 1 < master.size(); ++i) master[i] -= x * master[i + 1];
  }
  std::vector<Fe> out(n);
  for (size_t i = 0; i < n; ++i) {
    // N_i = M / (x - x_i) by synthetic division; then
    // c_i = (sum_j N_i[j] rhs[j]) / N_i(x_i).
    Poly ni(n);
    Fe carry = master[n];
    for (size_t j = n; j-- > 0;) {
      ni[j] = carry;
      carry = master[j] + carry * nodes[i];
    }
    Fe num = fe(0), den = fe(0), xp = fe(1);
    for (size_t j = 0; j < n; ++j) {
      num += ni[j] * rhs[j];
      den += ni[j] * xp;
      xp *= nodes[i];
    }
    if (den.is_zero()) throw SingularSystem("vandermonde node collapse");
    out[i] = num / den;
  }
  return out;
}

Fe range_power_sum(uint64_t s, uint64_t m) {
  // f(m) = sum_{r=0}^{m-1} r^s is a degree-(s+1) polynomial in m.
  // Interpolate through m' = 0..s+2 and evaluate at m (Lagrange with
  // consecutive integer nodes).
  uint64_t pts = s + 3;
  if (m <= pts) {
    Fe acc = fe(0);
    for (uint64_t r = 0; r < m; ++r) acc += (s == 0) ? fe(1) : fe(r).pow(s);
    return acc;
  }
  std::vector<Fe> y(pts);
  Fe acc = fe(0);
  for (uint64_t t = 0; t < pts; ++t) {
    y[t] = acc;  // f(t)
    acc += (s == 0) ? fe(1) : fe(t).pow(s);
  }
  // Lagrange at nodes 0..pts-1: prefix/suffix products of (m - t).
  std::vector<Fe> pre(pts + 1), suf(pts + 1);
  pre[0] = fe(1);
  for (uint64_t t = 0; t < pts; ++t) pre[t + 1] = pre[t] * (Fe(m % Fe::P) - fe(t));
  suf[pts] = fe(1);
  for (uint64_t t = pts; t-- > 0;) suf[t] = suf[t + 1] * (Fe(m % Fe::P) - fe(t));
  // Factorials for denominators.
  std::vector<Fe> fact(pts);
  fact[0] = fe(1);
  for (uint64_t t = 1; t < pts; ++t) fact[t] = fact[t - 1] * fe(t);
  Fe sum = fe(0);
  for (uint64_t t = 0; t < pts; ++t) {
    Fe num = pre[t] * suf[t + 1];
    Fe den = fact[t] * fact[pts - 1 - t];
    Fe term = y[t] * num / den;
    if ((pts - 1 - t) & 1) sum -= term; else sum += term;
  }
  return sum;
}

BinomialTable::BinomialTable(size_t max_n) {
  rows_.resize(max_n + 1);
  for (size_t n = 0; n <= max_n; ++n) {
    rows_[n].resize(n + 1);
    rows_[n][0] = rows_[n][n] = fe(1);
    for (size_t r = 1; r < n; ++r) rows_[n][r] = rows_[n - 1][r - 1] + rows_[n - 1][r];
  }
}

}  // namespace kper
