#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace kper {

// Arithmetic modulo the Mersenne prime 2^61 - 1. Positions and character
// codes are embedded directly as residues, so everything stays in one
// machine word and reduction is two shifts and an add.
class Fe {
public:
  static constexpr uint64_t P = (uint64_t{1} << 61) - 1;

  constexpr Fe() : v_(0) {}
  constexpr explicit Fe(uint64_t raw) : v_(reduce_full(raw)) {}

  static constexpr Fe from_raw(uint64_t v) {
    Fe f;
    f.v_ = v;
    return f;
  }
  static Fe from_int(int64_t x) {
    if (x >= 0) return Fe(static_cast<uint64_t>(x));
    uint64_t m = static_cast<uint64_t>(-x) % P;
    return Fe::from_raw(m == 0 ? 0 : P - m);
  }

  constexpr uint64_t value() const { return v_; }
  constexpr bool is_zero() const { return v_ == 0; }

  friend constexpr Fe operator+(Fe a, Fe b) {
    uint64_t s = a.v_ + b.v_;
    if (s >= P) s -= P;
    return from_raw(s);
  }
  friend constexpr Fe operator-(Fe a, Fe b) {
    uint64_t s = a.v_ >= b.v_ ? a.v_ - b.v_ : a.v_ + P - b.v_;
    return from_raw(s);
  }
  friend constexpr Fe operator*(Fe a, Fe b) {
    __uint128_t p = static_cast<__uint128_t>(a.v_) * b.v_;
    uint64_t lo = static_cast<uint64_t>(p & P);
    uint64_t hi = static_cast<uint64_t>(p >> 61);
    uint64_t s = lo + hi;
    if (s >= P) s -= P;
    return from_raw(s);
  }
  constexpr Fe operator-() const { return from_raw(v_ == 0 ? 0 : P - v_); }
  Fe& operator+=(Fe o) { return *this = *this + o; }
  Fe& operator-=(Fe o) { return *this = *this - o; }
  Fe& operator*=(Fe o) { return *this = *this * o; }
  friend constexpr bool operator==(Fe a, Fe b) { return a.v_ == b.v_; }
  friend constexpr bool operator!=(Fe a, Fe b) { return a.v_ != b.v_; }

  Fe pow(uint64_t e) const {
    Fe r = from_raw(1), b = *this;
    while (e) {
      if (e & 1) r *= b;
      b *= b;
      e >>= 1;
    }
    return r;
  }
  Fe inv() const {
    assert(v_ != 0);
    return pow(P - 2);
  }
  friend Fe operator/(Fe a, Fe b) { return a * b.inv(); }

private:
  static constexpr uint64_t reduce_full(uint64_t x) {
    uint64_t r = (x & P) + (x >> 61);
    if (r >= P) r -= P;
    return r;
  }
  uint64_t v_;
};

inline Fe fe(uint64_t x) { return Fe(x); }

// Small-integer view: residues representing values in [-bound, bound]
// around zero. Returns false if the residue is not that small.
inline bool fe_as_small_int(Fe x, int64_t bound, int64_t* out) {
  uint64_t v = x.value();
  if (v <= static_cast<uint64_t>(bound)) {
    *out = static_cast<int64_t>(v);
    return true;
  }
  if (Fe::P - v <= static_cast<uint64_t>(bound)) {
    *out = -static_cast<int64_t>(Fe::P - v);
    return true;
  }
  return false;
}

}  // namespace kper
