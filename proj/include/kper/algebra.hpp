#pragma once

#include <cassert>
#include <cstdint>
#include <optional>
#include <vector>

#include "kper/field.hpp"

namespace kper {

struct RecurrenceResult {
  // Minimal LFSR: s[j] = sum_{t=1..L} coeffs[t-1] * s[j-t].
  std::vector<Fe> coeffs;
  size_t length() const { return coeffs.size(); }
  // Characteristic polynomial x^L - c1 x^(L-1) - ... - cL, ascending order.
  std::vector<Fe> characteristic() const;
};

// Minimal linear recurrence of a sequence (Berlekamp-Massey).
RecurrenceResult berlekamp_massey(const std::vector<Fe>& seq);

// All roots of poly (ascending coefficients) that are integers in [1..m].
// Returns nullopt (decode reject) unless poly splits into deg(poly)
// distinct roots inside the range. Roots are returned sorted.
std::optional<std::vector<uint64_t>> roots_in_range(const std::vector<Fe>& poly,
                                                    uint64_t m);

// Solves sum_i c_i * x_i^j = rhs[j] for j = 0..n-1 given distinct nodes x_i.
// Throws SingularSystem if nodes repeat.
std::vector<Fe> solve_transposed_vandermonde(const std::vector<Fe>& nodes,
                                             const std::vector<Fe>& rhs);

// sum_{r=0}^{m-1} r^s in the field, with 0^0 = 1. m is not reduced first:
// the sum is over actual integers 0..m-1.
Fe range_power_sum(uint64_t s, uint64_t m);

// Binomial coefficient C(n, r) mod P for moderate n (computed row-wise).
class BinomialTable {
public:
  explicit BinomialTable(size_t max_n);
  Fe at(size_t n, size_t r) const {
    assert(n < rows_.size() && r <= n);
    return rows_[n][r];
  }
  size_t max_n() const { return rows_.size() - 1; }

private:
  std::vector<std::vector<Fe>> rows_;
};

}  // namespace kper
