#include "kper/oracle.hpp"

#include <algorithm>
#include <map>

namespace kper {

std::vector<PeriodReport> naive_kmismatch_periods(const std::string& t, uint64_t k,
                                                  uint64_t delta,
                                                  const WeightPlugin& w) {
  uint64_t n = t.size();
  uint64_t hi = std::min(n, n / 2 + delta);
  std::vector<PeriodReport> out;
  for (uint64_t p = 1; p <= hi; ++p) {
    MismatchInfo mi;
    uint64_t count = 0;
    for (uint64_t i = 1; i + p - 1 <= n && count <= k; ++i) {
      unsigned char left = t[p + i - 2], right = t[i - 1];
      if (left != right) {
        ++count;
        if (count <= k) mi.add(i, left, right);
      }
    }
    if (count > k) continue;
    PeriodReport r;
    r.period = p;
    r.mi = std::move(mi);
    r.weight = w.of_string(t.substr(p - 1));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<NaiveOccurrence> naive_occurrences(const std::string& p,
                                               const std::string& t, uint64_t k) {
  uint64_t m = p.size(), n = t.size();
  std::vector<NaiveOccurrence> out;
  if (m == 0 || m > n) return out;
  for (uint64_t end = m; end <= n; ++end) {
    uint64_t start = end - m;  // 0-based window start
    MismatchInfo mi;
    uint64_t count = 0;
    for (uint64_t i = 0; i < m && count <= k; ++i) {
      unsigned char left = t[start + i], right = p[i];
      if (left != right) {
        ++count;
        if (count <= k) mi.add(i + 1, left, right);
      }
    }
    if (count > k) continue;
    out.push_back({end, std::move(mi)});
  }
  return out;
}

std::optional<NaiveApproxPeriod> naive_approx_period(const std::string& p,
                                                     uint64_t k) {
  uint64_t m = p.size();
  uint64_t kk = std::max<uint64_t>(k, 1);
  uint64_t qmax = m / (128 * kk);
  for (uint64_t q = 1; q <= qmax; ++q) {
    // Column-wise majority over the q residue classes.
    std::string cand(q, '\0');
    for (uint64_t c = 0; c < q; ++c) {
      std::map<char, uint64_t> freq;
      for (uint64_t i = c; i < m; i += q) ++freq[p[i]];
      uint64_t best = 0;
      for (const auto& [ch, f] : freq)
        if (f > best) {
          best = f;
          cand[c] = ch;
        }
    }
    if (!is_primitive(cand)) continue;
    uint64_t hd = 0;
    for (uint64_t i = 0; i < m; ++i)
      if (p[i] != cand[i % q]) ++hd;
    if (hd <= 2 * k) return NaiveApproxPeriod{cand, hd};
  }
  return std::nullopt;
}

std::vector<uint64_t> naive_wildcard_periods(const std::string& t,
                                             unsigned char wildcard,
                                             uint64_t delta) {
  uint64_t n = t.size();
  uint64_t hi = std::min(n, n / 2 + delta);
  std::vector<uint64_t> out;
  for (uint64_t p = 1; p <= hi; ++p) {
    bool ok = true;
    for (uint64_t i = 1; i + p - 1 <= n && ok; ++i) {
      unsigned char a = t[p + i - 2], b = t[i - 1];
      if (a != b && a != wildcard && b != wildcard) ok = false;
    }
    if (ok) out.push_back(p);
  }
  return out;
}

bool is_primitive(const std::string& s) {
  std::string ss = s + s;
  for (size_t i = 1; i + s.size() <= ss.size(); ++i) {
    if (i != 0 && i != s.size() && ss.compare(i, s.size(), s) == 0) return false;
  }
  return true;
}

}  // namespace kper
