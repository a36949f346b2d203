#include "kper/stats.hpp"

#include <algorithm>
#include <cmath>

namespace kper {

uint64_t TimeRecorder::percentile_ns(double q) const {
  if (samples_.empty()) return 0;
  std::vector<uint64_t> sorted = samples_;
  std::sort(sorted.begin(), sorted.end());
  size_t rank = static_cast<size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  if (rank == 0) rank = 1;
  if (rank > sorted.size()) rank = sorted.size();
  return sorted[rank - 1];
}

uint64_t TimeRecorder::max_ns() const {
  if (samples_.empty()) return 0;
  return *std::max_element(samples_.begin(), samples_.end());
}

}  // namespace kper
