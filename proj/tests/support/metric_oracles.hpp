#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "savn/eval/metrics.hpp"

namespace savn::oracle {

using eval::EpisodeResult;

inline std::vector<EpisodeResult> synthetic(std::mt19937_64& rng, std::size_t n) {
  std::vector<EpisodeResult> out;
  for (std::size_t i = 0; i < n; ++i) {
    EpisodeResult r;
    r.task_index = i;
    r.optimal_length = static_cast<int>(rng() % 12);
    r.success = rng() % 3 != 0;
    r.path_length = std::max(1, r.optimal_length + static_cast<int>(rng() % 15) - 3);
    for (int s = 0; s < r.path_length; ++s) r.failed.push_back(rng() % 4 == 0);
    out.push_back(r);
  }
  return out;
}

// Straight summation in plain loops, same order as the definition.
inline double oracle_success(const std::vector<EpisodeResult>& rs) {
  double s = 0;
  for (const auto& r : rs) s += r.success ? 1.0 : 0.0;
  return s / static_cast<double>(rs.size());
}

inline double oracle_spl(const std::vector<EpisodeResult>& rs) {
  double s = 0;
  for (const auto& r : rs) {
    const double ratio = r.optimal_length == 0 && r.path_length == 0
                             ? 1.0
                             : static_cast<double>(r.optimal_length) / std::max(r.path_length, r.optimal_length);
    s += (r.success ? 1.0 : 0.0) * ratio;
  }
  return s / static_cast<double>(rs.size());
}

}  // namespace savn::oracle
