// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT

#ifndef PLANTCLOUD_LSCNET_FPS_HPP
#define PLANTCLOUD_LSCNET_FPS_HPP

#include <vector>

#include "plantcloud/core/types.hpp"

namespace plantcloud {

/// Farthest point sampling: greedy max-min selection of `count` indices
/// starting from `start_index`. Ties go to the lowest index, so the result is
/// fully deterministic.
inline std::vector<std::size_t> fps(const std::vector<Vec3>& points, std::size_t count,
                                    std::size_t start_index = 0) {
  const std::size_t n = points.size();
  if (count > n) throw DataError("fps: requested more centers than points");
  if (start_index >= n) throw DataError("fps: start index out of range");
  std::vector<std::size_t> chosen;
  if (count == 0) return chosen;
  chosen.reserve(count);
  chosen.push_back(start_index);
  std::vector<double> min_d2(n);
  for (std::size_t i = 0; i < n; ++i) min_d2[i] = squared_distance(points[i], points[start_index]);
  while (chosen.size() < count) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (min_d2[i] > min_d2[best]) best = i; // strict '>' keeps the lowest index on ties
    chosen.push_back(best);
    for (std::size_t i = 0; i < n; ++i)
      min_d2[i] = std::min(min_d2[i], squared_distance(points[i], points[best]));
  }
  return chosen;
}

} // namespace plantcloud

#endif // PLANTCLOUD_LSCNET_FPS_HPP
