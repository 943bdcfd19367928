// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT

#ifndef PLANTCLOUD_SUPERPOINT_CLUSTER2D_HPP
#define PLANTCLOUD_SUPERPOINT_CLUSTER2D_HPP

#include <cmath>
#include <vector>

#include "plantcloud/core/connected_components.hpp"
#include "plantcloud/core/types.hpp"

namespace plantcloud {

/// Single-linkage Euclidean clustering of embedded 2D points.
inline std::vector<std::size_t> euclidean_cluster_2d(const std::vector<Vec2>& embedding,
                                                     double dist_threshold) {
  return radius_components(embedding, dist_threshold);
}

/// Principal-axis linearity of a 2D point set: lambda1 / (lambda1 + lambda2)
/// of the covariance eigenvalues. Coincident points yield 0.
inline double linearity_ratio(const std::vector<Vec2>& pts, const std::vector<std::size_t>& idx) {
  if (idx.size() < 3) throw DataError("linearity needs at least 3 points");
  Vec2 mean{0, 0};
  for (std::size_t i : idx) mean += pts[i];
  mean = mean / static_cast<double>(idx.size());
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i : idx) {
    const Vec2 d = pts[i] - mean;
    sxx += d.x * d.x;
    sxy += d.x * d.y;
    syy += d.y * d.y;
  }
  const double tr = sxx + syy;
  if (tr <= 0.0) return 0.0; // all points coincide
  const double det = sxx * syy - sxy * sxy;
  const double disc = std::sqrt(std::max(tr * tr - 4.0 * det, 0.0));
  const double lambda1 = 0.5 * (tr + disc);
  return lambda1 / tr;
}

/// True when the cluster is a line-like structure that should bypass
/// convexity splitting.
inline bool detect_linear(const std::vector<Vec2>& embedding, const std::vector<std::size_t>& cluster,
                          double linearity_threshold = 0.95) {
  return linearity_ratio(embedding, cluster) >= linearity_threshold;
}

} // namespace plantcloud

#endif // PLANTCLOUD_SUPERPOINT_CLUSTER2D_HPP
