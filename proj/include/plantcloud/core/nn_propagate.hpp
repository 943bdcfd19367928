// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT

#ifndef PLANTCLOUD_CORE_NN_PROPAGATE_HPP
#define PLANTCLOUD_CORE_NN_PROPAGATE_HPP

#include <vector>

#include "plantcloud/core/kdtree.hpp"
#include "plantcloud/core/point_cloud.hpp"

namespace plantcloud {

/// For every target point, the index of its nearest source point
/// (lowest index on exact ties).
template <typename Point>
std::vector<std::size_t> nearest_indices(const std::vector<Point>& source,
                                         const std::vector<Point>& targets) {
  if (source.empty()) throw DataError("nearest-neighbor propagation from empty source");
  KdTree<Point> tree(source);
  std::vector<std::size_t> out(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) out[i] = tree.nearest(targets[i]);
  return out;
}

/// Copies each target point's semantic label from its nearest source point.
inline PointCloud nn_propagate(const PointCloud& source, const PointCloud& target) {
  const std::vector<std::size_t> nn = nearest_indices(source.positions, target.positions);
  PointCloud out = target;
  for (std::size_t i = 0; i < out.size(); ++i) out.semantic[i] = source.semantic[nn[i]];
  return out;
}

} // namespace plantcloud

#endif // PLANTCLOUD_CORE_NN_PROPAGATE_HPP
