// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT

#ifndef PLANTCLOUD_CORE_CONNECTED_COMPONENTS_HPP
#define PLANTCLOUD_CORE_CONNECTED_COMPONENTS_HPP

#include <vector>

#include "plantcloud/core/kdtree.hpp"
#include "plantcloud/core/point_cloud.hpp"

namespace plantcloud {

/// Single-linkage components: two points share an id iff a chain with
/// consecutive gaps <= link_radius connects them. Ids are assigned in
/// discovery order (component 0 contains point 0).
template <typename Point>
std::vector<std::size_t> radius_components(const std::vector<Point>& points, double link_radius) {
  if (link_radius <= 0.0) throw DataError("link radius must be > 0");
  const std::size_t n = points.size();
  std::vector<std::size_t> component(n, static_cast<std::size_t>(-1));
  if (n == 0) return component;

  KdTree<Point> tree(points);
  std::vector<std::size_t> stack;
  std::size_t next_id = 0;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (component[seed] != static_cast<std::size_t>(-1)) continue;
    component[seed] = next_id;
    stack.assign(1, seed);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      for (std::size_t nb : tree.radius_search(points[cur], link_radius)) {
        if (component[nb] == static_cast<std::size_t>(-1)) {
          component[nb] = next_id;
          stack.push_back(nb);
        }
      }
    }
    ++next_id;
  }
  return component;
}

/// Component id per point of the cloud under 3D radius linkage.
inline std::vector<std::size_t> connected_components(const PointCloud& cloud, double link_radius) {
  return radius_components(cloud.positions, link_radius);
}

/// Indices of the largest component (ties resolved toward the lower id).
inline std::vector<std::size_t> largest_component(const std::vector<std::size_t>& component_ids) {
  std::size_t count = 0;
  for (std::size_t id : component_ids) count = std::max(count, id + 1);
  std::vector<std::size_t> sizes(count, 0);
  for (std::size_t id : component_ids) ++sizes[id];
  std::size_t best = 0;
  for (std::size_t id = 1; id < count; ++id)
    if (sizes[id] > sizes[best]) best = id;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < component_ids.size(); ++i)
    if (component_ids[i] == best) out.push_back(i);
  return out;
}

} // namespace plantcloud

#endif // PLANTCLOUD_CORE_CONNECTED_COMPONENTS_HPP
