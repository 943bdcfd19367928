// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT

#ifndef PLANTCLOUD_CORE_VOXEL_FILTER_HPP
#define PLANTCLOUD_CORE_VOXEL_FILTER_HPP

#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "plantcloud/core/kdtree.hpp"
#include "plantcloud/core/point_cloud.hpp"

namespace plantcloud {

struct VoxelGridSpec {
  double edge = 0.12; // voxel cube edge length (cm)
};

struct VoxelFilterResult {
  PointCloud cloud;
  /// For every original point, the index of the voxel point it merged into.
  std::vector<std::size_t> mapping;
};

namespace detail {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = hash_combine(h, static_cast<std::uint64_t>(k.x));
    h = hash_combine(h, static_cast<std::uint64_t>(k.y));
    h = hash_combine(h, static_cast<std::uint64_t>(k.z));
    return static_cast<std::size_t>(h);
  }
};

inline std::int64_t voxel_coord(double v, double edge) {
  return static_cast<std::int64_t>(std::floor(v / edge));
}

} // namespace detail

/// Voxel-grid average downsampling. One output point per occupied voxel,
/// placed at the member mean; colors are averaged, confidence is the member
/// maximum, and semantic/instance labels are copied from the original point
/// nearest to the mean (lowest index on ties). Output voxels appear in order
/// of first member occurrence, so the result is deterministic.
inline VoxelFilterResult voxel_filter(const PointCloud& cloud, const VoxelGridSpec& spec) {
  if (spec.edge <= 0.0) throw DataError("voxel edge must be > 0");
  VoxelFilterResult result;
  result.mapping.resize(cloud.size());
  if (cloud.empty()) return result;

  std::unordered_map<detail::VoxelKey, std::size_t, detail::VoxelKeyHash> voxel_of;
  voxel_of.reserve(cloud.size());
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    const detail::VoxelKey key{detail::voxel_coord(p.x, spec.edge),
                               detail::voxel_coord(p.y, spec.edge),
                               detail::voxel_coord(p.z, spec.edge)};
    auto [it, inserted] = voxel_of.try_emplace(key, members.size());
    if (inserted) members.emplace_back();
    members[it->second].push_back(i);
    result.mapping[i] = it->second;
  }

  KdTree3 tree(cloud.positions);

  PointCloud& out = result.cloud;
  const std::size_t m = members.size();
  out.positions.resize(m);
  out.semantic.resize(m);
  if (cloud.has_colors()) out.colors.resize(m);
  if (cloud.has_confidence()) out.confidence.resize(m);
  if (cloud.has_instance()) out.instance.resize(m);

  for (std::size_t v = 0; v < m; ++v) {
    Vec3 mean{0, 0, 0};
    double cr = 0, cg = 0, cb = 0;
    std::int32_t conf = 0;
    for (std::size_t i : members[v]) {
      mean += cloud.positions[i];
      if (cloud.has_colors()) {
        cr += cloud.colors[i][0];
        cg += cloud.colors[i][1];
        cb += cloud.colors[i][2];
      }
      if (cloud.has_confidence()) conf = std::max(conf, cloud.confidence[i]);
    }
    const double inv = 1.0 / static_cast<double>(members[v].size());
    mean *= inv;
    out.positions[v] = mean;

    const std::size_t src = tree.nearest(mean);
    out.semantic[v] = cloud.semantic[src];
    if (cloud.has_instance()) out.instance[v] = cloud.instance[src];
    if (cloud.has_colors())
      out.colors[v] = Color{static_cast<std::uint8_t>(std::lround(cr * inv)),
                            static_cast<std::uint8_t>(std::lround(cg * inv)),
                            static_cast<std::uint8_t>(std::lround(cb * inv))};
    if (cloud.has_confidence()) out.confidence[v] = conf;
  }
  return result;
}

} // namespace plantcloud

#endif // PLANTCLOUD_CORE_VOXEL_FILTER_HPP
