// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT
//
// Superpoint extraction: voxel downsample -> t-SNE to 2D -> Euclidean
// clustering -> line detection / convexity refinement -> nearest-neighbor
// upsampling back to full resolution.

#ifndef PLANTCLOUD_SUPERPOINT_EXTRACT_HPP
#define PLANTCLOUD_SUPERPOINT_EXTRACT_HPP

#include <cstdint>
#include <vector>

#include "plantcloud/core/nn_propagate.hpp"
#include "plantcloud/core/point_cloud.hpp"
#include "plantcloud/core/voxel_filter.hpp"
#include "plantcloud/superpoint/cluster2d.hpp"
#include "plantcloud/superpoint/convexify.hpp"
#include "plantcloud/superpoint/tsne.hpp"

namespace plantcloud {

struct SuperpointConfig {
  VoxelGridSpec voxel{0.12};
  TsneConfig tsne{};
  double cluster_threshold_2d = 1.0;
  double linearity_threshold = 0.95;
  ConvexifyConfig convexify{};
  std::uint64_t seed = 0;
};

/// Disjoint, exhaustive grouping of a cloud into superpoints.
struct SuperpointPartition {
  std::vector<std::size_t> labels;              // superpoint id per point
  std::vector<std::vector<std::size_t>> members; // id -> point indices

  std::size_t count() const { return members.size(); }

  void validate(std::size_t cloud_size) const {
    if (labels.size() != cloud_size) throw DataError("superpoint labels length mismatch");
    std::vector<char> seen(cloud_size, 0);
    for (std::size_t id = 0; id < members.size(); ++id) {
      if (members[id].empty()) throw DataError("empty superpoint");
      for (std::size_t i : members[id]) {
        if (i >= cloud_size || seen[i] || labels[i] != id)
          throw DataError("superpoint membership inconsistent");
        seen[i] = 1;
      }
    }
    for (char s : seen)
      if (!s) throw DataError("point missing from superpoint partition");
  }
};

namespace detail {

inline SuperpointPartition partition_from_labels(std::vector<std::size_t> labels) {
  SuperpointPartition part;
  std::size_t count = 0;
  for (std::size_t l : labels) count = std::max(count, l + 1);
  std::vector<std::vector<std::size_t>> members(count);
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  // drop ids that lost all members during propagation, keep order stable
  std::vector<std::size_t> remap(count, 0);
  std::size_t next = 0;
  for (std::size_t id = 0; id < count; ++id) {
    remap[id] = next;
    if (!members[id].empty()) ++next;
  }
  part.members.reserve(next);
  for (std::size_t id = 0; id < count; ++id)
    if (!members[id].empty()) part.members.push_back(std::move(members[id]));
  for (std::size_t& l : labels) l = remap[l];
  part.labels = std::move(labels);
  return part;
}

} // namespace detail

/// Full superpoint stage on an arbitrary-resolution cloud. Deterministic for
/// a fixed config; an empty cloud yields an empty partition.
inline SuperpointPartition extract_superpoints(const PointCloud& cloud,
                                               const SuperpointConfig& config = {}) {
  SuperpointPartition empty;
  if (cloud.empty()) return empty;

  const VoxelFilterResult down = voxel_filter(cloud, config.voxel);
  std::vector<Vec3> embed_points = down.cloud.positions;

  // dense t-SNE cap: embed a seeded subsample and upsample the rest
  if (embed_points.size() > config.tsne.max_points) {
    Rng rng(hash_combine(config.seed, 0xe3b0c4u));
    std::vector<Vec3>& pts = embed_points;
    const std::size_t keep = config.tsne.max_points;
    for (std::size_t i = 0; i < keep; ++i)
      std::swap(pts[i], pts[i + rng.bounded(pts.size() - i)]);
    pts.resize(keep);
  }

  TsneConfig tsne_cfg = config.tsne;
  tsne_cfg.seed = hash_combine(config.seed, tsne_cfg.seed);
  const TsneResult embedded = tsne_embed(embed_points, tsne_cfg);

  const std::vector<std::size_t> initial =
      euclidean_cluster_2d(embedded.embedding, config.cluster_threshold_2d);
  std::size_t cluster_count = 0;
  for (std::size_t c : initial) cluster_count = std::max(cluster_count, c + 1);
  std::vector<std::vector<std::size_t>> clusters(cluster_count);
  for (std::size_t i = 0; i < initial.size(); ++i) clusters[initial[i]].push_back(i);

  ConvexifyConfig cvx = config.convexify;
  cvx.seed = hash_combine(config.seed, cvx.seed);

  std::vector<std::size_t> embed_labels(embed_points.size(), 0);
  std::size_t next_id = 0;
  for (const std::vector<std::size_t>& cluster : clusters) {
    const bool splittable = cluster.size() >= 4 &&
                            !detect_linear(embedded.embedding, cluster, config.linearity_threshold);
    if (!splittable) {
      for (std::size_t i : cluster) embed_labels[i] = next_id;
      ++next_id;
      continue;
    }
    for (const ConvexRegion& region : convexify(embedded.embedding, cluster, cvx)) {
      for (std::size_t i : region.indices) embed_labels[i] = next_id;
      ++next_id;
    }
  }

  // carry assignments back to the full-resolution cloud
  const std::vector<std::size_t> nn = nearest_indices(embed_points, cloud.positions);
  std::vector<std::size_t> full_labels(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) full_labels[i] = embed_labels[nn[i]];

  SuperpointPartition part = detail::partition_from_labels(std::move(full_labels));
  part.validate(cloud.size());
  return part;
}

} // namespace plantcloud

#endif // PLANTCLOUD_SUPERPOINT_EXTRACT_HPP
