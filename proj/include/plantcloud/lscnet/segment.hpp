// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT

#ifndef PLANTCLOUD_LSCNET_SEGMENT_HPP
#define PLANTCLOUD_LSCNET_SEGMENT_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "plantcloud/core/point_cloud.hpp"
#include "plantcloud/lscnet/network.hpp"
#include "plantcloud/lscnet/train.hpp"
#include "plantcloud/superpoint/extract.hpp"

namespace plantcloud {

/// Category scores for one superpoint: {stem, leaf}. The input is canonically
/// resampled/normalized, so the result is independent of point order.
template <typename S>
std::array<double, 2> classify(const std::vector<Vec3>& superpoint_positions,
                               LscnetModel<S>& model, std::uint64_t seed = 0) {
  const Mat<S> input = prepare_input<S>(superpoint_positions, model.spec.input_points,
                                        hash_combine(seed, 0xda7a5e7ULL));
  const auto ws = lscnet_forward(model, input, seed, false, nullptr);
  return ws.scores;
}

template <typename S>
Semantic classify_label(const std::vector<Vec3>& superpoint_positions, LscnetModel<S>& model,
                        std::uint64_t seed = 0) {
  const auto scores = classify(superpoint_positions, model, seed);
  return scores[1] > scores[0] ? Semantic::Leaf : Semantic::Stem;
}

struct SegmentResult {
  PointCloud cloud; // semantic labels overwritten with predictions
  SuperpointPartition partition;
  std::vector<Semantic> superpoint_labels;
};

/// Stage 1 + stage 2: extract superpoints, classify each one, stamp the
/// predicted class on every member point.
template <typename S>
SegmentResult segment_plant(const PointCloud& cloud, LscnetModel<S>& model,
                            const SuperpointConfig& config, std::uint64_t seed = 0) {
  SegmentResult result;
  result.cloud = cloud;
  result.partition = extract_superpoints(cloud, config);
  result.superpoint_labels.resize(result.partition.count());
  for (std::size_t sp = 0; sp < result.partition.count(); ++sp) {
    std::vector<Vec3> positions;
    positions.reserve(result.partition.members[sp].size());
    for (std::size_t i : result.partition.members[sp])
      positions.push_back(cloud.positions[i]);
    const Semantic label = classify_label(positions, model, seed);
    result.superpoint_labels[sp] = label;
    for (std::size_t i : result.partition.members[sp]) result.cloud.semantic[i] = label;
  }
  return result;
}

} // namespace plantcloud

#endif // PLANTCLOUD_LSCNET_SEGMENT_HPP
