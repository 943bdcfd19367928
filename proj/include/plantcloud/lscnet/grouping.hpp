// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT
//
// Spherical region grouping for set-abstraction layers.

#ifndef PLANTCLOUD_LSCNET_GROUPING_HPP
#define PLANTCLOUD_LSCNET_GROUPING_HPP

#include <algorithm>
#include <cstdint>
#include <tuple>
#include <vector>

#include "plantcloud/core/types.hpp"

namespace plantcloud {

namespace detail {

/// In-ball candidates ordered canonically by (distance to center, lexical
/// coordinates, index). The order depends only on geometry, so it is stable
/// under input permutation.
inline std::vector<std::size_t> ball_candidates(const std::vector<Vec3>& points,
                                                const Vec3& center, double radius) {
  std::vector<std::size_t> in_ball;
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (squared_distance(points[i], center) <= r2) in_ball.push_back(i);
  std::sort(in_ball.begin(), in_ball.end(), [&](std::size_t a, std::size_t b) {
    const double da = squared_distance(points[a], center);
    const double db = squared_distance(points[b], center);
    if (da != db) return da < db;
    const Vec3& pa = points[a];
    const Vec3& pb = points[b];
    return std::tie(pa.x, pa.y, pa.z, a) < std::tie(pb.x, pb.y, pb.z, b);
  });
  return in_ball;
}

inline std::size_t globally_nearest(const std::vector<Vec3>& points, const Vec3& center) {
  std::size_t best = 0;
  double best_d = squared_distance(points[0], center);
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double d = squared_distance(points[i], center);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

} // namespace detail

/// Index selection of `ball_group`: K indices into `points`, chosen from the
/// ball of `radius` around `center`.
///   - more than K in-ball: K drawn without replacement (seeded shuffle of the
///     canonical candidate order);
///   - fewer than K: all of them, padded with copies of the in-ball point
///     nearest the center;
///   - empty ball: the globally nearest point repeated K times.
inline std::vector<std::size_t> ball_group_indices(const std::vector<Vec3>& points,
                                                   const Vec3& center, double radius,
                                                   std::size_t k, std::uint64_t seed) {
  if (points.empty()) throw DataError("ball_group on empty point set");
  if (radius <= 0.0) throw DataError("ball_group radius must be > 0");
  if (k == 0) throw DataError("ball_group needs k >= 1");

  std::vector<std::size_t> candidates = detail::ball_candidates(points, center, radius);
  if (candidates.empty()) return std::vector<std::size_t>(k, detail::globally_nearest(points, center));
  if (candidates.size() <= k) {
    std::vector<std::size_t> out = candidates;
    out.resize(k, candidates.front()); // pad with the nearest in-ball point
    return out;
  }
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i)
    std::swap(candidates[i], candidates[i + rng.bounded(candidates.size() - i)]);
  candidates.resize(k);
  return candidates;
}

/// Grouped rows for one region: K point rows re-expressed relative to the
/// center, plus the matching feature rows (empty when `features` is empty).
struct BallGroup {
  std::vector<std::size_t> indices;
  std::vector<Vec3> centered_points;
  std::vector<std::vector<double>> features;
};

inline BallGroup ball_group(const std::vector<Vec3>& points,
                            const std::vector<std::vector<double>>& features, const Vec3& center,
                            double radius, std::size_t k, std::uint64_t seed) {
  if (!features.empty() && features.size() != points.size())
    throw DataError("ball_group feature rows do not match point count");
  BallGroup out;
  out.indices = ball_group_indices(points, center, radius, k, seed);
  out.centered_points.reserve(k);
  for (std::size_t i : out.indices) out.centered_points.push_back(points[i] - center);
  if (!features.empty()) {
    out.features.reserve(k);
    for (std::size_t i : out.indices) out.features.push_back(features[i]);
  }
  return out;
}

} // namespace plantcloud

#endif // PLANTCLOUD_LSCNET_GROUPING_HPP
