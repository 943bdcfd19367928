// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT

#ifndef PLANTCLOUD_NORMALIZE_PLANE_MSAC_HPP
#define PLANTCLOUD_NORMALIZE_PLANE_MSAC_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "plantcloud/core/point_cloud.hpp"
#include "plantcloud/core/types.hpp"

namespace plantcloud {

/// Plane n . p + offset = 0 with unit normal.
struct PlaneModel {
  Vec3 normal{0, 0, 1};
  double offset = 0.0;
  double inlier_threshold = 0.5;

  double signed_distance(const Vec3& p) const { return dot(normal, p) + offset; }
  double distance(const Vec3& p) const { return std::abs(signed_distance(p)); }
};

struct MsacConfig {
  double inlier_threshold = 0.5; // cm
  int iterations = 1000;
  std::uint64_t seed = 0;
};

namespace detail {

inline double msac_cost(const std::vector<Vec3>& pts, const Vec3& n, double d, double thr) {
  const double t2 = thr * thr;
  double cost = 0.0;
  for (const Vec3& p : pts) {
    const double r = dot(n, p) + d;
    cost += std::min(r * r, t2);
  }
  return cost;
}

/// Least-squares plane through the given points (centroid + smallest
/// covariance eigenvector). Returns false when degenerate.
inline bool lsq_plane(const std::vector<Vec3>& pts, const std::vector<std::size_t>& idx,
                      Vec3& n_out, double& d_out) {
  if (idx.size() < 3) return false;
  Vec3 c{0, 0, 0};
  for (std::size_t i : idx) c += pts[i];
  c *= 1.0 / static_cast<double>(idx.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i : idx) {
    const Vec3 q = pts[i] - c;
    const Eigen::Vector3d v(q.x, q.y, q.z);
    cov += v * v.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  if (es.info() != Eigen::Success) return false;
  const Eigen::Vector3d n = es.eigenvectors().col(0); // smallest eigenvalue
  const double len = n.norm();
  if (len == 0.0) return false;
  n_out = Vec3{n.x() / len, n.y() / len, n.z() / len};
  d_out = -dot(n_out, c);
  return true;
}

} // namespace detail

/// Robust plane estimation: MSAC hypothesis search over seeded 3-point
/// samples scored by sum(min(dist^2, threshold^2)), followed by a
/// least-squares polish on the winning hypothesis' inliers that is kept only
/// if it does not increase the MSAC cost. The returned normal points toward
/// the side holding the majority of the cloud.
inline PlaneModel fit_plane_msac(const PointCloud& cloud, const MsacConfig& config = {}) {
  const std::vector<Vec3>& pts = cloud.positions;
  const std::size_t n = pts.size();
  if (n < 3) throw NumericError("plane fit needs at least 3 points");
  if (config.inlier_threshold <= 0.0) throw DataError("inlier threshold must be > 0");
  if (config.iterations <= 0) throw DataError("MSAC iterations must be > 0");

  // degeneracy guard: scale-aware epsilon for the sample cross product
  Vec3 lo = pts[0], hi = pts[0];
  for (const Vec3& p : pts) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  const double extent = norm(hi - lo);
  const double min_cross = 1e-12 * extent * extent;

  Rng rng(config.seed);
  bool found = false;
  Vec3 best_n{0, 0, 1};
  double best_d = 0.0;
  double best_cost = 0.0;
  for (int it = 0; it < config.iterations; ++it) {
    const std::size_t a = rng.bounded(n);
    const std::size_t b = rng.bounded(n);
    const std::size_t c = rng.bounded(n);
    if (a == b || a == c || b == c) continue;
    const Vec3 cr = cross(pts[b] - pts[a], pts[c] - pts[a]);
    const double len = norm(cr);
    if (len <= min_cross) continue; // collinear sample
    const Vec3 nn = cr / len;
    const double d = -dot(nn, pts[a]);
    const double cost = detail::msac_cost(pts, nn, d, config.inlier_threshold);
    if (!found || cost < best_cost) {
      found = true;
      best_n = nn;
      best_d = d;
      best_cost = cost;
    }
  }
  if (!found) throw NumericError("plane fit degenerate: no non-collinear sample found");

  // polish on inliers, keep only if the MSAC cost does not get worse
  std::vector<std::size_t> inliers;
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(dot(best_n, pts[i]) + best_d) <= config.inlier_threshold) inliers.push_back(i);
  Vec3 ref_n;
  double ref_d;
  if (detail::lsq_plane(pts, inliers, ref_n, ref_d)) {
    const double ref_cost = detail::msac_cost(pts, ref_n, ref_d, config.inlier_threshold);
    if (ref_cost <= best_cost) {
      best_n = ref_n;
      best_d = ref_d;
    }
  }

  // orient toward the majority side
  std::size_t positive = 0, negative = 0;
  for (const Vec3& p : pts) {
    const double s = dot(best_n, p) + best_d;
    if (s > 0) ++positive;
    else if (s < 0) ++negative;
  }
  if (negative > positive) {
    best_n = best_n * -1.0;
    best_d = -best_d;
  }

  PlaneModel model;
  model.normal = best_n;
  model.offset = best_d;
  model.inlier_threshold = config.inlier_threshold;
  return model;
}

} // namespace plantcloud

#endif // PLANTCLOUD_NORMALIZE_PLANE_MSAC_HPP
