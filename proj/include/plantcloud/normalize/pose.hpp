// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT

#ifndef PLANTCLOUD_NORMALIZE_POSE_HPP
#define PLANTCLOUD_NORMALIZE_POSE_HPP

#include <array>
#include <cmath>

#include "plantcloud/core/connected_components.hpp"
#include "plantcloud/core/point_cloud.hpp"
#include "plantcloud/normalize/plane_msac.hpp"

namespace plantcloud {

/// Proper rigid motion p_hat = R (p - origin).
struct RigidTransform {
  std::array<std::array<double, 3>, 3> rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  Vec3 origin{0, 0, 0};

  Vec3 apply(const Vec3& p) const {
    const Vec3 q = p - origin;
    return {rotation[0][0] * q.x + rotation[0][1] * q.y + rotation[0][2] * q.z,
            rotation[1][0] * q.x + rotation[1][1] * q.y + rotation[1][2] * q.z,
            rotation[2][0] * q.x + rotation[2][1] * q.y + rotation[2][2] * q.z};
  }
};

/// Minimal rotation taking unit vector `from` onto unit vector `to`
/// (Rodrigues about from x to). The antiparallel case rotates pi about a
/// fixed axis orthogonal to `to`.
inline std::array<std::array<double, 3>, 3> minimal_rotation(const Vec3& from, const Vec3& to) {
  const Vec3 k = cross(from, to);
  const double s2 = squared_norm(k);
  const double c = dot(from, to);
  std::array<std::array<double, 3>, 3> r{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  if (s2 < 1e-30) {
    if (c > 0) return r; // aligned
    // antiparallel: pi about an axis orthogonal to `to` (x-axis for to = z)
    Vec3 axis = std::abs(to.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    axis = normalized(axis - to * dot(axis, to));
    const double x = axis.x, y = axis.y, z = axis.z;
    return {{{2 * x * x - 1, 2 * x * y, 2 * x * z},
             {2 * x * y, 2 * y * y - 1, 2 * y * z},
             {2 * x * z, 2 * y * z, 2 * z * z - 1}}};
  }
  // R = I + [k]x + [k]x^2 * (1 - c) / s^2
  const double f = (1.0 - c) / s2;
  const double kx = k.x, ky = k.y, kz = k.z;
  r[0][0] = 1 + f * (-ky * ky - kz * kz);
  r[0][1] = -kz + f * kx * ky;
  r[0][2] = ky + f * kx * kz;
  r[1][0] = kz + f * kx * ky;
  r[1][1] = 1 + f * (-kx * kx - kz * kz);
  r[1][2] = -kx + f * ky * kz;
  r[2][0] = -ky + f * kx * kz;
  r[2][1] = kx + f * ky * kz;
  r[2][2] = 1 + f * (-kx * kx - ky * ky);
  return r;
}

/// Rotates/translates the cloud so the fitted plane becomes z = 0 and the
/// base point (projected onto the plane) becomes the origin, with the plane
/// normal mapped to +z. Rigid, so pairwise distances are preserved.
inline std::pair<PointCloud, RigidTransform>
normalize_pose(const PointCloud& cloud, const PlaneModel& plane, const Vec3& base) {
  const double nlen = norm(plane.normal);
  if (std::abs(nlen - 1.0) > 1e-6) throw DataError("plane normal must be unit length");

  RigidTransform t;
  t.rotation = minimal_rotation(plane.normal, Vec3{0, 0, 1});
  // keep the origin on the fitted plane so the plane maps exactly to z = 0
  t.origin = base - plane.normal * plane.signed_distance(base);

  PointCloud out = cloud;
  for (Vec3& p : out.positions) p = t.apply(p);
  return {std::move(out), t};
}

/// Keeps points with z >= 0 and returns the largest connected component
/// under the given linkage radius.
inline PointCloud extract_plant(const PointCloud& cloud, double link_radius) {
  std::vector<std::size_t> above;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.positions[i].z >= 0.0) above.push_back(i);
  if (above.empty()) throw DataError("no points left after z >= 0 filter");
  const PointCloud kept = cloud.select(above);
  const std::vector<std::size_t> comp = connected_components(kept, link_radius);
  return kept.select(largest_component(comp));
}

} // namespace plantcloud

#endif // PLANTCLOUD_NORMALIZE_POSE_HPP
