// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT

#ifndef PLANTCLOUD_NORMALIZE_SCALE_HPP
#define PLANTCLOUD_NORMALIZE_SCALE_HPP

#include "plantcloud/core/point_cloud.hpp"
#include "plantcloud/normalize/landmarks.hpp"

namespace plantcloud {

/// Metric scale factor S = D / D_hat, where D averages the measured distances
/// of the listed pairs and D_hat averages the corresponding reconstructed
/// distances ||p_r - p_s|| over the same pair set.
inline double scale_factor(const LandmarkSet& landmarks) {
  landmarks.validate();
  double true_sum = 0.0;
  double recon_sum = 0.0;
  for (const LandmarkPair& pair : landmarks.pairs) {
    const double d_hat = distance(landmarks.points[pair.r], landmarks.points[pair.s]);
    if (d_hat <= 0.0) throw NumericError("coincident landmark pair (zero reconstructed distance)");
    true_sum += pair.true_distance_cm;
    recon_sum += d_hat;
  }
  const double count = static_cast<double>(landmarks.pairs.size());
  return (true_sum / count) / (recon_sum / count);
}

/// p' = S * p for every position; all other attributes untouched.
inline PointCloud apply_scale(const PointCloud& cloud, double scale) {
  if (scale <= 0.0) throw DataError("scale factor must be > 0");
  PointCloud out = cloud;
  for (Vec3& p : out.positions) p *= scale;
  return out;
}

} // namespace plantcloud

#endif // PLANTCLOUD_NORMALIZE_SCALE_HPP
