// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT
//
// Seeded synthetic plant generator: a noisy branching stem carrying leaves
// (elliptical blades on petioles), labeled at generation. Used to build
// desk-scale corpora for training and evaluation.

#ifndef PLANTCLOUD_SYNTH_HPP
#define PLANTCLOUD_SYNTH_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "plantcloud/core/ply_io.hpp"
#include "plantcloud/core/point_cloud.hpp"
#include "plantcloud/core/types.hpp"

namespace plantcloud {

struct SynthPlantParams {
  double height_min = 16.0, height_max = 26.0; // trunk height (cm)
  double trunk_radius = 0.32;
  int branches_min = 2, branches_max = 3;
  double branch_radius = 0.2;
  int leaves_min = 6, leaves_max = 9;
  double petiole_length_min = 3.0, petiole_length_max = 4.5;
  double petiole_radius = 0.12;
  double blade_major_min = 1.9, blade_major_max = 2.9; // ellipse semi-axes
  double blade_aspect = 0.62;
  double spacing = 0.3;       // surface sample spacing (cm)
  double petiole_spacing = 0.22;
  double noise = 0.03;        // radial jitter (cm)
  double min_confidence_share = 0.92; // fraction of points seen by >= 6 images
};

namespace detail {

inline Vec3 any_orthogonal(const Vec3& d) {
  const Vec3 axis = std::abs(d.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  return normalized(cross(d, axis));
}

/// Samples the lateral surface of a straight cylinder segment.
inline void sample_cylinder(Rng& rng, const Vec3& base, const Vec3& dir_unit, double length,
                            double radius, double spacing, double noise, PointCloud& cloud,
                            Semantic label, std::int32_t instance_id) {
  const Vec3 u = any_orthogonal(dir_unit);
  const Vec3 v = cross(dir_unit, u);
  const int rings = std::max(2, static_cast<int>(length / spacing));
  const int around = std::max(3, static_cast<int>(2.0 * 3.14159265358979 * radius / spacing));
  for (int i = 0; i <= rings; ++i) {
    const double t = length * static_cast<double>(i) / rings;
    for (int j = 0; j < around; ++j) {
      const double a = 2.0 * 3.14159265358979 * (static_cast<double>(j) + rng.uniform()) / around;
      const double r = radius + rng.normal(0.0, noise);
      const Vec3 p = base + dir_unit * t + u * (r * std::cos(a)) + v * (r * std::sin(a));
      cloud.positions.push_back(p);
      cloud.semantic.push_back(label);
      cloud.instance.push_back(instance_id);
      cloud.colors.push_back({static_cast<std::uint8_t>(100 + rng.bounded(40)),
                              static_cast<std::uint8_t>(70 + rng.bounded(30)),
                              static_cast<std::uint8_t>(30 + rng.bounded(25))});
    }
  }
}

/// Samples a gently curved elliptical blade spanned by (major, minor) axes.
inline void sample_blade(Rng& rng, const Vec3& center, const Vec3& major_unit,
                         const Vec3& normal_unit, double semi_major, double semi_minor,
                         double spacing, double noise, PointCloud& cloud,
                         std::int32_t instance_id) {
  const Vec3 minor_unit = cross(normal_unit, major_unit);
  const double bend = 0.12 * semi_major; // droop toward the tip
  const int nu = std::max(3, static_cast<int>(2.0 * semi_major / spacing));
  const int nv = std::max(3, static_cast<int>(2.0 * semi_minor / spacing));
  for (int i = 0; i <= nu; ++i)
    for (int j = 0; j <= nv; ++j) {
      const double su = -1.0 + 2.0 * (static_cast<double>(i) + rng.uniform() - 0.5) / nu;
      const double sv = -1.0 + 2.0 * (static_cast<double>(j) + rng.uniform() - 0.5) / nv;
      if (su * su + sv * sv > 1.0) continue;
      const double droop = bend * su * su;
      const Vec3 p = center + major_unit * (semi_major * su) + minor_unit * (semi_minor * sv) +
                     normal_unit * (rng.normal(0.0, noise) - droop);
      cloud.positions.push_back(p);
      cloud.semantic.push_back(Semantic::Leaf);
      cloud.instance.push_back(instance_id);
      cloud.colors.push_back({static_cast<std::uint8_t>(40 + rng.bounded(40)),
                              static_cast<std::uint8_t>(120 + rng.bounded(80)),
                              static_cast<std::uint8_t>(30 + rng.bounded(40))});
    }
}

} // namespace detail

/// One labeled plant in metric coordinates, its base at the origin.
/// Deterministic for a given seed.
inline PointCloud make_synth_plant(std::uint64_t seed, const SynthPlantParams& params = {}) {
  Rng rng(hash_combine(seed, 0x97a57ULL));
  PointCloud cloud;
  cloud.colors.reserve(4096);
  cloud.instance.reserve(4096);

  const double height = rng.uniform(params.height_min, params.height_max);
  const Vec3 lean = normalized(Vec3{rng.normal(0, 0.05), rng.normal(0, 0.05), 1.0});
  detail::sample_cylinder(rng, {0, 0, 0}, lean, height, params.trunk_radius, params.spacing,
                          params.noise, cloud, Semantic::Stem, 0);

  struct Attachment {
    Vec3 point;
    Vec3 outward;
  };
  std::vector<Attachment> attach_sites;

  const int branches =
      params.branches_min + static_cast<int>(rng.bounded(
                                static_cast<std::uint64_t>(params.branches_max - params.branches_min + 1)));
  for (int b = 0; b < branches; ++b) {
    const double h = height * rng.uniform(0.35, 0.75);
    const double azimuth = rng.uniform(0, 2 * 3.14159265358979);
    const Vec3 dir = normalized(Vec3{std::cos(azimuth) * 0.8, std::sin(azimuth) * 0.8,
                                     rng.uniform(0.45, 0.9)});
    const Vec3 base = lean * h;
    const double blen = rng.uniform(5.0, 8.5);
    detail::sample_cylinder(rng, base, dir, blen, params.branch_radius, params.spacing,
                            params.noise, cloud, Semantic::Stem, 0);
    attach_sites.push_back({base + dir * blen, dir});
  }
  // leaf attachments along the upper trunk as well
  for (int t = 0; t < 5; ++t) {
    const double h = height * rng.uniform(0.45, 0.98);
    const double azimuth = rng.uniform(0, 2 * 3.14159265358979);
    attach_sites.push_back(
        {lean * h, normalized(Vec3{std::cos(azimuth), std::sin(azimuth), rng.uniform(0.1, 0.5)})});
  }

  const int leaves =
      params.leaves_min + static_cast<int>(rng.bounded(
                              static_cast<std::uint64_t>(params.leaves_max - params.leaves_min + 1)));
  for (int l = 0; l < leaves; ++l) {
    const Attachment site = attach_sites[rng.bounded(attach_sites.size())];
    Vec3 pdir = normalized(site.outward + Vec3{rng.normal(0, 0.25), rng.normal(0, 0.25),
                                               rng.uniform(0.1, 0.6)});
    const double plen = rng.uniform(params.petiole_length_min, params.petiole_length_max);
    detail::sample_cylinder(rng, site.point, pdir, plen, params.petiole_radius,
                            params.petiole_spacing, params.noise, cloud, Semantic::Stem, 0);
    const double semi_major = rng.uniform(params.blade_major_min, params.blade_major_max);
    const double semi_minor = semi_major * params.blade_aspect;
    // blade continues along the petiole, tilted toward horizontal
    Vec3 major = normalized(pdir + Vec3{0, 0, -0.4 * pdir.z});
    Vec3 normal = normalized(cross(major, detail::any_orthogonal(major)));
    if (normal.z < 0) normal *= -1.0;
    normal = normalized(normal + Vec3{rng.normal(0, 0.15), rng.normal(0, 0.15), 0.2});
    major = normalized(major - normal * dot(major, normal));
    const Vec3 center = site.point + pdir * plen + major * (semi_major * 0.95);
    detail::sample_blade(rng, center, major, normal, semi_major, semi_minor, params.spacing,
                         params.noise, cloud, l + 1);
  }

  // reconstruction confidence: mostly >= 6 with a tail below the cutoff
  cloud.confidence.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (rng.uniform() < params.min_confidence_share)
      cloud.confidence[i] = 6 + static_cast<std::int32_t>(rng.bounded(15));
    else
      cloud.confidence[i] = static_cast<std::int32_t>(rng.bounded(6));
  }
  cloud.validate();
  return cloud;
}

/// Writes `count` plants as binary PLY files plant_000.ply .. into `dir`.
/// Bit-identical for identical seeds.
inline std::vector<std::string> write_synth_corpus(const std::string& dir, std::uint64_t seed,
                                                   int count,
                                                   const std::vector<std::string>& comments = {}) {
  if (count < 1) throw DataError("synth corpus needs count >= 1");
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  for (int i = 0; i < count; ++i) {
    const PointCloud plant = make_synth_plant(hash_combine(seed, static_cast<std::uint64_t>(i)));
    char name[32];
    std::snprintf(name, sizeof(name), "plant_%03d.ply", i);
    const std::string path = (std::filesystem::path(dir) / name).string();
    PlyWriteOptions opt;
    opt.comments = comments;
    opt.comments.push_back("synthetic plant seed=" + std::to_string(seed) +
                           " index=" + std::to_string(i));
    save_ply(plant, path, opt);
    paths.push_back(path);
  }
  return paths;
}

} // namespace plantcloud

#endif // PLANTCLOUD_SYNTH_HPP
