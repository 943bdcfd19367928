// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT

#ifndef PLANTCLOUD_CORE_POINT_CLOUD_HPP
#define PLANTCLOUD_CORE_POINT_CLOUD_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "plantcloud/core/types.hpp"

namespace plantcloud {

/// Two-class semantic labeling. Codes match the on-disk PLY encoding.
enum class Semantic : std::uint8_t {
  Stem = 0,
  Leaf = 1,
  Unlabeled = 255,
};

inline const char* to_string(Semantic s) {
  switch (s) {
    case Semantic::Stem: return "stem";
    case Semantic::Leaf: return "leaf";
    default: return "unlabeled";
  }
}

inline Semantic semantic_from_code(unsigned code) {
  if (code == 0) return Semantic::Stem;
  if (code == 1) return Semantic::Leaf;
  if (code == 255) return Semantic::Unlabeled;
  throw DataError("unknown semantic code " + std::to_string(code));
}

using Color = std::array<std::uint8_t, 3>;

/// Column-oriented point cloud. Positions are in centimetres once a cloud has
/// been through scale recovery; raw reconstructions are unitless.
///
/// `semantic` is always present (defaulting to Unlabeled); `colors`,
/// `confidence` and `instance` are optional and either empty or of size N.
struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Color> colors;            // optional
  std::vector<std::int32_t> confidence; // optional; #images seeing the point
  std::vector<Semantic> semantic;
  std::vector<std::int32_t> instance;   // optional; organ instance ids

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }

  bool has_colors() const { return !colors.empty(); }
  bool has_confidence() const { return !confidence.empty(); }
  bool has_instance() const { return !instance.empty(); }

  void resize(std::size_t n) {
    positions.resize(n);
    semantic.resize(n, Semantic::Unlabeled);
    if (has_colors()) colors.resize(n);
    if (has_confidence()) confidence.resize(n);
    if (has_instance()) instance.resize(n);
  }

  void reserve(std::size_t n) {
    positions.reserve(n);
    semantic.reserve(n);
    colors.reserve(n);
    confidence.reserve(n);
    instance.reserve(n);
  }

  /// Append one point carrying every attribute this cloud stores.
  void push_back(const Vec3& p, Semantic label = Semantic::Unlabeled) {
    positions.push_back(p);
    semantic.push_back(label);
    if (has_colors() && colors.size() < positions.size()) colors.push_back({0, 0, 0});
    if (has_confidence() && confidence.size() < positions.size()) confidence.push_back(0);
    if (has_instance() && instance.size() < positions.size()) instance.push_back(0);
  }

  /// Throws DataError if attribute lengths disagree, positions are not finite,
  /// or confidence values are negative.
  void validate() const {
    const std::size_t n = positions.size();
    if (semantic.size() != n)
      throw DataError("semantic attribute length mismatch");
    if (!colors.empty() && colors.size() != n)
      throw DataError("color attribute length mismatch");
    if (!confidence.empty() && confidence.size() != n)
      throw DataError("confidence attribute length mismatch");
    if (!instance.empty() && instance.size() != n)
      throw DataError("instance attribute length mismatch");
    for (const Vec3& p : positions)
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
        throw DataError("non-finite position");
    for (std::int32_t c : confidence)
      if (c < 0) throw DataError("negative confidence value");
    for (std::int32_t i : instance)
      if (i < 0) throw DataError("negative instance id");
  }

  /// New cloud keeping exactly the points at `indices`, attributes included.
  PointCloud select(const std::vector<std::size_t>& indices) const {
    PointCloud out;
    out.positions.reserve(indices.size());
    out.semantic.reserve(indices.size());
    if (has_colors()) out.colors.reserve(indices.size());
    if (has_confidence()) out.confidence.reserve(indices.size());
    if (has_instance()) out.instance.reserve(indices.size());
    for (std::size_t i : indices) {
      out.positions.push_back(positions[i]);
      out.semantic.push_back(semantic[i]);
      if (has_colors()) out.colors.push_back(colors[i]);
      if (has_confidence()) out.confidence.push_back(confidence[i]);
      if (has_instance()) out.instance.push_back(instance[i]);
    }
    return out;
  }
};

} // namespace plantcloud

#endif // PLANTCLOUD_CORE_POINT_CLOUD_HPP
