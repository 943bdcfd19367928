// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT

#ifndef PLANTCLOUD_NORMALIZE_LANDMARKS_HPP
#define PLANTCLOUD_NORMALIZE_LANDMARKS_HPP

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "plantcloud/core/types.hpp"

namespace plantcloud {

/// One hand-measured reference distance between two landmark points.
struct LandmarkPair {
  std::size_t r = 0;
  std::size_t s = 0;
  double true_distance_cm = 0.0;
};

/// Hand-picked reference points in reconstruction coordinates, the measured
/// metric distances between selected pairs, and the picked plant-base point.
struct LandmarkSet {
  std::vector<Vec3> points;
  std::vector<LandmarkPair> pairs;
  Vec3 base;

  void validate() const {
    if (points.size() < 2) throw DataError("landmark set needs at least 2 points");
    if (pairs.empty()) throw DataError("landmark set needs at least one distance pair");
    for (const LandmarkPair& p : pairs) {
      if (p.r == p.s) throw DataError("landmark pair references the same point twice");
      if (p.r >= points.size() || p.s >= points.size())
        throw DataError("landmark pair index out of range");
      if (p.true_distance_cm <= 0.0) throw DataError("landmark pair distance must be > 0");
    }
  }
};

/// Text format, one record per line ('#' starts a comment):
///   base x y z        (required, first record)
///   lm x y z          (landmarks, indexed in order of appearance)
///   pair r s d_cm     (true metric distance between landmarks r and s)
inline LandmarkSet load_landmarks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open landmark file: " + path);
  LandmarkSet set;
  bool have_base = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    if (tag == "base") {
      Vec3 p;
      if (!(ls >> p.x >> p.y >> p.z)) throw DataError("malformed base line at " + where);
      set.base = p;
      have_base = true;
    } else if (tag == "lm") {
      if (!have_base) throw DataError("landmark file must start with a base line: " + where);
      Vec3 p;
      if (!(ls >> p.x >> p.y >> p.z)) throw DataError("malformed lm line at " + where);
      set.points.push_back(p);
    } else if (tag == "pair") {
      if (!have_base) throw DataError("landmark file must start with a base line: " + where);
      LandmarkPair p;
      if (!(ls >> p.r >> p.s >> p.true_distance_cm))
        throw DataError("malformed pair line at " + where);
      set.pairs.push_back(p);
    } else {
      throw DataError("unknown landmark record '" + tag + "' at " + where);
    }
  }
  if (!have_base) throw DataError("landmark file has no base line: " + path);
  set.validate();
  return set;
}

inline void save_landmarks(const LandmarkSet& set, const std::string& path) {
  set.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write landmark file: " + path);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "base %.17g %.17g %.17g\n", set.base.x, set.base.y, set.base.z);
  out << buf;
  for (const Vec3& p : set.points) {
    std::snprintf(buf, sizeof(buf), "lm %.17g %.17g %.17g\n", p.x, p.y, p.z);
    out << buf;
  }
  for (const LandmarkPair& p : set.pairs) {
    std::snprintf(buf, sizeof(buf), "pair %zu %zu %.17g\n", p.r, p.s, p.true_distance_cm);
    out << buf;
  }
}

} // namespace plantcloud

#endif // PLANTCLOUD_NORMALIZE_LANDMARKS_HPP
