// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT
//
// Convexity-driven cluster refinement: a cluster is kept when its solidity
// (alpha-shape area over convex-hull area) clears a threshold, otherwise it
// is bisected with spectral clustering on a k-NN graph and the halves are
// refined recursively.

#ifndef PLANTCLOUD_SUPERPOINT_CONVEXIFY_HPP
#define PLANTCLOUD_SUPERPOINT_CONVEXIFY_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "plantcloud/core/kdtree.hpp"
#include "plantcloud/core/nn_propagate.hpp"
#include "plantcloud/core/types.hpp"

namespace plantcloud {

namespace detail {

/// Andrew's monotone chain; returns hull vertices in counter-clockwise order.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  const std::size_t n = pts.size();
  if (n < 3) return pts;
  std::vector<Vec2> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = n - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

inline double polygon_area(const std::vector<Vec2>& poly) {
  double acc = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    acc += cross(a, b);
  }
  return std::abs(acc) * 0.5;
}

struct DelaunayTriangle {
  int a, b, c;
  Vec2 center;
  double radius2;
};

inline bool circumcircle(const Vec2& a, const Vec2& b, const Vec2& c, Vec2& center,
                         double& radius2) {
  const double d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
  const double scale = std::max({squared_norm(a - b), squared_norm(b - c), squared_norm(c - a)});
  if (std::abs(d) < 1e-12 * std::max(scale, 1e-300)) return false; // collinear
  const double a2 = squared_norm(a), b2 = squared_norm(b), c2 = squared_norm(c);
  center.x = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
  center.y = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
  radius2 = squared_distance(a, center);
  return true;
}

/// Bowyer-Watson Delaunay triangulation. Exact duplicate points are inserted
/// once; collinear triangles carry an infinite circumcircle so they never
/// survive refinement.
inline std::vector<DelaunayTriangle> delaunay(const std::vector<Vec2>& input) {
  std::vector<Vec2> pts = input;
  Vec2 lo{std::numeric_limits<double>::max(), std::numeric_limits<double>::max()};
  Vec2 hi{-lo.x, -lo.y};
  for (const Vec2& p : pts) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
  }
  const Vec2 mid = (lo + hi) * 0.5;
  const double span = std::max({hi.x - lo.x, hi.y - lo.y, 1e-9});
  const int n = static_cast<int>(pts.size());
  pts.push_back({mid.x - 30 * span, mid.y - 10 * span});
  pts.push_back({mid.x + 30 * span, mid.y - 10 * span});
  pts.push_back({mid.x, mid.y + 30 * span});

  std::vector<DelaunayTriangle> tris;
  {
    DelaunayTriangle super{n, n + 1, n + 2, {}, 0};
    circumcircle(pts[n], pts[n + 1], pts[n + 2], super.center, super.radius2);
    tris.push_back(super);
  }

  std::vector<char> bad;
  struct Edge { int u, v; };
  std::vector<Edge> boundary;
  for (int p = 0; p < n; ++p) {
    // skip exact duplicates of already-inserted points
    bool dup = false;
    for (int q = 0; q < p && !dup; ++q) dup = pts[p] == pts[q];
    if (dup) continue;

    bad.assign(tris.size(), 0);
    for (std::size_t t = 0; t < tris.size(); ++t)
      if (squared_distance(pts[p], tris[t].center) <= tris[t].radius2 * (1.0 + 1e-12))
        bad[t] = 1;
    boundary.clear();
    auto add_edge = [&](int u, int v) {
      for (std::size_t e = 0; e < boundary.size(); ++e) {
        if ((boundary[e].u == v && boundary[e].v == u) ||
            (boundary[e].u == u && boundary[e].v == v)) {
          boundary[e] = boundary.back();
          boundary.pop_back();
          return;
        }
      }
      boundary.push_back({u, v});
    };
    for (std::size_t t = 0; t < tris.size(); ++t) {
      if (!bad[t]) continue;
      add_edge(tris[t].a, tris[t].b);
      add_edge(tris[t].b, tris[t].c);
      add_edge(tris[t].c, tris[t].a);
    }
    std::vector<DelaunayTriangle> keep;
    keep.reserve(tris.size());
    for (std::size_t t = 0; t < tris.size(); ++t)
      if (!bad[t]) keep.push_back(tris[t]);
    tris.swap(keep);
    for (const Edge& e : boundary) {
      DelaunayTriangle nt{e.u, e.v, p, {}, 0};
      if (!circumcircle(pts[e.u], pts[e.v], pts[p], nt.center, nt.radius2)) {
        nt.center = (pts[e.u] + pts[e.v] + pts[p]) / 3.0;
        nt.radius2 = std::numeric_limits<double>::infinity();
      }
      tris.push_back(nt);
    }
  }

  std::vector<DelaunayTriangle> interior;
  for (const DelaunayTriangle& t : tris)
    if (t.a < n && t.b < n && t.c < n) interior.push_back(t);
  return interior;
}

inline double triangle_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return std::abs(cross(b - a, c - a)) * 0.5;
}

/// Area of the alpha shape: total area of Delaunay triangles whose
/// circumradius is at most alpha.
inline double alpha_shape_area(const std::vector<Vec2>& pts, double alpha) {
  const double alpha2 = alpha * alpha;
  double area = 0.0;
  for (const DelaunayTriangle& t : delaunay(pts))
    if (t.radius2 <= alpha2) area += triangle_area(pts[t.a], pts[t.b], pts[t.c]);
  return area;
}

inline double median_nn_distance(const std::vector<Vec2>& pts) {
  KdTree2 tree(pts);
  std::vector<double> d;
  d.reserve(pts.size());
  for (const Vec2& p : pts) {
    const auto nn = tree.knn(p, 2); // the first hit is the point itself
    if (nn.size() == 2) d.push_back(std::sqrt(nn[1].first));
  }
  if (d.empty()) return 0.0;
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  return d[d.size() / 2];
}

} // namespace detail

struct ConvexifyConfig {
  double solidity_threshold = 0.8;
  int max_depth = 6;
  // alpha = alpha_scale * median NN distance. 4x keeps ~99% of the area of a
  // uniformly sampled convex region while still rejecting triangles that
  // bridge concavities much wider than the point spacing.
  double alpha_scale = 4.0;
  int spectral_knn = 10;
  std::size_t spectral_max_points = 1024; // above this the split is estimated on a subsample
  std::uint64_t seed = 0;
};

/// Solidity of a 2D point set: alpha-shape area over convex-hull area,
/// clamped to [0, 1]. Degenerate (collinear or tiny) sets count as solid.
inline double solidity(const std::vector<Vec2>& pts, double alpha_scale = 4.0) {
  const std::vector<Vec2> hull = detail::convex_hull(pts);
  const double hull_area = detail::polygon_area(hull);
  if (hull.size() < 3 || hull_area <= 1e-12) return 1.0;
  const double alpha = alpha_scale * detail::median_nn_distance(pts);
  if (alpha <= 0.0) return 1.0;
  const double area = detail::alpha_shape_area(pts, alpha);
  return std::clamp(area / hull_area, 0.0, 1.0);
}

/// Two-way spectral bisection: symmetrized k-NN graph, Gaussian affinities
/// with sigma = median edge length, normalized Laplacian, sign of the Fiedler
/// vector. Inputs above `max_points` are split on a seeded subsample and the
/// remaining points take the side of their nearest subsampled neighbor.
/// Returns 0/1 per point; an all-equal result means the split failed.
inline std::vector<int> spectral_split(const std::vector<Vec2>& pts, int knn,
                                       std::size_t max_points, std::uint64_t seed) {
  const std::size_t n = pts.size();
  std::vector<int> labels(n, 0);
  if (n < 2) return labels;

  if (n > max_points) {
    Rng rng(hash_combine(seed, 0x5b5ecu));
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = 0; i < max_points; ++i)
      std::swap(perm[i], perm[i + rng.bounded(n - i)]);
    std::vector<Vec2> sub(max_points);
    for (std::size_t i = 0; i < max_points; ++i) sub[i] = pts[perm[i]];
    const std::vector<int> sub_labels = spectral_split(sub, knn, max_points, seed);
    const std::vector<std::size_t> nn = nearest_indices(sub, pts);
    for (std::size_t i = 0; i < n; ++i) labels[i] = sub_labels[nn[i]];
    return labels;
  }

  const int k = std::min<int>(knn, static_cast<int>(n) - 1);
  KdTree2 tree(pts);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                            static_cast<Eigen::Index>(n));
  std::vector<double> edge_lengths;
  for (std::size_t i = 0; i < n; ++i) {
    const auto nn = tree.knn(pts[i], static_cast<std::size_t>(k) + 1);
    for (const auto& [d2, j] : nn) {
      if (j == i) continue;
      w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
      w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = 1.0;
      edge_lengths.push_back(std::sqrt(d2));
    }
  }
  std::nth_element(edge_lengths.begin(), edge_lengths.begin() + edge_lengths.size() / 2,
                   edge_lengths.end());
  double sigma = edge_lengths[edge_lengths.size() / 2];
  if (sigma <= 0.0) sigma = 1.0;
  const double inv_2s2 = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.0) {
        const double d2 = squared_distance(pts[i], pts[j]);
        w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::exp(-d2 * inv_2s2);
      }

  Eigen::VectorXd deg = w.rowwise().sum();
  Eigen::VectorXd dinv_sqrt(deg.size());
  for (Eigen::Index i = 0; i < deg.size(); ++i)
    dinv_sqrt(i) = deg(i) > 0.0 ? 1.0 / std::sqrt(deg(i)) : 0.0;
  Eigen::MatrixXd lap = Eigen::MatrixXd::Identity(w.rows(), w.cols()) -
                        dinv_sqrt.asDiagonal() * w * dinv_sqrt.asDiagonal();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap);
  if (solver.info() != Eigen::Success) throw NumericError("spectral split eigensolve failed");
  const Eigen::VectorXd fiedler = solver.eigenvectors().col(1);

  std::size_t side0 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = fiedler(static_cast<Eigen::Index>(i)) >= 0.0 ? 0 : 1;
    side0 += labels[i] == 0;
  }
  if (side0 == 0 || side0 == n) {
    // degenerate sign pattern: split at the median value instead
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i) vals[i] = fiedler(static_cast<Eigen::Index>(i));
    std::vector<double> sorted = vals;
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    const double med = sorted[n / 2];
    for (std::size_t i = 0; i < n; ++i) labels[i] = vals[i] < med ? 1 : 0;
  }
  // normalize so the side containing the first point is side 0
  if (labels[0] == 1)
    for (int& l : labels) l = 1 - l;
  return labels;
}

/// A refined sub-cluster. `solidity` is NaN when the region was accepted
/// without evaluation (fewer than 4 points).
struct ConvexRegion {
  std::vector<std::size_t> indices;
  double solidity = std::numeric_limits<double>::quiet_NaN();
  int depth = 0;
};

namespace detail {

inline void convexify_recurse(const std::vector<Vec2>& embedding,
                              std::vector<std::size_t> idx, int depth,
                              const ConvexifyConfig& cfg, std::vector<ConvexRegion>& out) {
  if (idx.size() < 4) {
    out.push_back({std::move(idx), std::numeric_limits<double>::quiet_NaN(), depth});
    return;
  }
  std::vector<Vec2> local(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) local[i] = embedding[idx[i]];
  const double s = solidity(local, cfg.alpha_scale);
  if (s >= cfg.solidity_threshold || depth >= cfg.max_depth) {
    out.push_back({std::move(idx), s, depth});
    return;
  }
  const std::vector<int> split = spectral_split(local, cfg.spectral_knn,
                                                cfg.spectral_max_points,
                                                hash_combine(cfg.seed, depth + 1));
  std::vector<std::size_t> left, right;
  for (std::size_t i = 0; i < idx.size(); ++i)
    (split[i] == 0 ? left : right).push_back(idx[i]);
  if (left.empty() || right.empty()) {
    out.push_back({std::move(idx), s, depth}); // split failed, stop here
    return;
  }
  convexify_recurse(embedding, std::move(left), depth + 1, cfg, out);
  convexify_recurse(embedding, std::move(right), depth + 1, cfg, out);
}

} // namespace detail

/// Recursively splits a non-convex cluster into solid sub-clusters. Every
/// returned region satisfies solidity >= threshold, or has fewer than 4
/// points, or sits at the depth cap, or could not be split further.
inline std::vector<ConvexRegion> convexify(const std::vector<Vec2>& embedding,
                                           const std::vector<std::size_t>& cluster,
                                           const ConvexifyConfig& config = {}) {
  std::vector<ConvexRegion> out;
  detail::convexify_recurse(embedding, cluster, 0, config, out);
  return out;
}

} // namespace plantcloud

#endif // PLANTCLOUD_SUPERPOINT_CONVEXIFY_HPP
