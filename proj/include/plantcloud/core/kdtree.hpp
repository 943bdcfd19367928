// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT

#ifndef PLANTCLOUD_CORE_KDTREE_HPP
#define PLANTCLOUD_CORE_KDTREE_HPP

#include <algorithm>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "plantcloud/core/types.hpp"

namespace plantcloud {

namespace detail {
template <typename P> struct point_dim;
template <> struct point_dim<Vec2> { static constexpr int value = 2; };
template <> struct point_dim<Vec3> { static constexpr int value = 3; };
} // namespace detail

/// Exact kd-tree over Vec2 or Vec3 points. Queries return precisely the
/// brute-force result set; ties on distance are broken toward the lower index
/// so every query is deterministic.
template <typename Point>
class KdTree {
public:
  static constexpr int Dim = detail::point_dim<Point>::value;

  KdTree() = default;

  explicit KdTree(const std::vector<Point>& points) { build(points); }

  void build(const std::vector<Point>& points) {
    points_ = points;
    order_.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) order_[i] = i;
    nodes_.clear();
    nodes_.reserve(points.size() * 2 + 1);
    if (!points.empty()) root_ = build_range(0, points.size());
  }

  std::size_t size() const { return points_.size(); }
  const std::vector<Point>& points() const { return points_; }

  /// Indices of all points with distance(q, p) <= radius, ascending by index.
  std::vector<std::size_t> radius_search(const Point& q, double radius) const {
    std::vector<std::size_t> out;
    if (root_ >= 0) radius_recurse(root_, q, radius * radius, out);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// k nearest neighbours ordered by (distance, index). Returns fewer than k
  /// entries only when the tree holds fewer points.
  std::vector<std::pair<double, std::size_t>> knn(const Point& q, std::size_t k) const {
    std::vector<std::pair<double, std::size_t>> heap; // max-heap on (dist2, idx)
    heap.reserve(k + 1);
    if (root_ >= 0 && k > 0) knn_recurse(root_, q, k, heap);
    std::sort(heap.begin(), heap.end());
    return heap;
  }

  /// Index of the single nearest point (lowest index on ties).
  std::size_t nearest(const Point& q) const {
    if (points_.empty()) throw DataError("nearest query on empty kd-tree");
    return knn(q, 1).front().second;
  }

private:
  struct Node {
    Point pt;
    std::size_t index = 0;
    int left = -1, right = -1;
    int axis = 0;
  };

  int build_range(std::size_t lo, std::size_t hi) {
    if (lo >= hi) return -1;
    // split along the widest axis of this range
    Point mn = points_[order_[lo]], mx = points_[order_[lo]];
    for (std::size_t i = lo + 1; i < hi; ++i) {
      const Point& p = points_[order_[i]];
      for (int d = 0; d < Dim; ++d) {
        mn[d] = std::min(mn[d], p[d]);
        mx[d] = std::max(mx[d], p[d]);
      }
    }
    int axis = 0;
    for (int d = 1; d < Dim; ++d)
      if (mx[d] - mn[d] > mx[axis] - mn[axis]) axis = d;

    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](std::size_t a, std::size_t b) {
                       if (points_[a][axis] != points_[b][axis])
                         return points_[a][axis] < points_[b][axis];
                       return a < b;
                     });
    Node node;
    node.pt = points_[order_[mid]];
    node.index = order_[mid];
    node.axis = axis;
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    const int l = build_range(lo, mid);
    const int r = build_range(mid + 1, hi);
    nodes_[self].left = l;
    nodes_[self].right = r;
    return self;
  }

  void radius_recurse(int ni, const Point& q, double r2, std::vector<std::size_t>& out) const {
    const Node& n = nodes_[ni];
    if (squared_distance(n.pt, q) <= r2) out.push_back(n.index);
    const double delta = q[n.axis] - n.pt[n.axis];
    const int near = delta <= 0 ? n.left : n.right;
    const int far = delta <= 0 ? n.right : n.left;
    if (near >= 0) radius_recurse(near, q, r2, out);
    if (far >= 0 && delta * delta <= r2) radius_recurse(far, q, r2, out);
  }

  void knn_recurse(int ni, const Point& q, std::size_t k,
                   std::vector<std::pair<double, std::size_t>>& heap) const {
    const Node& n = nodes_[ni];
    const std::pair<double, std::size_t> cand{squared_distance(n.pt, q), n.index};
    if (heap.size() < k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end());
    } else if (cand < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end());
    }
    const double delta = q[n.axis] - n.pt[n.axis];
    const int near = delta <= 0 ? n.left : n.right;
    const int far = delta <= 0 ? n.right : n.left;
    if (near >= 0) knn_recurse(near, q, k, heap);
    if (far >= 0) {
      // the far side can still hold a point beating the current worst,
      // including an equal distance with a lower index
      const bool full = heap.size() >= k;
      if (!full || delta * delta <= heap.front().first)
        knn_recurse(far, q, k, heap);
    }
  }

  std::vector<Point> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

using KdTree2 = KdTree<Vec2>;
using KdTree3 = KdTree<Vec3>;

} // namespace plantcloud

#endif // PLANTCLOUD_CORE_KDTREE_HPP
