#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "plantcloud/lscnet/checkpoint.hpp"
#include "plantcloud/lscnet/fps.hpp"
#include "plantcloud/lscnet/grouping.hpp"
#include "plantcloud/lscnet/network.hpp"
#include "plantcloud/lscnet/segment.hpp"
#include "plantcloud/lscnet/train.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace plantcloud;
using Md = Mat<double>;

namespace {

/// Toy architecture for gradient work. Group sizes equal the layer's point
/// count so the seeded without-replacement draw never runs (its seed depends
/// on center coordinates, which move with the parameters); remaining discrete
/// choices (ball membership, padding identity, FPS, argmax pooling) are
/// audited by discrete_margin before differentiating.
LscnetSpec toy_spec() {
  LscnetSpec spec;
  spec.input_points = 16;
  spec.local_layers = {{8, 1.2, 16, {6, 8}, true, true}, {4, 2.0, 8, {10, 12}, true, true}};
  spec.global_widths = {14, 16};
  spec.head_widths = {12, 6};
  spec.attention_hidden = 5;
  spec.global_hidden = 4;
  spec.rum_hidden = 5;
  return spec;
}

void randomize_params(LscnetModel<double>& model, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& e : model.params.entries())
    for (Eigen::Index r = 0; r < e.value.rows(); ++r)
      for (Eigen::Index c = 0; c < e.value.cols(); ++c) e.value(r, c) = rng.normal(0, 0.4);
}

Md random_input(std::uint64_t seed, int n = 16) {
  Rng rng(seed);
  Md x(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
  return x;
}

/// Distance from the forward state to the nearest discrete decision boundary
/// (max-pool ties, FPS ties and ball-boundary crossings). Finite differences
/// are only meaningful when this is comfortably larger than the probe step.
double discrete_margin(const lsc::Workspace<double>& ws, const LscnetSpec& spec) {
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t li = 0; li < ws.local.size(); ++li) {
    const auto& cc = ws.local[li];
    const int k = spec.local_layers[li].group_size;
    const int m = spec.local_layers[li].centers;
    const Md& z = cc.mlp.out.back();
    for (int j = 0; j < m; ++j)
      for (int ch = 0; ch < z.cols(); ++ch) {
        double top1 = -1e300, top2 = -1e300;
        for (int kk = 0; kk < k; ++kk) {
          const double v = z(static_cast<Eigen::Index>(j) * k + kk, ch);
          if (v > top1) { top2 = top1; top1 = v; }
          else if (v > top2 && v < top1) top2 = v;
        }
        // exact ties (duplicated rows, whole channels clamped by ReLU) are
        // stable plateaus; only strictly positive near-ties are fragile
        if (top2 > -1e300 && top2 < top1) margin = std::min(margin, top1 - top2);
      }
    // ball-boundary margins (membership flips) and padding-identity margins
    // (when a region pads, the nearest candidate is duplicated; a swap of the
    // two nearest changes the duplicated row)
    for (int j = 0; j < m; ++j) {
      const Vec3 c{cc.chat(j, 0), cc.chat(j, 1), cc.chat(j, 2)};
      std::vector<double> dists;
      for (Eigen::Index i = 0; i < cc.points.rows(); ++i) {
        const Vec3 p{cc.points(i, 0), cc.points(i, 1), cc.points(i, 2)};
        const double d = distance(p, c);
        dists.push_back(d);
        margin = std::min(margin, std::abs(d - cc.rhat(j, 0)));
      }
      std::set<std::size_t> members(cc.fin_idx.begin() + static_cast<std::ptrdiff_t>(j) * k,
                                    cc.fin_idx.begin() + static_cast<std::ptrdiff_t>(j + 1) * k);
      if (members.size() < static_cast<std::size_t>(k) && dists.size() >= 2) {
        std::sort(dists.begin(), dists.end());
        if (dists[1] > dists[0]) margin = std::min(margin, dists[1] - dists[0]);
      }
    }
    // FPS gaps on this layer's (parameter-dependent for layers > 0) points
    {
      std::vector<Vec3> pts(static_cast<std::size_t>(cc.points.rows()));
      for (Eigen::Index i = 0; i < cc.points.rows(); ++i)
        pts[static_cast<std::size_t>(i)] = {cc.points(i, 0), cc.points(i, 1), cc.points(i, 2)};
      std::vector<double> min_d2(pts.size());
      for (std::size_t i = 0; i < pts.size(); ++i)
        min_d2[i] = squared_distance(pts[i], pts[cc.center_idx[0]]);
      for (std::size_t step = 1; step < cc.center_idx.size(); ++step) {
        double best = -1, second = -1;
        for (double v : min_d2) {
          if (v > best) { second = best; best = v; }
          else if (v > second && v < best) second = v;
        }
        if (second >= 0 && second < best)
          margin = std::min(margin, std::sqrt(best) - std::sqrt(second));
        for (std::size_t i = 0; i < pts.size(); ++i)
          min_d2[i] = std::min(min_d2[i], squared_distance(pts[i], pts[cc.center_idx[step]]));
      }
    }
  }
  const auto& g = ws.global;
  const Md& z = g.mlp.out.back();
  for (int ch = 0; ch < z.cols(); ++ch) {
    double top1 = -1e300, top2 = -1e300;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double v = z(i, ch);
      if (v > top1) { top2 = top1; top1 = v; }
      else if (v > top2 && v < top1) top2 = v;
    }
    if (top2 > -1e300 && top2 < top1) margin = std::min(margin, top1 - top2);
  }
  return margin;
}

struct FdReport {
  int checked = 0;
  int failed = 0;
  double worst = 0.0;
  std::string worst_tensor;
};

FdReport finite_difference_check(LscnetModel<double>& model, const Md& x, double eps,
                                 double tolerance) {
  const std::array<double, 2> w{1.0, 1.0};
  auto loss_fn = [&]() {
    auto ws = lscnet_forward(model, x, 3, false, nullptr);
    std::array<double, 2> ds;
    return cross_entropy(ws.scores, 1, w, ds);
  };
  model.params.zero_grads();
  {
    auto ws = lscnet_forward(model, x, 3, false, nullptr);
    std::array<double, 2> ds;
    cross_entropy(ws.scores, 1, w, ds);
    lscnet_backward(model, ws, ds);
  }
  FdReport rep;
  for (auto& e : model.params.entries()) {
    for (Eigen::Index r = 0; r < e.value.rows(); ++r)
      for (Eigen::Index c = 0; c < e.value.cols(); ++c) {
        const double orig = e.value(r, c);
        e.value(r, c) = orig + eps;
        const double lp = loss_fn();
        e.value(r, c) = orig - eps;
        const double lm = loss_fn();
        e.value(r, c) = orig;
        const double fd = (lp - lm) / (2 * eps);
        const double an = e.grad(r, c);
        const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
        ++rep.checked;
        if (rel > rep.worst) {
          rep.worst = rel;
          rep.worst_tensor = e.name;
        }
        if (rel > tolerance) ++rep.failed;
      }
  }
  return rep;
}

std::filesystem::path tmp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

std::vector<Vec3> synth_disk(Rng& rng, int n, double radius) {
  std::vector<Vec3> pts;
  while (static_cast<int>(pts.size()) < n) {
    const double x = rng.uniform(-radius, radius), y = rng.uniform(-radius, radius);
    if (x * x + y * y <= radius * radius) pts.push_back({x, y, rng.normal(0, 0.02 * radius)});
  }
  return pts;
}

std::vector<Vec3> synth_cylinder(Rng& rng, int n, double length, double radius) {
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) {
    const double a = rng.uniform(0, 2 * 3.14159265358979);
    pts.push_back({radius * std::cos(a) + rng.normal(0, 0.02 * radius),
                   radius * std::sin(a) + rng.normal(0, 0.02 * radius),
                   rng.uniform(0, length)});
  }
  return pts;
}

} // namespace

TEST(Fps, CollinearTieBreak) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({static_cast<double>(i), 0, 0});
  // after {0, 9}, x=4 and x=5 tie at min-distance 4; the lower index wins
  EXPECT_EQ(fps(pts, 3, 0), (std::vector<std::size_t>{0, 9, 4}));
}

TEST(Fps, FullAndSingleSelection) {
  Rng rng(50);
  const auto pts = generators::random_points3(rng, 12);
  const auto all = fps(pts, 12, 3);
  std::set<std::size_t> unique(all.begin(), all.end());
  EXPECT_EQ(unique.size(), 12u);
  EXPECT_EQ(fps(pts, 1, 5), (std::vector<std::size_t>{5}));
  EXPECT_THROW(fps(pts, 13, 0), DataError);
}

TEST(Fps, MatchesBruteForceOracle) {
  Rng rng(51);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 2 + rng.bounded(300);
    const auto pts = generators::random_points3(rng, n);
    const std::size_t m = 1 + rng.bounded(n);
    const std::size_t start = rng.bounded(n);
    EXPECT_EQ(fps(pts, m, start), oracles::fps_scan(pts, m, start));
  }
}

TEST(BallGroup, ExactFitAndCenteredCoordinates) {
  const std::vector<Vec3> pts{{0, 0, 0}, {0.5, 0, 0}, {0, 0.5, 0}, {9, 9, 9}};
  const auto g = ball_group(pts, {}, Vec3{0.1, 0.1, 0}, 1.0, 3, 77);
  std::set<std::size_t> got(g.indices.begin(), g.indices.end());
  EXPECT_EQ(got, (std::set<std::size_t>{0, 1, 2}));
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(g.centered_points[k].x, pts[g.indices[k]].x - 0.1);
    EXPECT_EQ(g.centered_points[k].y, pts[g.indices[k]].y - 0.1);
  }
}

TEST(BallGroup, PadsWithNearestInBallPoint) {
  const std::vector<Vec3> pts{{0, 0, 0}, {5, 0, 0}};
  const auto g = ball_group(pts, {}, Vec3{0.2, 0, 0}, 1.0, 4, 1);
  EXPECT_EQ(g.indices, (std::vector<std::size_t>{0, 0, 0, 0}));
}

TEST(BallGroup, EmptyBallUsesGloballyNearest) {
  const std::vector<Vec3> pts{{10, 0, 0}, {12, 0, 0}};
  const auto g = ball_group(pts, {}, Vec3{0, 0, 0}, 1.0, 3, 1);
  EXPECT_EQ(g.indices, (std::vector<std::size_t>{0, 0, 0}));
}

TEST(BallGroup, MembershipMatchesBruteForceScan) {
  Rng rng(52);
  for (int rep = 0; rep < 30; ++rep) {
    const auto pts = generators::random_points3(rng, 200);
    const Vec3 center{rng.uniform(), rng.uniform(), rng.uniform()};
    const double radius = rng.uniform(0.05, 0.4);
    const auto oracle = oracles::radius_scan(pts, center, radius);
    if (oracle.empty()) continue;
    // k >= |ball|: the selection is exactly the ball (plus padding duplicates)
    const auto idx = ball_group_indices(pts, center, radius, oracle.size() + 3, rep);
    std::set<std::size_t> got(idx.begin(), idx.end());
    EXPECT_EQ(got, std::set<std::size_t>(oracle.begin(), oracle.end()));
    // k < |ball|: a subset of the ball, no duplicates
    if (oracle.size() >= 2) {
      const auto sub = ball_group_indices(pts, center, radius, oracle.size() - 1, rep);
      std::set<std::size_t> sub_set(sub.begin(), sub.end());
      EXPECT_EQ(sub_set.size(), sub.size());
      for (std::size_t i : sub) EXPECT_TRUE(std::binary_search(oracle.begin(), oracle.end(), i));
    }
  }
}

TEST(BallGroup, DeterministicGivenSeed) {
  Rng rng(53);
  const auto pts = generators::random_points3(rng, 500);
  const Vec3 c{0.5, 0.5, 0.5};
  EXPECT_EQ(ball_group_indices(pts, c, 0.4, 16, 9), ball_group_indices(pts, c, 0.4, 16, 9));
  EXPECT_NE(ball_group_indices(pts, c, 0.4, 16, 9), ball_group_indices(pts, c, 0.4, 16, 10));
}

// Straight-line re-implementation of one set-abstraction layer (no attention):
// plain loops, no shared code with the library path beyond the RNG primitive.
namespace sa_oracle {

std::vector<std::size_t> fps_ref(const std::vector<Vec3>& pts, std::size_t m) {
  std::vector<std::size_t> sel{0};
  std::vector<double> d(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) d[i] = squared_distance(pts[i], pts[0]);
  while (sel.size() < m) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (d[i] > d[arg]) arg = i;
    sel.push_back(arg);
    for (std::size_t i = 0; i < pts.size(); ++i)
      d[i] = std::min(d[i], squared_distance(pts[i], pts[arg]));
  }
  return sel;
}

std::vector<std::size_t> group_ref(const std::vector<Vec3>& pts, const Vec3& c, double r,
                                   std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> ball;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (squared_distance(pts[i], c) <= r * r) ball.push_back(i);
  std::sort(ball.begin(), ball.end(), [&](std::size_t a, std::size_t b) {
    const double da = squared_distance(pts[a], c), db = squared_distance(pts[b], c);
    if (da != db) return da < db;
    if (pts[a].x != pts[b].x) return pts[a].x < pts[b].x;
    if (pts[a].y != pts[b].y) return pts[a].y < pts[b].y;
    if (pts[a].z != pts[b].z) return pts[a].z < pts[b].z;
    return a < b;
  });
  if (ball.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (squared_distance(pts[i], c) < squared_distance(pts[best], c)) best = i;
    return std::vector<std::size_t>(k, best);
  }
  if (ball.size() <= k) {
    std::vector<std::size_t> out = ball;
    while (out.size() < k) out.push_back(ball[0]);
    return out;
  }
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(ball[i], ball[i + rng.bounded(ball.size() - i)]);
  ball.resize(k);
  return ball;
}

// dense + per-channel standardization + relu, then channel max per region
std::vector<std::vector<double>> layer_ref(const std::vector<Vec3>& pts, double r, std::size_t m,
                                           std::size_t k, const Md& w0, const Md& b0,
                                           const Md& g0, const Md& be0,
                                           std::uint64_t seed, std::size_t layer_index) {
  const auto centers = fps_ref(pts, m);
  std::vector<std::vector<double>> rows;
  for (std::size_t j = 0; j < m; ++j) {
    const Vec3 c = pts[centers[j]];
    std::uint64_t h = hash_combine(seed, layer_index + 1);
    h = hash_double(h, c.x);
    h = hash_double(h, c.y);
    h = hash_double(h, c.z);
    for (std::size_t i : group_ref(pts, c, r, k, h)) {
      const Vec3 q = pts[i] - c;
      rows.push_back({q.x / r, q.y / r, q.z / r});
    }
  }
  const std::size_t n_rows = rows.size();
  const std::size_t width = static_cast<std::size_t>(w0.rows());
  std::vector<std::vector<double>> lin(n_rows, std::vector<double>(width, 0.0));
  for (std::size_t i = 0; i < n_rows; ++i)
    for (std::size_t o = 0; o < width; ++o) {
      double acc = b0(0, static_cast<Eigen::Index>(o));
      for (std::size_t t = 0; t < 3; ++t)
        acc += rows[i][t] * w0(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(t));
      lin[i][o] = acc;
    }
  for (std::size_t o = 0; o < width; ++o) {
    double mu = 0;
    for (std::size_t i = 0; i < n_rows; ++i) mu += lin[i][o];
    mu /= static_cast<double>(n_rows);
    double var = 0;
    for (std::size_t i = 0; i < n_rows; ++i) var += (lin[i][o] - mu) * (lin[i][o] - mu);
    var /= static_cast<double>(n_rows);
    const double istd = 1.0 / std::sqrt(var + 1e-5);
    for (std::size_t i = 0; i < n_rows; ++i) {
      double v = (lin[i][o] - mu) * istd * g0(0, static_cast<Eigen::Index>(o)) +
                 be0(0, static_cast<Eigen::Index>(o));
      lin[i][o] = v > 0 ? v : 0;
    }
  }
  std::vector<std::vector<double>> pooled(m, std::vector<double>(width, 0.0));
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t o = 0; o < width; ++o) {
      double mx = lin[j * k][o];
      for (std::size_t kk = 1; kk < k; ++kk) mx = std::max(mx, lin[j * k + kk][o]);
      pooled[j][o] = mx;
    }
  return pooled;
}

} // namespace sa_oracle

TEST(SaLayer, MatchesStraightLineReimplementation) {
  LscnetSpec spec;
  spec.input_points = 24;
  spec.local_layers = {{10, 0.9, 6, {7}, false, false}};
  spec.global_widths = {8};
  spec.head_widths = {6};
  auto model = make_lscnet<double>(spec, 21);
  randomize_params(model, 22);

  Rng rng(23);
  Md x(24, 3);
  std::vector<Vec3> pts;
  for (int i = 0; i < 24; ++i) {
    const Vec3 p{rng.normal(), rng.normal(), rng.normal()};
    pts.push_back(p);
    x(i, 0) = p.x;
    x(i, 1) = p.y;
    x(i, 2) = p.z;
  }
  const std::uint64_t seed = 5;
  auto ws = lscnet_forward(model, x, seed, false, nullptr);

  const auto& mlp = model.local[0].mlp;
  const auto pooled_ref = sa_oracle::layer_ref(
      pts, 0.9, 10, 6, model.params.value(mlp.w[0]), model.params.value(mlp.b[0]),
      model.params.value(mlp.gamma[0]), model.params.value(mlp.beta[0]), seed, 0);
  for (int j = 0; j < 10; ++j)
    for (int o = 0; o < 7; ++o)
      EXPECT_NEAR(ws.local[0].pooled(j, o), pooled_ref[static_cast<std::size_t>(j)]
                                                       [static_cast<std::size_t>(o)], 1e-6);
}

TEST(SaLayer, ChannelMaxPooling) {
  // two grouped rows with post-MLP features (1,5) and (3,2) pool to (3,5)
  Md z(2, 2);
  z << 1, 5, 3, 2;
  Eigen::Index a0 = 0, a1 = 0;
  double m0 = z(0, 0), m1 = z(0, 1);
  for (Eigen::Index i = 1; i < 2; ++i) {
    if (z(i, 0) > m0) { m0 = z(i, 0); a0 = i; }
    if (z(i, 1) > m1) { m1 = z(i, 1); a1 = i; }
  }
  EXPECT_EQ(m0, 3);
  EXPECT_EQ(m1, 5);
  EXPECT_EQ(a0, 1);
  EXPECT_EQ(a1, 0);
}

TEST(SaLayer, IdenticalGroupedPointsPoolToSameFeature) {
  // a region with one in-ball point pads all K rows with that point; the
  // pooled feature equals the single row's feature
  LscnetSpec spec;
  spec.input_points = 5;
  spec.local_layers = {{2, 0.5, 4, {6}, false, false}};
  spec.global_widths = {8};
  spec.head_widths = {6};
  auto model = make_lscnet<double>(spec, 31);
  randomize_params(model, 32);
  Md x(5, 3);
  x << 0, 0, 0, 10, 0, 0, 10.1, 0, 0, 10, 0.1, 0, 10, 0, 0.1;
  auto ws = lscnet_forward(model, x, 1, false, nullptr);
  // the isolated point (index 0) forms a single-member region for one center
  const auto& cc = ws.local[0];
  bool found_padded = false;
  for (int j = 0; j < 2; ++j) {
    std::set<std::size_t> members(cc.fin_idx.begin() + j * 4, cc.fin_idx.begin() + (j + 1) * 4);
    if (members.size() == 1) {
      found_padded = true;
      const Md& z = cc.mlp.out.back();
      for (int o = 0; o < 6; ++o) EXPECT_EQ(cc.pooled(j, o), z(j * 4, o));
    }
  }
  EXPECT_TRUE(found_padded);
}

TEST(Csm, ZeroScoreParamsGiveUniformAttentionCentroidShift) {
  LscnetSpec spec = toy_spec();
  auto model = make_lscnet<double>(spec, 41);
  randomize_params(model, 42);
  // zero the attention scorers of layer 1 -> uniform weights
  auto& attn = model.local[0].attn;
  model.params.value(attn.wa).setZero();
  model.params.value(attn.wb).setZero();
  model.params.value(attn.wc).setZero();
  model.params.value(attn.ba).setZero();
  model.params.value(attn.ws).setZero();
  const Md x = random_input(43);
  auto ws = lscnet_forward(model, x, 2, false, nullptr);
  const auto& cc = ws.local[0];
  const int k = spec.local_layers[0].group_size;
  for (int j = 0; j < spec.local_layers[0].centers; ++j) {
    Vec3 centroid{0, 0, 0};
    for (int kk = 0; kk < k; ++kk) {
      const auto i = static_cast<Eigen::Index>(cc.pre_idx[static_cast<std::size_t>(j) * k + kk]);
      centroid += Vec3{x(i, 0), x(i, 1), x(i, 2)};
      EXPECT_NEAR(cc.alpha(j, kk), 1.0 / k, 1e-12);
    }
    centroid *= 1.0 / k;
    EXPECT_NEAR(cc.chat(j, 0), centroid.x, 1e-12);
    EXPECT_NEAR(cc.chat(j, 1), centroid.y, 1e-12);
    EXPECT_NEAR(cc.chat(j, 2), centroid.z, 1e-12);
  }
}

TEST(Csm, SingleRegionPointPullsCenterOntoIt) {
  LscnetSpec spec;
  spec.input_points = 5;
  spec.local_layers = {{2, 0.5, 4, {6}, true, false}};
  spec.global_widths = {8};
  spec.head_widths = {6};
  spec.attention_hidden = 4;
  spec.global_hidden = 3;
  auto model = make_lscnet<double>(spec, 44);
  randomize_params(model, 45);
  Md x(5, 3);
  x << 0, 0, 0, 10, 0, 0, 10.1, 0, 0, 10, 0.1, 0, 10, 0, 0.1;
  auto ws = lscnet_forward(model, x, 1, false, nullptr);
  const auto& cc = ws.local[0];
  for (int j = 0; j < 2; ++j) {
    std::set<std::size_t> members(cc.pre_idx.begin() + j * 4, cc.pre_idx.begin() + (j + 1) * 4);
    if (members.size() == 1) {
      const auto i = static_cast<Eigen::Index>(*members.begin());
      EXPECT_NEAR(cc.chat(j, 0), x(i, 0), 1e-12);
      EXPECT_NEAR(cc.chat(j, 1), x(i, 1), 1e-12);
      EXPECT_NEAR(cc.chat(j, 2), x(i, 2), 1e-12);
    }
  }
}

TEST(Csm, ShiftedCenterIsConvexCombinationOfRegionPoints) {
  LscnetSpec spec = toy_spec();
  auto model = make_lscnet<double>(spec, 46);
  randomize_params(model, 47);
  const Md x = random_input(48);
  auto ws = lscnet_forward(model, x, 2, false, nullptr);
  for (std::size_t li = 0; li < ws.local.size(); ++li) {
    const auto& cc = ws.local[li];
    const int k = model.spec.local_layers[li].group_size;
    for (int j = 0; j < model.spec.local_layers[li].centers; ++j) {
      double sum = 0.0;
      Vec3 combo{0, 0, 0};
      for (int kk = 0; kk < k; ++kk) {
        const double a = cc.alpha(j, kk);
        EXPECT_GE(a, 0.0);
        sum += a;
        const auto i = static_cast<Eigen::Index>(cc.pre_idx[static_cast<std::size_t>(j) * k + kk]);
        combo += Vec3{cc.points(i, 0), cc.points(i, 1), cc.points(i, 2)} * a;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
      EXPECT_NEAR(cc.chat(j, 0), combo.x, 1e-9);
      EXPECT_NEAR(cc.chat(j, 1), combo.y, 1e-9);
      EXPECT_NEAR(cc.chat(j, 2), combo.z, 1e-9);
    }
  }
}

TEST(EqIdentities, ZeroUpdatesAreExact) {
  // modules off: chat == centers and rhat == r bitwise
  LscnetSpec spec = toy_spec();
  for (auto& l : spec.local_layers) { l.csm = false; l.rum = false; }
  auto model = make_lscnet<double>(spec, 61);
  randomize_params(model, 62);
  const Md x = random_input(63);
  auto ws = lscnet_forward(model, x, 2, false, nullptr);
  for (std::size_t li = 0; li < ws.local.size(); ++li) {
    const auto& cc = ws.local[li];
    for (int j = 0; j < model.spec.local_layers[li].centers; ++j) {
      const auto ci = static_cast<Eigen::Index>(cc.center_idx[static_cast<std::size_t>(j)]);
      EXPECT_EQ(cc.chat(j, 0), cc.points(ci, 0));
      EXPECT_EQ(cc.chat(j, 1), cc.points(ci, 1));
      EXPECT_EQ(cc.chat(j, 2), cc.points(ci, 2));
      EXPECT_EQ(cc.rhat(j, 0), model.spec.local_layers[li].radius);
    }
  }
  // modules on with zero parameters: tanh(0) = 0 gives exact identities too
  LscnetSpec spec_on = toy_spec();
  auto model_on = make_lscnet<double>(spec_on, 64);
  for (auto& e : model_on.params.entries())
    if (e.name.find("shift") != std::string::npos || e.name.find("radius") != std::string::npos ||
        e.name.find("global.") != std::string::npos)
      e.value.setZero();
  auto ws_on = lscnet_forward(model_on, x, 2, false, nullptr);
  for (std::size_t li = 0; li < ws_on.local.size(); ++li) {
    const auto& cc = ws_on.local[li];
    for (int j = 0; j < model_on.spec.local_layers[li].centers; ++j)
      EXPECT_EQ(cc.rhat(j, 0), model_on.spec.local_layers[li].radius);
  }
}

TEST(Rum, RadiusStaysPositiveUnderRandomParameters) {
  LscnetSpec spec = toy_spec();
  spec.local_layers[0].radius = 0.35;
  spec.local_layers[1].radius = 0.6;
  Rng seed_rng(71);
  int trials = 0;
  for (int rep = 0; rep < 25; ++rep) {
    auto model = make_lscnet<double>(spec, seed_rng.next_u64());
    randomize_params(model, seed_rng.next_u64());
    const Md x = random_input(seed_rng.next_u64());
    auto ws = lscnet_forward(model, x, 2, false, nullptr);
    for (std::size_t li = 0; li < ws.local.size(); ++li) {
      const double r0 = model.spec.local_layers[li].radius;
      for (int j = 0; j < model.spec.local_layers[li].centers; ++j) {
        const double rhat = ws.local[li].rhat(j, 0);
        EXPECT_GT(rhat, 0.0);
        EXPECT_GT(rhat, 0.0999 * r0);
        EXPECT_LT(rhat, 1.9001 * r0);
        ++trials;
      }
    }
  }
  EXPECT_GE(trials, 200);
}

TEST(Gradients, FullModelMatchesFiniteDifferences) {
  // scan a few seeds and check gradients at the first generic configuration
  // (discrete selections such as max-pool argmaxes must not sit within the
  // probe step of a tie, or the FD quotient measures the jump, not the slope)
  const LscnetSpec spec = toy_spec();
  const double eps = 1e-4;
  bool ran = false;
  for (std::uint64_t seed = 1; seed <= 64; ++seed) {
    auto model = make_lscnet<double>(spec, seed);
    randomize_params(model, seed * 1000 + 7);
    const Md x = random_input(seed * 77 + 5);
    auto ws = lscnet_forward(model, x, 3, false, nullptr);
    if (discrete_margin(ws, spec) < 50 * eps) continue;
    const FdReport rep = finite_difference_check(model, x, eps, 1e-3);
    EXPECT_EQ(rep.failed, 0) << "seed " << seed << ": " << rep.failed << "/" << rep.checked
                             << " entries failed, worst " << rep.worst << " at "
                             << rep.worst_tensor;
    EXPECT_GT(rep.checked, 1000);
    ran = true;
    break;
  }
  EXPECT_TRUE(ran) << "no generic seed found for the finite-difference check";
}

TEST(Classify, ScoresFiniteOnFreshModel) {
  LscnetSpec spec = toy_spec();
  auto model = make_lscnet<double>(spec, 81);
  Rng rng(82);
  std::vector<Vec3> pts = generators::random_points3(rng, 40);
  const auto scores = classify(pts, model, 1);
  EXPECT_TRUE(std::isfinite(scores[0]));
  EXPECT_TRUE(std::isfinite(scores[1]));
}

TEST(Classify, InvariantToInputPermutation) {
  LscnetSpec spec = toy_spec();
  auto model = make_lscnet<double>(spec, 83);
  randomize_params(model, 84);
  Rng rng(85);
  std::vector<Vec3> pts = generators::random_points3(rng, 120);
  const auto a = classify(pts, model, 7);
  std::vector<Vec3> shuffled = pts;
  for (std::size_t i = 0; i + 1 < shuffled.size(); ++i)
    std::swap(shuffled[i], shuffled[i + rng.bounded(shuffled.size() - i)]);
  const auto b = classify(shuffled, model, 7);
  EXPECT_NEAR(a[0], b[0], 1e-5);
  EXPECT_NEAR(a[1], b[1], 1e-5);
}

TEST(PrepareInput, ResamplesToTargetAndNormalizes) {
  Rng rng(86);
  std::vector<Vec3> small = generators::random_points3(rng, 10, -4, 4);
  const Md up = prepare_input<double>(small, 32, 3);
  ASSERT_EQ(up.rows(), 32);
  std::vector<Vec3> big = generators::random_points3(rng, 300, -4, 4);
  const Md down = prepare_input<double>(big, 32, 3);
  ASSERT_EQ(down.rows(), 32);
  for (const Md& m : {up, down}) {
    EXPECT_NEAR(m.col(0).mean(), 0.0, 1e-12);
    double max_norm = 0.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) max_norm = std::max(max_norm, m.row(i).norm());
    EXPECT_NEAR(max_norm, 1.0, 1e-9);
  }
  EXPECT_THROW(prepare_input<double>({}, 8, 0), DataError);
}

TEST(Train, TwoSampleMemorization) {
  LscnetSpec spec = toy_spec();
  spec.local_layers[0].radius = 0.4;
  spec.local_layers[1].radius = 0.8;
  spec.local_layers[0].group_size = 8;
  spec.local_layers[1].group_size = 4;
  spec.head_dropout = 0.0; // dropout noise on a single-row head stalls a 2-sample fit
  auto model = make_lscnet<double>(spec, 91);
  Rng rng(92);
  std::vector<LabeledCloud> data;
  data.push_back({synth_disk(rng, 60, 2.0), class_index(Semantic::Leaf)});
  data.push_back({synth_cylinder(rng, 60, 6.0, 0.2), class_index(Semantic::Stem)});
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 2;
  cfg.seed = 5;
  cfg.learning_rate = 1e-2;
  const auto result = train(model, data, cfg);
  EXPECT_LT(result.epoch_losses.back(), result.epoch_losses.front());
  for (const LabeledCloud& s : data) {
    const auto scores = classify(s.positions, model, cfg.seed);
    EXPECT_EQ(scores[1] > scores[0] ? 1 : 0, s.label);
  }
}

TEST(Train, SingleClassDatasetRejected) {
  LscnetSpec spec = toy_spec();
  auto model = make_lscnet<double>(spec, 93);
  Rng rng(94);
  std::vector<LabeledCloud> data;
  data.push_back({generators::random_points3(rng, 30), 0});
  data.push_back({generators::random_points3(rng, 30), 0});
  EXPECT_THROW(train(model, data, {}), DataError);
}

TEST(Train, DiskVsCylinderGeneralizes) {
  // larger run: 120 training shapes, 40 held out; accuracy must be >= 95%
  LscnetSpec spec;
  spec.input_points = 96;
  spec.local_layers = {{32, 0.3, 12, {16, 24}, true, true}, {12, 0.6, 8, {32, 48}, true, true}};
  spec.global_widths = {48, 64};
  spec.head_widths = {48, 24};
  spec.attention_hidden = 8;
  spec.global_hidden = 8;
  spec.rum_hidden = 6;
  spec.head_dropout = 0.0; // narrow single-row head; dropout would swamp the signal
  auto model = make_lscnet<double>(spec, 95);
  Rng rng(96);
  auto make_shape = [&](bool leaf) {
    LabeledCloud s;
    if (leaf) {
      s.positions = synth_disk(rng, 50 + static_cast<int>(rng.bounded(60)), rng.uniform(1.0, 3.0));
      s.label = class_index(Semantic::Leaf);
    } else {
      s.positions = synth_cylinder(rng, 50 + static_cast<int>(rng.bounded(60)),
                                   rng.uniform(4.0, 9.0), rng.uniform(0.1, 0.35));
      s.label = class_index(Semantic::Stem);
    }
    return s;
  };
  std::vector<LabeledCloud> train_set, test_set;
  for (int i = 0; i < 120; ++i) train_set.push_back(make_shape(i % 2 == 0));
  for (int i = 0; i < 40; ++i) test_set.push_back(make_shape(i % 2 == 0));
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 16;
  cfg.seed = 11;
  cfg.learning_rate = 1e-2;
  const auto result = train(model, train_set, cfg);
  EXPECT_LT(result.epoch_losses.back(), result.epoch_losses.front());
  int correct = 0;
  for (const LabeledCloud& s : test_set) {
    const auto scores = classify(s.positions, model, cfg.seed);
    correct += (scores[1] > scores[0] ? 1 : 0) == s.label;
  }
  EXPECT_GE(correct, 38) << "held-out accuracy " << correct << "/40";
}

TEST(Checkpoint, RoundTripReproducesScoresExactly) {
  LscnetSpec spec = toy_spec();
  auto model = make_lscnet<double>(spec, 97);
  randomize_params(model, 98);
  Rng rng(99);
  const std::vector<Vec3> pts = generators::random_points3(rng, 50);
  const auto before = classify(pts, model, 3);
  const auto path = tmp_file("lscnet_ckpt.bin");
  save_checkpoint(model, path.string(), {{"train.epochs", "100"}, {"seed", "7"}});
  std::map<std::string, std::string> echo;
  auto loaded = load_checkpoint<double>(path.string(), &echo);
  const auto after = classify(pts, loaded, 3);
  EXPECT_EQ(before[0], after[0]);
  EXPECT_EQ(before[1], after[1]);
  EXPECT_EQ(echo.at("seed"), "7");
}

TEST(Checkpoint, RejectsCorruptedFiles) {
  const auto path = tmp_file("lscnet_bad.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE";
  }
  EXPECT_THROW(load_checkpoint<double>(path.string()), DataError);
}

TEST(SuperpointDataset, MajorityAndPurityFilter) {
  PointCloud cloud;
  for (int i = 0; i < 10; ++i) cloud.push_back({i * 0.1, 0, 0}, Semantic::Leaf);
  for (int i = 0; i < 2; ++i) cloud.push_back({i * 0.1, 1, 0}, Semantic::Stem);
  for (int i = 0; i < 6; ++i) cloud.push_back({i * 0.1, 2, 0}, i % 2 ? Semantic::Leaf : Semantic::Stem);
  SuperpointPartition part;
  part.labels.assign(18, 0);
  part.members.resize(3);
  for (std::size_t i = 0; i < 12; ++i) {
    part.labels[i] = i < 10 ? 0 : 1;
    part.members[i < 10 ? 0 : 1].push_back(i);
  }
  for (std::size_t i = 12; i < 18; ++i) {
    part.labels[i] = 2;
    part.members[2].push_back(i);
  }
  SuperpointDatasetStats stats;
  const auto data = make_superpoint_dataset(cloud, part, 0.7, &stats);
  ASSERT_EQ(data.size(), 2u); // the 50/50 superpoint is dropped
  EXPECT_EQ(data[0].label, class_index(Semantic::Leaf));
  EXPECT_EQ(data[1].label, class_index(Semantic::Stem));
  EXPECT_EQ(stats.dropped_low_purity, 1u);

  const auto [label, purity] = superpoint_majority(cloud, part.members[2]);
  EXPECT_EQ(label, Semantic::Stem); // tie goes to stem
  EXPECT_DOUBLE_EQ(purity, 0.5);
}
