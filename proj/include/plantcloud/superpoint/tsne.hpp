// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT
//
// Exact (dense-affinity) t-SNE for embedding 3D point neighborhoods into 2D.
// Memory is O(N^2); callers subsample above TsneConfig::max_points.

#ifndef PLANTCLOUD_SUPERPOINT_TSNE_HPP
#define PLANTCLOUD_SUPERPOINT_TSNE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "plantcloud/core/point_cloud.hpp"
#include "plantcloud/core/types.hpp"

namespace plantcloud {

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double exaggeration = 12.0;
  int exaggeration_iters = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch = 250;
  std::uint64_t seed = 0;
  std::size_t max_points = 5000; // dense affinities: keep N^2 doubles affordable
};

struct TsneResult {
  std::vector<Vec2> embedding;
  double kl_initial = 0.0;
  double kl_final = 0.0;
  /// (iteration, KL) samples; includes iteration 0, iteration 50, a coarse
  /// trail, a fine trail over the last 50 iterations, and the final iterate.
  std::vector<std::pair<int, double>> kl_trace;
};

namespace detail {

/// Conditional Gaussian affinities with a per-point bandwidth found by binary
/// search so each row's entropy matches log(perplexity). `p` is row-major
/// N x N with zero diagonal; rows sum to 1.
inline void gaussian_affinities(const std::vector<double>& d2, std::size_t n, double perplexity,
                                std::vector<double>& p) {
  const double target_entropy = std::log(perplexity);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    const double* row_d2 = d2.data() + i * n;
    double* row_p = p.data() + i * n;
    double beta = 1.0;
    double beta_lo = -1.0, beta_hi = -1.0; // <0 marks unbounded
    for (int it = 0; it < 50; ++it) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double v = j == i ? 0.0 : std::exp(-row_d2[j] * beta);
        row_p[j] = v;
        sum += v;
      }
      double entropy;
      if (sum <= 0.0) {
        entropy = 0.0;
      } else {
        double weighted = 0.0;
        for (std::size_t j = 0; j < n; ++j) weighted += row_p[j] * row_d2[j];
        entropy = std::log(sum) + beta * weighted / sum;
      }
      const double diff = entropy - target_entropy;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) { // entropy too high -> sharpen
        beta_lo = beta;
        beta = beta_hi < 0 ? beta * 2.0 : (beta + beta_hi) / 2.0;
      } else {
        beta_hi = beta;
        beta = beta_lo < 0 ? beta / 2.0 : (beta + beta_lo) / 2.0;
      }
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += row_p[j];
    const double inv = sum > 0.0 ? 1.0 / sum : 0.0;
    for (std::size_t j = 0; j < n; ++j) row_p[j] *= inv;
  }
}

/// Symmetrized joint affinities from 3D positions: p_ij = (p_j|i + p_i|j)/2N,
/// floored at 1e-12.
inline std::vector<double> joint_affinities(const std::vector<Vec3>& pts, double perplexity) {
  const std::size_t n = pts.size();
  std::vector<double> d2(n * n);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) d2[i * n + j] = squared_distance(pts[i], pts[j]);
  }
  std::vector<double> p(n * n);
  gaussian_affinities(d2, n, perplexity, p);
  const double inv2n = 1.0 / (2.0 * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::max((p[i * n + j] + p[j * n + i]) * inv2n, 1e-12);
      p[i * n + j] = v;
      p[j * n + i] = v;
    }
  for (std::size_t i = 0; i < n; ++i) p[i * n + i] = 0.0;
  return p;
}

struct TsneState {
  std::vector<double> yx, yy;   // embedding coordinates
  std::vector<float> w;         // cached Student-t kernel values
  std::vector<double> rowsum_w; // per-row kernel sums (diagonal excluded)
  double z = 0.0;               // total kernel mass
};

inline void tsne_kernel_pass(TsneState& st) {
  const std::size_t n = st.yx.size();
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    const double xi = st.yx[i], yi = st.yy[i];
    float* wrow = st.w.data() + i * n;
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = xi - st.yx[j];
      const double dy = yi - st.yy[j];
      const double wij = 1.0 / (1.0 + dx * dx + dy * dy);
      wrow[j] = static_cast<float>(wij);
      sum += wij;
    }
    st.rowsum_w[i] = sum - 1.0; // drop the j == i term
  }
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += st.rowsum_w[i]; // fixed order
  st.z = std::max(z, 1e-300);
}

inline double tsne_kl(const std::vector<double>& p, const TsneState& st) {
  const std::size_t n = st.yx.size();
  std::vector<double> partial(n, 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    const float* wrow = st.w.data() + i * n;
    const double* prow = p.data() + i * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double q = std::max(static_cast<double>(wrow[j]) / st.z, 1e-12);
      acc += prow[j] * std::log(prow[j] / q);
    }
    partial[i] = acc;
  }
  double kl = 0.0;
  for (double v : partial) kl += v;
  return kl;
}

} // namespace detail

/// Embeds the cloud into 2D with exact t-SNE; deterministic given the seed
/// (parallel loops only write per-row slots and reductions run in fixed
/// order). KL divergence is tracked against the unexaggerated affinities.
inline TsneResult tsne_embed(const std::vector<Vec3>& points, const TsneConfig& config) {
  const std::size_t n = points.size();
  if (config.perplexity <= 1.0) throw DataError("t-SNE perplexity must exceed 1");
  if (config.iterations <= 0) throw DataError("t-SNE iterations must be > 0");
  if (n > config.max_points)
    throw DataError("t-SNE input exceeds max_points; subsample before embedding");
  if (static_cast<double>(n) < 3.0 * config.perplexity)
    throw NumericError("t-SNE infeasible: need N >= 3 * perplexity");

  const std::vector<double> p = detail::joint_affinities(points, config.perplexity);

  detail::TsneState st;
  st.yx.resize(n);
  st.yy.resize(n);
  st.w.resize(n * n);
  st.rowsum_w.resize(n);
  Rng rng(hash_combine(config.seed, 0x7453e5u));
  for (std::size_t i = 0; i < n; ++i) {
    st.yx[i] = rng.normal(0.0, 1e-4);
    st.yy[i] = rng.normal(0.0, 1e-4);
  }

  std::vector<double> inc_x(n, 0.0), inc_y(n, 0.0);
  std::vector<double> gain_x(n, 1.0), gain_y(n, 1.0);
  std::vector<double> grad_x(n), grad_y(n);

  TsneResult result;
  detail::tsne_kernel_pass(st);
  result.kl_initial = detail::tsne_kl(p, st);
  result.kl_trace.emplace_back(0, result.kl_initial);

  const int iters = config.iterations;
  for (int t = 0; t < iters; ++t) {
    const double ex = t < config.exaggeration_iters ? config.exaggeration : 1.0;
    const double momentum =
        t < config.momentum_switch ? config.initial_momentum : config.final_momentum;

    detail::tsne_kernel_pass(st);
    const double inv_z = 1.0 / st.z;
#pragma omp parallel for schedule(static)
    for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
      const std::size_t i = static_cast<std::size_t>(ii);
      const double xi = st.yx[i], yi = st.yy[i];
      const float* wrow = st.w.data() + i * n;
      const double* prow = p.data() + i * n;
      double gx = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double wij = wrow[j];
        const double coeff = (prow[j] * ex - wij * inv_z) * wij;
        gx += coeff * (xi - st.yx[j]);
        gy += coeff * (yi - st.yy[j]);
      }
      grad_x[i] = 4.0 * gx;
      grad_y[i] = 4.0 * gy;
    }

    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      // adaptive per-coordinate gains
      gain_x[i] = (grad_x[i] > 0) == (inc_x[i] > 0) ? std::max(gain_x[i] * 0.8, 0.01)
                                                     : gain_x[i] + 0.2;
      gain_y[i] = (grad_y[i] > 0) == (inc_y[i] > 0) ? std::max(gain_y[i] * 0.8, 0.01)
                                                     : gain_y[i] + 0.2;
      inc_x[i] = momentum * inc_x[i] - config.learning_rate * gain_x[i] * grad_x[i];
      inc_y[i] = momentum * inc_y[i] - config.learning_rate * gain_y[i] * grad_y[i];
      st.yx[i] += inc_x[i];
      st.yy[i] += inc_y[i];
      mean_x += st.yx[i];
      mean_y += st.yy[i];
    }
    mean_x /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      st.yx[i] -= mean_x;
      st.yy[i] -= mean_y;
    }

    const int done = t + 1;
    const bool coarse = done % 50 == 0;
    const bool fine_tail = done > iters - 50 && done % 10 == 0;
    if (coarse || fine_tail || done == iters) {
      detail::tsne_kernel_pass(st);
      const double kl = detail::tsne_kl(p, st);
      if (result.kl_trace.back().first != done) result.kl_trace.emplace_back(done, kl);
    }
  }

  result.kl_final = result.kl_trace.back().second;
  result.embedding.resize(n);
  for (std::size_t i = 0; i < n; ++i) result.embedding[i] = Vec2{st.yx[i], st.yy[i]};
  return result;
}

inline TsneResult tsne_embed(const PointCloud& cloud, const TsneConfig& config) {
  return tsne_embed(cloud.positions, config);
}

} // namespace plantcloud

#endif // PLANTCLOUD_SUPERPOINT_TSNE_HPP
