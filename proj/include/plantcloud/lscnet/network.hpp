// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT
//
// Leaf/stem superpoint classifier: PointNet++-style set abstraction with
// attention modules that shift region centers and resize region radii before
// grouping. Reverse-mode gradients are written out layer by layer and are
// checked against finite differences in the test suite.
//
// Scalar type is a template parameter: tests run in double, production
// training may use float.

#ifndef PLANTCLOUD_LSCNET_NETWORK_HPP
#define PLANTCLOUD_LSCNET_NETWORK_HPP

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "plantcloud/core/types.hpp"
#include "plantcloud/lscnet/fps.hpp"
#include "plantcloud/lscnet/grouping.hpp"

namespace plantcloud {

template <typename S> using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S> using RowV = Eigen::Matrix<S, 1, Eigen::Dynamic>;

/// Geometry of one local set-abstraction layer.
struct SaLayerSpec {
  int centers = 0;        // representative points selected by FPS
  double radius = 0.0;    // base region radius, normalized units
  int group_size = 0;     // K points grouped per region
  std::vector<int> mlp_widths;
  bool csm = true;        // center shift module on
  bool rum = true;        // radius update module on
};

struct LscnetSpec {
  int input_points = 1024;
  std::vector<SaLayerSpec> local_layers{
      {512, 0.2, 32, {64, 64, 128}, true, true},
      {128, 0.4, 64, {128, 128, 256}, true, true},
  };
  std::vector<int> global_widths{256, 512, 1024};
  std::vector<int> head_widths{512, 256};
  double head_dropout = 0.4;
  int attention_hidden = 32; // center-shift scorer hidden width
  int global_hidden = 32;    // global-descriptor width feeding the modules
  int rum_hidden = 16;       // radius-update hidden width

  void validate() const {
    if (input_points < 1) throw DataError("lscnet: input_points must be >= 1");
    int prev = input_points;
    for (const SaLayerSpec& l : local_layers) {
      if (l.centers < 1 || l.centers > prev)
        throw DataError("lscnet: layer centers must be in [1, previous size]");
      if (l.radius <= 0.0) throw DataError("lscnet: layer radius must be > 0");
      if (l.group_size < 1) throw DataError("lscnet: group size must be >= 1");
      if (l.mlp_widths.empty()) throw DataError("lscnet: layer needs MLP widths");
      prev = l.centers;
    }
    if (global_widths.empty()) throw DataError("lscnet: global layer needs MLP widths");
    if (head_dropout < 0.0 || head_dropout >= 1.0)
      throw DataError("lscnet: head dropout must be in [0, 1)");
  }
};

/// Flat registry of parameter tensors; the optimizer, checkpoints and the
/// finite-difference suite all iterate it.
template <typename S>
class ParamStore {
public:
  struct Entry {
    std::string name;
    Mat<S> value;
    Mat<S> grad;
  };

  int add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    entries_.push_back({std::move(name), Mat<S>::Zero(rows, cols), Mat<S>::Zero(rows, cols)});
    return static_cast<int>(entries_.size()) - 1;
  }

  Mat<S>& value(int h) { return entries_[static_cast<std::size_t>(h)].value; }
  const Mat<S>& value(int h) const { return entries_[static_cast<std::size_t>(h)].value; }
  Mat<S>& grad(int h) { return entries_[static_cast<std::size_t>(h)].grad; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grads() {
    for (Entry& e : entries_) e.grad.setZero();
  }

private:
  std::vector<Entry> entries_;
};

template <typename S>
struct LscnetModel {
  struct Mlp {
    std::vector<int> w, b, gamma, beta;
  };
  struct Attention {
    int wg = -1, bg = -1;                            // global descriptor net
    int wa = -1, wb = -1, wc = -1, ba = -1, ws = -1; // center shift scorer
    int wr = -1, br = -1, wu = -1;                   // radius update net
  };
  struct LocalLayer {
    Mlp mlp;
    Attention attn;
  };

  LscnetSpec spec;
  ParamStore<S> params;
  std::vector<LocalLayer> local;
  Mlp global_mlp;
  std::vector<int> head_w, head_b;

  static constexpr double kRadiusUpdateBound = 0.9; // |dr| <= 0.9 * r keeps radii positive
  static constexpr double kNormEps = 1e-5;
};

namespace lsc {

template <typename S>
void glorot_init(Mat<S>& w, Rng& rng) {
  const double scale = std::sqrt(2.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      w(i, j) = static_cast<S>(rng.normal(0.0, scale));
}

template <typename S>
typename LscnetModel<S>::Mlp make_mlp(ParamStore<S>& ps, const std::string& prefix, int in,
                                      const std::vector<int>& widths, Rng& rng) {
  typename LscnetModel<S>::Mlp mlp;
  int fan_in = in;
  for (std::size_t t = 0; t < widths.size(); ++t) {
    const int out = widths[t];
    const std::string tag = prefix + ".mlp" + std::to_string(t);
    mlp.w.push_back(ps.add(tag + ".w", out, fan_in));
    mlp.b.push_back(ps.add(tag + ".b", 1, out));
    mlp.gamma.push_back(ps.add(tag + ".gamma", 1, out));
    mlp.beta.push_back(ps.add(tag + ".beta", 1, out));
    glorot_init(ps.value(mlp.w.back()), rng);
    ps.value(mlp.gamma.back()).setOnes();
    fan_in = out;
  }
  return mlp;
}

} // namespace lsc

/// Builds and initializes a model. Attention scoring vectors start at zero so
/// the modules begin as identity updates (uniform attention, zero radius
/// change); everything else is Glorot-initialized from the seed.
template <typename S>
LscnetModel<S> make_lscnet(const LscnetSpec& spec, std::uint64_t seed) {
  spec.validate();
  LscnetModel<S> model;
  model.spec = spec;
  Rng rng(hash_combine(seed, 0x15c9e7u));
  ParamStore<S>& ps = model.params;

  int feat = 0; // input features beyond coordinates
  for (std::size_t li = 0; li < spec.local_layers.size(); ++li) {
    const SaLayerSpec& l = spec.local_layers[li];
    const std::string tag = "sa" + std::to_string(li + 1);
    typename LscnetModel<S>::LocalLayer layer;
    layer.mlp = lsc::make_mlp(ps, tag, 3 + feat, l.mlp_widths, rng);
    if (l.csm || l.rum) {
      layer.attn.wg = ps.add(tag + ".global.w", spec.global_hidden, 3 + feat);
      layer.attn.bg = ps.add(tag + ".global.b", 1, spec.global_hidden);
      lsc::glorot_init(ps.value(layer.attn.wg), rng);
    }
    if (l.csm) {
      const int ha = spec.attention_hidden;
      layer.attn.wa = ps.add(tag + ".shift.wa", ha, 3 + feat);
      layer.attn.wb = ps.add(tag + ".shift.wb", ha, 3 + feat);
      layer.attn.wc = ps.add(tag + ".shift.wc", ha, spec.global_hidden);
      layer.attn.ba = ps.add(tag + ".shift.b", 1, ha);
      layer.attn.ws = ps.add(tag + ".shift.score", 1, ha);
      lsc::glorot_init(ps.value(layer.attn.wa), rng);
      lsc::glorot_init(ps.value(layer.attn.wb), rng);
      lsc::glorot_init(ps.value(layer.attn.wc), rng);
    }
    if (l.rum) {
      const int hr = spec.rum_hidden;
      layer.attn.wr = ps.add(tag + ".radius.w", hr, 3 + feat + spec.global_hidden);
      layer.attn.br = ps.add(tag + ".radius.b", 1, hr);
      layer.attn.wu = ps.add(tag + ".radius.score", 1, hr);
      lsc::glorot_init(ps.value(layer.attn.wr), rng);
    }
    model.local.push_back(layer);
    feat = l.mlp_widths.back();
  }
  model.global_mlp = lsc::make_mlp(ps, "global", 3 + feat, spec.global_widths, rng);

  int fan_in = spec.global_widths.back();
  for (std::size_t t = 0; t < spec.head_widths.size() + 1; ++t) {
    const int out = t < spec.head_widths.size() ? spec.head_widths[t] : 2;
    const std::string tag = "head" + std::to_string(t);
    model.head_w.push_back(ps.add(tag + ".w", out, fan_in));
    model.head_b.push_back(ps.add(tag + ".b", 1, out));
    lsc::glorot_init(ps.value(model.head_w.back()), rng);
    fan_in = out;
  }
  return model;
}

namespace lsc {

template <typename S>
struct MlpCache {
  std::vector<Mat<S>> inputs; // input of each dense stage
  std::vector<Mat<S>> xhat;   // normalized pre-activation
  std::vector<RowV<S>> istd;  // per-channel 1/std
  std::vector<Mat<S>> out;    // post-ReLU output of each stage
};

/// Shared MLP stage: dense -> per-channel standardization over all rows
/// (learned scale/shift) -> ReLU.
template <typename S>
Mat<S> mlp_forward(ParamStore<S>& ps, const typename LscnetModel<S>::Mlp& h, const Mat<S>& x,
                   MlpCache<S>& cache) {
  Mat<S> cur = x;
  const auto eps = static_cast<S>(LscnetModel<S>::kNormEps);
  cache.inputs.clear();
  cache.xhat.clear();
  cache.istd.clear();
  cache.out.clear();
  for (std::size_t t = 0; t < h.w.size(); ++t) {
    cache.inputs.push_back(cur);
    Mat<S> lin = cur * ps.value(h.w[t]).transpose();
    lin.rowwise() += ps.value(h.b[t]).row(0);

    const auto rows = static_cast<S>(lin.rows());
    RowV<S> mu = lin.colwise().sum() / rows;
    Mat<S> centered = lin.rowwise() - mu;
    RowV<S> var = centered.array().square().colwise().sum() / rows;
    RowV<S> istd = (var.array() + eps).rsqrt();
    Mat<S> xhat = centered.array().rowwise() * istd.array();
    cache.xhat.push_back(xhat);
    cache.istd.push_back(istd);

    Mat<S> y = xhat.array().rowwise() * ps.value(h.gamma[t]).row(0).array();
    y.rowwise() += ps.value(h.beta[t]).row(0);
    cur = y.cwiseMax(S(0));
    cache.out.push_back(cur);
  }
  return cur;
}

template <typename S>
void mlp_backward(ParamStore<S>& ps, const typename LscnetModel<S>::Mlp& h,
                  const MlpCache<S>& cache, const Mat<S>& dout, Mat<S>& dx) {
  Mat<S> dcur = dout;
  for (std::size_t ti = h.w.size(); ti-- > 0;) {
    // ReLU
    dcur = (cache.out[ti].array() > S(0)).template cast<S>() * dcur.array();
    // scale/shift
    ps.grad(h.beta[ti]).row(0) += dcur.colwise().sum();
    ps.grad(h.gamma[ti]).row(0) += (dcur.array() * cache.xhat[ti].array()).colwise().sum().matrix();
    Mat<S> dxhat = dcur.array().rowwise() * ps.value(h.gamma[ti]).row(0).array();
    // standardization over rows
    const auto rows = static_cast<S>(dxhat.rows());
    RowV<S> mean_dxhat = dxhat.colwise().sum() / rows;
    RowV<S> mean_dxhat_xhat =
        (dxhat.array() * cache.xhat[ti].array()).colwise().sum().matrix() / rows;
    Mat<S> dlin = dxhat;
    dlin.rowwise() -= mean_dxhat;
    dlin -= (cache.xhat[ti].array().rowwise() * mean_dxhat_xhat.array()).matrix();
    dlin = dlin.array().rowwise() * cache.istd[ti].array();
    // dense
    ps.grad(h.w[ti]) += dlin.transpose() * cache.inputs[ti];
    ps.grad(h.b[ti]).row(0) += dlin.colwise().sum();
    dcur = dlin * ps.value(h.w[ti]);
  }
  dx = dcur;
}

template <typename S>
struct LocalLayerCache {
  Mat<S> points;   // n x 3 layer input
  Mat<S> features; // n x f layer input (f may be 0)
  std::vector<std::size_t> center_idx;
  std::vector<std::size_t> pre_idx; // m*K pre-grouping rows
  std::vector<std::size_t> fin_idx; // m*K final grouping rows
  // attention caches
  Mat<S> x_global; // n x (3+f)
  Mat<S> hg;       // n x hg
  RowV<S> g;       // 1 x hg
  Mat<S> arows;    // m*K x (3+f)
  Mat<S> grows;    // m x (3+f)
  Mat<S> trows;    // m*K x ha
  Mat<S> alpha;    // m x K
  Mat<S> urows;    // m x hr
  Mat<S> tvals;    // m x 1 (pre-tanh radius score)
  Mat<S> rhat;     // m x 1
  Mat<S> chat;     // m x 3
  // grouped rows
  Mat<S> rel;   // m*K x 3
  MlpCache<S> mlp;
  Mat<S> pooled;
  std::vector<Eigen::Index> argmax; // m * channels
};

template <typename S>
struct GlobalLayerCache {
  Mat<S> points;
  Mat<S> features;
  MlpCache<S> mlp;
  RowV<S> pooled;
  std::vector<Eigen::Index> argmax;
};

template <typename S>
struct HeadCache {
  std::vector<Mat<S>> inputs;
  std::vector<Mat<S>> relu_out;
  std::vector<Mat<S>> masks; // dropout masks (empty in eval mode)
};

template <typename S>
struct Workspace {
  std::vector<LocalLayerCache<S>> local;
  GlobalLayerCache<S> global;
  HeadCache<S> head;
  std::array<double, 2> scores{0.0, 0.0};
};

inline std::vector<Vec3> rows_to_vec3(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  std::vector<Vec3> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = {m(i, 0), m(i, 1), m(i, 2)};
  return out;
}

template <typename S>
std::vector<Vec3> rows_to_vec3_cast(const Mat<S>& m) {
  std::vector<Vec3> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    out[static_cast<std::size_t>(i)] = {static_cast<double>(m(i, 0)), static_cast<double>(m(i, 1)),
                                        static_cast<double>(m(i, 2))};
  return out;
}

/// Region sampling seed derived from data-only values (the pre-shift center
/// coordinates), so grouping stays stable under parameter perturbations and
/// input permutations.
inline std::uint64_t region_seed(std::uint64_t base, std::size_t layer, const Vec3& center) {
  std::uint64_t h = hash_combine(base, layer + 1);
  h = hash_double(h, center.x);
  h = hash_double(h, center.y);
  h = hash_double(h, center.z);
  return h;
}

template <typename S>
void local_layer_forward(const LscnetModel<S>& model_const, ParamStore<S>& ps, std::size_t li,
                         const Mat<S>& points, const Mat<S>& features, std::uint64_t seed,
                         LocalLayerCache<S>& cc) {
  const SaLayerSpec& spec = model_const.spec.local_layers[li];
  const auto& layer = model_const.local[li];
  const int m = spec.centers;
  const int k = spec.group_size;
  const int f = static_cast<int>(features.cols());
  const Eigen::Index n = points.rows();
  const auto r0 = static_cast<S>(spec.radius);

  cc.points = points;
  cc.features = features;
  const std::vector<Vec3> pts = rows_to_vec3_cast(points);
  cc.center_idx = fps(pts, static_cast<std::size_t>(m), 0);

  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(m));
  cc.pre_idx.resize(static_cast<std::size_t>(m) * k);
  for (int j = 0; j < m; ++j) {
    const Vec3& c = pts[cc.center_idx[static_cast<std::size_t>(j)]];
    seeds[static_cast<std::size_t>(j)] = region_seed(seed, li, c);
    const auto idx = ball_group_indices(pts, c, spec.radius, static_cast<std::size_t>(k),
                                        seeds[static_cast<std::size_t>(j)]);
    std::copy(idx.begin(), idx.end(), cc.pre_idx.begin() + static_cast<std::ptrdiff_t>(j) * k);
  }

  Mat<S> centers(m, 3);
  for (int j = 0; j < m; ++j)
    centers.row(j) = points.row(static_cast<Eigen::Index>(cc.center_idx[static_cast<std::size_t>(j)]));

  const bool attn = spec.csm || spec.rum;
  if (attn) {
    RowV<S> cloud_mean = points.colwise().sum() / static_cast<S>(n);
    cc.x_global.resize(n, 3 + f);
    cc.x_global.leftCols(3) = points.rowwise() - cloud_mean;
    if (f > 0) cc.x_global.rightCols(f) = features;
    Mat<S> lin = cc.x_global * ps.value(layer.attn.wg).transpose();
    lin.rowwise() += ps.value(layer.attn.bg).row(0);
    cc.hg = lin.array().tanh();
    cc.g = cc.hg.colwise().sum() / static_cast<S>(n);

    cc.arows.resize(static_cast<Eigen::Index>(m) * k, 3 + f);
    for (int j = 0; j < m; ++j)
      for (int kk = 0; kk < k; ++kk) {
        const Eigen::Index row = static_cast<Eigen::Index>(j) * k + kk;
        const auto i = static_cast<Eigen::Index>(cc.pre_idx[static_cast<std::size_t>(row)]);
        cc.arows.row(row).leftCols(3) = (points.row(i) - centers.row(j)) / r0;
        if (f > 0) cc.arows.row(row).rightCols(f) = features.row(i);
      }
    cc.grows.resize(m, 3 + f);
    for (int j = 0; j < m; ++j)
      cc.grows.row(j) = cc.arows.middleRows(static_cast<Eigen::Index>(j) * k, k).colwise().sum() /
                        static_cast<S>(k);
  }

  if (spec.csm) {
    Mat<S> pre = cc.arows * ps.value(layer.attn.wa).transpose();
    for (int j = 0; j < m; ++j)
      pre.middleRows(static_cast<Eigen::Index>(j) * k, k).rowwise() +=
          (cc.grows.row(j) * ps.value(layer.attn.wb).transpose());
    pre.rowwise() += (cc.g * ps.value(layer.attn.wc).transpose()).row(0);
    pre.rowwise() += ps.value(layer.attn.ba).row(0);
    cc.trows = pre.array().tanh();
    Mat<S> svals = cc.trows * ps.value(layer.attn.ws).transpose(); // m*K x 1

    cc.alpha.resize(m, k);
    Mat<S> dc = Mat<S>::Zero(m, 3);
    for (int j = 0; j < m; ++j) {
      S mx = svals(static_cast<Eigen::Index>(j) * k, 0);
      for (int kk = 1; kk < k; ++kk)
        mx = std::max(mx, svals(static_cast<Eigen::Index>(j) * k + kk, 0));
      S denom = S(0);
      for (int kk = 0; kk < k; ++kk) {
        const S e = std::exp(svals(static_cast<Eigen::Index>(j) * k + kk, 0) - mx);
        cc.alpha(j, kk) = e;
        denom += e;
      }
      for (int kk = 0; kk < k; ++kk) {
        cc.alpha(j, kk) /= denom;
        const auto i = static_cast<Eigen::Index>(
            cc.pre_idx[static_cast<std::size_t>(j) * k + static_cast<std::size_t>(kk)]);
        dc.row(j) += cc.alpha(j, kk) * (points.row(i) - centers.row(j));
      }
    }
    cc.chat = centers + dc;
  } else {
    cc.chat = centers;
  }

  cc.rhat.resize(m, 1);
  if (spec.rum) {
    const int hg = model_const.spec.global_hidden;
    Mat<S> gin(m, cc.grows.cols() + hg);
    gin.leftCols(cc.grows.cols()) = cc.grows;
    gin.rightCols(hg) = cc.g.replicate(m, 1);
    Mat<S> lin = gin * ps.value(layer.attn.wr).transpose();
    lin.rowwise() += ps.value(layer.attn.br).row(0);
    cc.urows = lin.array().tanh();
    cc.tvals = cc.urows * ps.value(layer.attn.wu).transpose(); // m x 1
    const auto bound = static_cast<S>(LscnetModel<S>::kRadiusUpdateBound);
    for (int j = 0; j < m; ++j)
      cc.rhat(j, 0) = r0 + r0 * bound * std::tanh(cc.tvals(j, 0));
  } else {
    cc.rhat.setConstant(r0);
  }

  cc.fin_idx.resize(static_cast<std::size_t>(m) * k);
  for (int j = 0; j < m; ++j) {
    const Vec3 c{static_cast<double>(cc.chat(j, 0)), static_cast<double>(cc.chat(j, 1)),
                 static_cast<double>(cc.chat(j, 2))};
    const auto idx = ball_group_indices(pts, c, static_cast<double>(cc.rhat(j, 0)),
                                        static_cast<std::size_t>(k), seeds[static_cast<std::size_t>(j)]);
    std::copy(idx.begin(), idx.end(), cc.fin_idx.begin() + static_cast<std::ptrdiff_t>(j) * k);
  }

  Mat<S> yrows(static_cast<Eigen::Index>(m) * k, 3 + f);
  cc.rel.resize(static_cast<Eigen::Index>(m) * k, 3);
  for (int j = 0; j < m; ++j)
    for (int kk = 0; kk < k; ++kk) {
      const Eigen::Index row = static_cast<Eigen::Index>(j) * k + kk;
      const auto i = static_cast<Eigen::Index>(cc.fin_idx[static_cast<std::size_t>(row)]);
      cc.rel.row(row) = (points.row(i) - cc.chat.row(j)) / cc.rhat(j, 0);
      yrows.row(row).leftCols(3) = cc.rel.row(row);
      if (f > 0) yrows.row(row).rightCols(f) = features.row(i);
    }

  const Mat<S> z = mlp_forward(ps, layer.mlp, yrows, cc.mlp);
  const int channels = static_cast<int>(z.cols());
  cc.pooled.resize(m, channels);
  cc.argmax.assign(static_cast<std::size_t>(m) * channels, 0);
  for (int j = 0; j < m; ++j)
    for (int ch = 0; ch < channels; ++ch) {
      Eigen::Index best = 0;
      S mx = z(static_cast<Eigen::Index>(j) * k, ch);
      for (int kk = 1; kk < k; ++kk) {
        const S v = z(static_cast<Eigen::Index>(j) * k + kk, ch);
        if (v > mx) {
          mx = v;
          best = kk;
        }
      }
      cc.pooled(j, ch) = mx;
      cc.argmax[static_cast<std::size_t>(j) * channels + static_cast<std::size_t>(ch)] = best;
    }
}

template <typename S>
void local_layer_backward(const LscnetModel<S>& model_const, ParamStore<S>& ps, std::size_t li,
                          const LocalLayerCache<S>& cc, const Mat<S>& dpout, const Mat<S>& dfout,
                          Mat<S>& dpoints, Mat<S>& dfeatures) {
  const SaLayerSpec& spec = model_const.spec.local_layers[li];
  const auto& layer = model_const.local[li];
  const int m = spec.centers;
  const int k = spec.group_size;
  const int f = static_cast<int>(cc.features.cols());
  const Eigen::Index n = cc.points.rows();
  const auto r0 = static_cast<S>(spec.radius);

  dpoints = Mat<S>::Zero(n, 3);
  dfeatures = Mat<S>::Zero(n, f);

  // max pool
  const int channels = static_cast<int>(cc.pooled.cols());
  Mat<S> dz = Mat<S>::Zero(static_cast<Eigen::Index>(m) * k, channels);
  for (int j = 0; j < m; ++j)
    for (int ch = 0; ch < channels; ++ch)
      dz(static_cast<Eigen::Index>(j) * k +
             cc.argmax[static_cast<std::size_t>(j) * channels + static_cast<std::size_t>(ch)],
         ch) += dfout(j, ch);

  Mat<S> dyrows;
  mlp_backward(ps, layer.mlp, cc.mlp, dz, dyrows);

  Mat<S> dchat = dpout;           // downstream gradient on the layer's output points
  Mat<S> drhat = Mat<S>::Zero(m, 1);
  Mat<S> dcenters = Mat<S>::Zero(m, 3);

  for (int j = 0; j < m; ++j) {
    const S inv_r = S(1) / cc.rhat(j, 0);
    for (int kk = 0; kk < k; ++kk) {
      const Eigen::Index row = static_cast<Eigen::Index>(j) * k + kk;
      const auto i = static_cast<Eigen::Index>(cc.fin_idx[static_cast<std::size_t>(row)]);
      const auto drel = dyrows.row(row).leftCols(3);
      dpoints.row(i) += drel * inv_r;
      dchat.row(j) -= drel * inv_r;
      drhat(j, 0) -= (drel.array() * cc.rel.row(row).array()).sum() * inv_r;
      if (f > 0) dfeatures.row(i) += dyrows.row(row).rightCols(f);
    }
  }

  const bool attn = spec.csm || spec.rum;
  Mat<S> dgrows;
  RowV<S> dg;
  if (attn) {
    dgrows = Mat<S>::Zero(m, 3 + f);
    dg = RowV<S>::Zero(cc.g.cols());
  }

  if (spec.rum) {
    const auto bound = static_cast<S>(LscnetModel<S>::kRadiusUpdateBound);
    Mat<S> dt(m, 1);
    for (int j = 0; j < m; ++j) {
      const S th = std::tanh(cc.tvals(j, 0));
      dt(j, 0) = drhat(j, 0) * r0 * bound * (S(1) - th * th);
    }
    ps.grad(layer.attn.wu).row(0) += (dt.transpose() * cc.urows).row(0);
    Mat<S> du = dt * ps.value(layer.attn.wu);
    Mat<S> dlin = du.array() * (S(1) - cc.urows.array().square());
    const int hg = model_const.spec.global_hidden;
    Mat<S> gin(m, 3 + f + hg);
    gin.leftCols(3 + f) = cc.grows;
    gin.rightCols(hg) = cc.g.replicate(m, 1);
    ps.grad(layer.attn.wr) += dlin.transpose() * gin;
    ps.grad(layer.attn.br).row(0) += dlin.colwise().sum();
    Mat<S> dgin = dlin * ps.value(layer.attn.wr);
    dgrows += dgin.leftCols(3 + f);
    dg += dgin.rightCols(hg).colwise().sum();
  }

  if (spec.csm) {
    // position paths of dc = sum_k alpha (p - c)
    Mat<S> dalpha = Mat<S>::Zero(m, k);
    for (int j = 0; j < m; ++j) {
      const auto ddc = dchat.row(j); // d(chat) = d(dc); identity path handled below
      for (int kk = 0; kk < k; ++kk) {
        const auto i = static_cast<Eigen::Index>(
            cc.pre_idx[static_cast<std::size_t>(j) * k + static_cast<std::size_t>(kk)]);
        const auto ci = static_cast<Eigen::Index>(cc.center_idx[static_cast<std::size_t>(j)]);
        dalpha(j, kk) =
            (ddc.array() * (cc.points.row(i) - cc.points.row(ci)).array()).sum();
        dpoints.row(i) += cc.alpha(j, kk) * ddc;
      }
      dcenters.row(j) -= ddc; // -d(dc) from the sum over alpha (sums to one)
      dcenters.row(j) += ddc; // identity path of chat = c + dc
    }
    // softmax
    Mat<S> ds(static_cast<Eigen::Index>(m) * k, 1);
    for (int j = 0; j < m; ++j) {
      S inner = S(0);
      for (int kk = 0; kk < k; ++kk) inner += cc.alpha(j, kk) * dalpha(j, kk);
      for (int kk = 0; kk < k; ++kk)
        ds(static_cast<Eigen::Index>(j) * k + kk, 0) = cc.alpha(j, kk) * (dalpha(j, kk) - inner);
    }
    ps.grad(layer.attn.ws).row(0) += (ds.transpose() * cc.trows).row(0);
    Mat<S> dtrows = ds * ps.value(layer.attn.ws);
    Mat<S> dpre = dtrows.array() * (S(1) - cc.trows.array().square());
    ps.grad(layer.attn.wa) += dpre.transpose() * cc.arows;
    ps.grad(layer.attn.ba).row(0) += dpre.colwise().sum();
    Mat<S> darows_local = dpre * ps.value(layer.attn.wa);
    for (int j = 0; j < m; ++j) {
      const RowV<S> dpre_sum = dpre.middleRows(static_cast<Eigen::Index>(j) * k, k).colwise().sum();
      ps.grad(layer.attn.wb) += dpre_sum.transpose() * cc.grows.row(j);
      dgrows.row(j) += dpre_sum * ps.value(layer.attn.wb);
    }
    const RowV<S> dpre_all = dpre.colwise().sum();
    ps.grad(layer.attn.wc) += dpre_all.transpose() * cc.g;
    dg += dpre_all * ps.value(layer.attn.wc);

    // accumulate attention-row gradients into points/features/centers
    for (int j = 0; j < m; ++j)
      for (int kk = 0; kk < k; ++kk) {
        const Eigen::Index row = static_cast<Eigen::Index>(j) * k + kk;
        const auto i = static_cast<Eigen::Index>(cc.pre_idx[static_cast<std::size_t>(row)]);
        const RowV<S> da = darows_local.row(row) + dgrows.row(j) / static_cast<S>(k);
        dpoints.row(i) += da.leftCols(3) / r0;
        dcenters.row(j) -= da.leftCols(3) / r0;
        if (f > 0) dfeatures.row(i) += da.rightCols(f);
      }
  } else if (spec.rum) {
    // no CSM: chat == centers, grows still feeds RUM
    dcenters += dchat;
    for (int j = 0; j < m; ++j)
      for (int kk = 0; kk < k; ++kk) {
        const Eigen::Index row = static_cast<Eigen::Index>(j) * k + kk;
        const auto i = static_cast<Eigen::Index>(cc.pre_idx[static_cast<std::size_t>(row)]);
        const RowV<S> da = dgrows.row(j) / static_cast<S>(k);
        dpoints.row(i) += da.leftCols(3) / r0;
        dcenters.row(j) -= da.leftCols(3) / r0;
        if (f > 0) dfeatures.row(i) += da.rightCols(f);
      }
  } else {
    dcenters += dchat;
  }

  if (attn) {
    // global descriptor: G = mean(tanh(X wg^T + bg))
    Mat<S> dhg = (dg / static_cast<S>(n)).replicate(n, 1);
    Mat<S> dling = dhg.array() * (S(1) - cc.hg.array().square());
    ps.grad(layer.attn.wg) += dling.transpose() * cc.x_global;
    ps.grad(layer.attn.bg).row(0) += dling.colwise().sum();
    Mat<S> dxg = dling * ps.value(layer.attn.wg);
    // X = [P - mean(P), F]
    Mat<S> dxpos = dxg.leftCols(3);
    dpoints += dxpos;
    const RowV<S> correction = dxpos.colwise().sum() / static_cast<S>(n);
    dpoints.rowwise() -= correction;
    if (f > 0) dfeatures += dxg.rightCols(f);
  }

  for (int j = 0; j < m; ++j)
    dpoints.row(static_cast<Eigen::Index>(cc.center_idx[static_cast<std::size_t>(j)])) +=
        dcenters.row(j);
}

template <typename S>
void global_layer_forward(ParamStore<S>& ps, const typename LscnetModel<S>::Mlp& mlp,
                          const Mat<S>& points, const Mat<S>& features, GlobalLayerCache<S>& cc) {
  const Eigen::Index n = points.rows();
  const int f = static_cast<int>(features.cols());
  cc.points = points;
  cc.features = features;
  RowV<S> centroid = points.colwise().sum() / static_cast<S>(n);
  Mat<S> rows(n, 3 + f);
  rows.leftCols(3) = points.rowwise() - centroid;
  if (f > 0) rows.rightCols(f) = features;
  const Mat<S> z = mlp_forward(ps, mlp, rows, cc.mlp);
  const int channels = static_cast<int>(z.cols());
  cc.pooled.resize(channels);
  cc.argmax.assign(static_cast<std::size_t>(channels), 0);
  for (int ch = 0; ch < channels; ++ch) {
    Eigen::Index best = 0;
    S mx = z(0, ch);
    for (Eigen::Index i = 1; i < n; ++i)
      if (z(i, ch) > mx) {
        mx = z(i, ch);
        best = i;
      }
    cc.pooled(ch) = mx;
    cc.argmax[static_cast<std::size_t>(ch)] = best;
  }
}

template <typename S>
void global_layer_backward(ParamStore<S>& ps, const typename LscnetModel<S>::Mlp& mlp,
                           const GlobalLayerCache<S>& cc, const RowV<S>& dpooled, Mat<S>& dpoints,
                           Mat<S>& dfeatures) {
  const Eigen::Index n = cc.points.rows();
  const int f = static_cast<int>(cc.features.cols());
  const int channels = static_cast<int>(cc.pooled.cols());
  Mat<S> dz = Mat<S>::Zero(n, channels);
  for (int ch = 0; ch < channels; ++ch) dz(cc.argmax[static_cast<std::size_t>(ch)], ch) += dpooled(ch);
  Mat<S> drows;
  mlp_backward(ps, mlp, cc.mlp, dz, drows);
  dpoints = drows.leftCols(3);
  const RowV<S> correction = dpoints.colwise().sum() / static_cast<S>(n);
  dpoints.rowwise() -= correction;
  dfeatures = f > 0 ? Mat<S>(drows.rightCols(f)) : Mat<S>(n, 0);
}

} // namespace lsc

/// Forward pass on normalized input positions (rows of an N x 3 matrix).
/// When `train_mode` is set, head dropout masks are sampled from `dropout_rng`.
template <typename S>
lsc::Workspace<S> lscnet_forward(LscnetModel<S>& model, const Mat<S>& positions,
                                 std::uint64_t grouping_seed, bool train_mode = false,
                                 Rng* dropout_rng = nullptr) {
  if (positions.rows() < 1) throw DataError("lscnet forward on empty input");
  lsc::Workspace<S> ws;
  ws.local.resize(model.local.size());
  Mat<S> pts = positions;
  Mat<S> feat(positions.rows(), 0);
  for (std::size_t li = 0; li < model.local.size(); ++li) {
    lsc::local_layer_forward(model, model.params, li, pts, feat, grouping_seed, ws.local[li]);
    pts = ws.local[li].chat;
    feat = ws.local[li].pooled;
  }
  lsc::global_layer_forward(model.params, model.global_mlp, pts, feat, ws.global);

  Mat<S> x = ws.global.pooled;
  ws.head.inputs.clear();
  ws.head.relu_out.clear();
  ws.head.masks.clear();
  const double keep = 1.0 - model.spec.head_dropout;
  for (std::size_t t = 0; t + 1 < model.head_w.size(); ++t) {
    ws.head.inputs.push_back(x);
    Mat<S> lin = x * model.params.value(model.head_w[t]).transpose();
    lin.rowwise() += model.params.value(model.head_b[t]).row(0);
    Mat<S> relu = lin.cwiseMax(S(0));
    ws.head.relu_out.push_back(relu);
    if (train_mode && model.spec.head_dropout > 0.0) {
      if (dropout_rng == nullptr) throw DataError("train-mode forward needs a dropout RNG");
      Mat<S> mask(relu.rows(), relu.cols());
      for (Eigen::Index i = 0; i < mask.rows(); ++i)
        for (Eigen::Index j = 0; j < mask.cols(); ++j)
          mask(i, j) = dropout_rng->uniform() < keep ? static_cast<S>(1.0 / keep) : S(0);
      ws.head.masks.push_back(mask);
      x = relu.cwiseProduct(mask);
    } else {
      x = relu;
    }
  }
  ws.head.inputs.push_back(x);
  Mat<S> scores = x * model.params.value(model.head_w.back()).transpose();
  scores.rowwise() += model.params.value(model.head_b.back()).row(0);
  ws.scores = {static_cast<double>(scores(0, 0)), static_cast<double>(scores(0, 1))};
  return ws;
}

/// Accumulates parameter gradients for d(loss)/d(scores).
template <typename S>
void lscnet_backward(LscnetModel<S>& model, lsc::Workspace<S>& ws,
                     const std::array<double, 2>& dscores) {
  ParamStore<S>& ps = model.params;
  Mat<S> dx(1, 2);
  dx(0, 0) = static_cast<S>(dscores[0]);
  dx(0, 1) = static_cast<S>(dscores[1]);

  for (std::size_t t = model.head_w.size(); t-- > 0;) {
    const Mat<S>& input = ws.head.inputs[t];
    ps.grad(model.head_w[t]) += dx.transpose() * input;
    ps.grad(model.head_b[t]).row(0) += dx.colwise().sum();
    Mat<S> dinput = dx * ps.value(model.head_w[t]);
    if (t == 0) {
      dx = dinput;
      break;
    }
    if (!ws.head.masks.empty()) dinput = dinput.cwiseProduct(ws.head.masks[t - 1]);
    dx = (ws.head.relu_out[t - 1].array() > S(0)).template cast<S>() * dinput.array();
  }

  RowV<S> dglobal = dx.row(0);
  Mat<S> dpts, dfeat;
  lsc::global_layer_backward(ps, model.global_mlp, ws.global, dglobal, dpts, dfeat);

  for (std::size_t li = model.local.size(); li-- > 0;) {
    Mat<S> dpts_in, dfeat_in;
    lsc::local_layer_backward(model, ps, li, ws.local[li], dpts, dfeat, dpts_in, dfeat_in);
    dpts = dpts_in;
    dfeat = dfeat_in;
  }
}

/// Class-weighted softmax cross entropy; returns the loss and fills the
/// gradient with respect to the two scores.
inline double cross_entropy(const std::array<double, 2>& scores, int label,
                            const std::array<double, 2>& class_weights,
                            std::array<double, 2>& dscores) {
  const double mx = std::max(scores[0], scores[1]);
  const double e0 = std::exp(scores[0] - mx);
  const double e1 = std::exp(scores[1] - mx);
  const double lse = mx + std::log(e0 + e1);
  const double w = class_weights[static_cast<std::size_t>(label)];
  const double p0 = e0 / (e0 + e1);
  const double p1 = e1 / (e0 + e1);
  dscores[0] = w * (p0 - (label == 0 ? 1.0 : 0.0));
  dscores[1] = w * (p1 - (label == 1 ? 1.0 : 0.0));
  return w * (lse - scores[static_cast<std::size_t>(label)]);
}

} // namespace plantcloud

#endif // PLANTCLOUD_LSCNET_NETWORK_HPP
