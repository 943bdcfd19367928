// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT

#ifndef PLANTCLOUD_LSCNET_TRAIN_HPP
#define PLANTCLOUD_LSCNET_TRAIN_HPP

#include <algorithm>
#include <cstdint>
#include <tuple>
#include <vector>

#include "plantcloud/core/point_cloud.hpp"
#include "plantcloud/lscnet/network.hpp"
#include "plantcloud/superpoint/extract.hpp"

namespace plantcloud {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double learning_rate = 1e-3;
  int lr_halve_every = 20;
  double momentum = 0.9;
  bool class_weighting = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1 || batch_size < 1) throw DataError("train: epochs/batch must be >= 1");
    if (learning_rate <= 0.0 || momentum < 0.0 || momentum >= 1.0)
      throw DataError("train: bad learning rate or momentum");
    if (lr_halve_every < 1) throw DataError("train: lr_halve_every must be >= 1");
  }
};

/// Label encoding used by the classifier head: column 0 scores stem, column 1
/// scores leaf.
inline int class_index(Semantic s) {
  if (s == Semantic::Stem) return 0;
  if (s == Semantic::Leaf) return 1;
  throw DataError("unlabeled point has no class index");
}

namespace lsc {

inline bool lex_less(const Vec3& a, const Vec3& b) {
  return std::tie(a.x, a.y, a.z) < std::tie(b.x, b.y, b.z);
}

inline std::uint64_t point_set_hash(const std::vector<Vec3>& sorted_pts) {
  std::uint64_t h = 0x9ae16a3b2f90404fULL;
  for (const Vec3& p : sorted_pts) {
    h = hash_double(h, p.x);
    h = hash_double(h, p.y);
    h = hash_double(h, p.z);
  }
  return h;
}

} // namespace lsc

/// Canonical network input: lexically sorted points, resampled to exactly
/// `target` rows (uniform with replacement when short, uniform subsample when
/// long, seeded from the point-set content), translated to the centroid and
/// scaled into the unit sphere. Depends only on the point multiset, never on
/// input order.
template <typename S>
Mat<S> prepare_input(const std::vector<Vec3>& points, int target, std::uint64_t seed) {
  if (points.empty()) throw DataError("cannot prepare an empty superpoint");
  std::vector<Vec3> sorted = points;
  std::sort(sorted.begin(), sorted.end(), lsc::lex_less);
  Rng rng(hash_combine(seed, lsc::point_set_hash(sorted)));

  std::vector<Vec3> chosen;
  chosen.reserve(static_cast<std::size_t>(target));
  const std::size_t n = sorted.size();
  if (n >= static_cast<std::size_t>(target)) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = 0; i < static_cast<std::size_t>(target); ++i)
      std::swap(perm[i], perm[i + rng.bounded(n - i)]);
    for (std::size_t i = 0; i < static_cast<std::size_t>(target); ++i)
      chosen.push_back(sorted[perm[i]]);
  } else {
    for (int i = 0; i < target; ++i) chosen.push_back(sorted[rng.bounded(n)]);
  }
  std::sort(chosen.begin(), chosen.end(), lsc::lex_less);

  Vec3 centroid{0, 0, 0};
  for (const Vec3& p : chosen) centroid += p;
  centroid *= 1.0 / static_cast<double>(target);
  double max_d = 0.0;
  for (const Vec3& p : chosen) max_d = std::max(max_d, norm(p - centroid));
  const double scale = max_d > 0.0 ? 1.0 / max_d : 1.0;

  Mat<S> out(target, 3);
  for (int i = 0; i < target; ++i) {
    const Vec3 q = (chosen[static_cast<std::size_t>(i)] - centroid) * scale;
    out(i, 0) = static_cast<S>(q.x);
    out(i, 1) = static_cast<S>(q.y);
    out(i, 2) = static_cast<S>(q.z);
  }
  return out;
}

/// One labeled training example: the member positions of a superpoint.
struct LabeledCloud {
  std::vector<Vec3> positions;
  int label = 0; // class_index encoding
};

struct SuperpointDatasetStats {
  std::size_t total_superpoints = 0;
  std::size_t kept = 0;
  std::size_t dropped_low_purity = 0;
  std::size_t dropped_unlabeled = 0;
};

/// Majority semantic label and purity of one superpoint (unlabeled points are
/// ignored; ties go to stem, the rarer class).
inline std::pair<Semantic, double> superpoint_majority(const PointCloud& cloud,
                                                       const std::vector<std::size_t>& members) {
  std::size_t stem = 0, leaf = 0;
  for (std::size_t i : members) {
    if (cloud.semantic[i] == Semantic::Stem) ++stem;
    else if (cloud.semantic[i] == Semantic::Leaf) ++leaf;
  }
  if (stem + leaf == 0) return {Semantic::Unlabeled, 0.0};
  const Semantic label = leaf > stem ? Semantic::Leaf : Semantic::Stem;
  const double purity =
      static_cast<double>(std::max(stem, leaf)) / static_cast<double>(stem + leaf);
  return {label, purity};
}

/// Training examples from a labeled plant: one sample per superpoint whose
/// member labels are at least `min_purity` pure. Impure superpoints are kept
/// at inference but excluded here.
inline std::vector<LabeledCloud> make_superpoint_dataset(const PointCloud& cloud,
                                                         const SuperpointPartition& partition,
                                                         double min_purity = 0.7,
                                                         SuperpointDatasetStats* stats = nullptr) {
  std::vector<LabeledCloud> out;
  SuperpointDatasetStats local;
  local.total_superpoints = partition.count();
  for (const std::vector<std::size_t>& members : partition.members) {
    const auto [label, purity] = superpoint_majority(cloud, members);
    if (label == Semantic::Unlabeled) {
      ++local.dropped_unlabeled;
      continue;
    }
    if (purity < min_purity) {
      ++local.dropped_low_purity;
      continue;
    }
    LabeledCloud sample;
    sample.positions.reserve(members.size());
    for (std::size_t i : members) sample.positions.push_back(cloud.positions[i]);
    sample.label = class_index(label);
    out.push_back(std::move(sample));
    ++local.kept;
  }
  if (stats != nullptr) *stats = local;
  return out;
}

template <typename S>
struct TrainResult {
  std::vector<double> epoch_losses; // mean weighted cross entropy per epoch
};

/// Momentum SGD over the labeled superpoints. The learning rate halves every
/// `lr_halve_every` epochs; sample order, dropout and resampling all derive
/// from the seed, so training is reproducible.
template <typename S>
TrainResult<S> train(LscnetModel<S>& model, const std::vector<LabeledCloud>& dataset,
                     const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw DataError("train: empty dataset");
  std::array<std::size_t, 2> counts{0, 0};
  for (const LabeledCloud& s : dataset) {
    if (s.label != 0 && s.label != 1) throw DataError("train: label out of range");
    ++counts[static_cast<std::size_t>(s.label)];
  }
  if (counts[0] == 0 || counts[1] == 0)
    throw DataError("train: need at least one example of each class");

  std::array<double, 2> class_weights{1.0, 1.0};
  if (config.class_weighting) {
    const double total = static_cast<double>(dataset.size());
    class_weights[0] = total / (2.0 * static_cast<double>(counts[0]));
    class_weights[1] = total / (2.0 * static_cast<double>(counts[1]));
  }

  // fixed canonical resampling per sample
  std::vector<Mat<S>> inputs(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i)
    inputs[i] = prepare_input<S>(dataset[i].positions, model.spec.input_points,
                                 hash_combine(config.seed, 0xda7a5e7ULL));

  std::vector<Mat<S>> velocity;
  velocity.reserve(model.params.entries().size());
  for (const auto& e : model.params.entries())
    velocity.push_back(Mat<S>::Zero(e.value.rows(), e.value.cols()));

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult<S> result;
  Rng dropout_rng(hash_combine(config.seed, 0xd20b0a7ULL));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.learning_rate *
                      std::pow(0.5, static_cast<double>(epoch / config.lr_halve_every));
    Rng shuffle_rng(hash_combine(hash_combine(config.seed, 0x0e90c4ULL), epoch));
    for (std::size_t i = 0; i < order.size(); ++i)
      std::swap(order[i], order[i + shuffle_rng.bounded(order.size() - i)]);

    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      model.params.zero_grads();
      double batch_loss = 0.0;
      for (std::size_t bi = begin; bi < end; ++bi) {
        const std::size_t si = order[bi];
        auto ws = lscnet_forward(model, inputs[si], config.seed, true, &dropout_rng);
        std::array<double, 2> dscores;
        batch_loss += cross_entropy(ws.scores, dataset[si].label, class_weights, dscores);
        const double inv = 1.0 / static_cast<double>(end - begin);
        dscores[0] *= inv;
        dscores[1] *= inv;
        lscnet_backward(model, ws, dscores);
      }
      epoch_loss += batch_loss;
      auto& entries = model.params.entries();
      for (std::size_t t = 0; t < entries.size(); ++t) {
        velocity[t] = static_cast<S>(config.momentum) * velocity[t] -
                      static_cast<S>(lr) * entries[t].grad;
        entries[t].value += velocity[t];
      }
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(dataset.size()));
  }
  return result;
}

} // namespace plantcloud

#endif // PLANTCLOUD_LSCNET_TRAIN_HPP
