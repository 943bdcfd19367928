// plantcloud - header-only C++20 toolkit for plant point-cloud processing
// SPDX-License-Identifier: MIT
//
// Two-class segmentation scoring: per-class precision/recall/IoU, overall
// accuracy and mean IoU, with micro (count-pooled) aggregation across plants.

#ifndef PLANTCLOUD_METRICS_EVALUATE_HPP
#define PLANTCLOUD_METRICS_EVALUATE_HPP

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "plantcloud/core/point_cloud.hpp"
#include "plantcloud/core/types.hpp"

namespace plantcloud {

/// Joint counts over {stem, leaf}: counts[t][p] = points with truth t
/// predicted p (0 = stem, 1 = leaf).
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, 2>, 2> counts{{{0, 0}, {0, 0}}};

  std::uint64_t total() const {
    return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
  }
  std::uint64_t tp(int cls) const { return counts[cls][cls]; }
  std::uint64_t fp(int cls) const { return counts[1 - cls][cls]; }
  std::uint64_t fn(int cls) const { return counts[cls][1 - cls]; }
  std::uint64_t tn(int cls) const { return counts[1 - cls][1 - cls]; }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    for (int t = 0; t < 2; ++t)
      for (int p = 0; p < 2; ++p) counts[t][p] += o.counts[t][p];
    return *this;
  }
};

struct ClassScores {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> iou;
};

struct SegmentationReport {
  ConfusionMatrix confusion;
  ClassScores stem;
  ClassScores leaf;
  std::optional<double> accuracy;
  std::optional<double> miou;
};

namespace detail {

inline std::optional<double> ratio(std::uint64_t num, std::uint64_t denom) {
  if (denom == 0) return std::nullopt; // undefined, reported as absent
  return static_cast<double>(num) / static_cast<double>(denom);
}

inline ClassScores class_scores(const ConfusionMatrix& m, int cls) {
  ClassScores s;
  s.precision = ratio(m.tp(cls), m.tp(cls) + m.fp(cls));
  s.recall = ratio(m.tp(cls), m.tp(cls) + m.fn(cls));
  s.iou = ratio(m.tp(cls), m.tp(cls) + m.fp(cls) + m.fn(cls));
  return s;
}

} // namespace detail

inline SegmentationReport report_from_confusion(const ConfusionMatrix& m) {
  SegmentationReport r;
  r.confusion = m;
  r.stem = detail::class_scores(m, 0);
  r.leaf = detail::class_scores(m, 1);
  r.accuracy = detail::ratio(m.tp(0) + m.tp(1), m.total());
  if (r.stem.iou && r.leaf.iou) r.miou = (*r.stem.iou + *r.leaf.iou) / 2.0;
  else if (r.stem.iou) r.miou = r.stem.iou;
  else if (r.leaf.iou) r.miou = r.leaf.iou;
  return r;
}

/// Scores predictions against ground truth. Unlabeled points are an error
/// unless `ignore_unlabeled` is set, in which case any pair with an
/// unlabeled side is excluded from the counts.
inline SegmentationReport evaluate(const std::vector<Semantic>& pred,
                                   const std::vector<Semantic>& truth,
                                   bool ignore_unlabeled = false) {
  if (pred.size() != truth.size()) throw DataError("evaluate: label vectors differ in length");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == Semantic::Unlabeled || truth[i] == Semantic::Unlabeled) {
      if (ignore_unlabeled) continue;
      throw DataError("evaluate: unlabeled point at index " + std::to_string(i));
    }
    const int t = truth[i] == Semantic::Stem ? 0 : 1;
    const int p = pred[i] == Semantic::Stem ? 0 : 1;
    ++m.counts[t][p];
  }
  return report_from_confusion(m);
}

inline SegmentationReport evaluate(const PointCloud& pred, const PointCloud& truth,
                                   bool ignore_unlabeled = false) {
  return evaluate(pred.semantic, truth.semantic, ignore_unlabeled);
}

/// Micro aggregation: confusion counts are pooled across plants, then the
/// measures are recomputed from the pooled counts.
inline SegmentationReport aggregate(const std::vector<SegmentationReport>& reports) {
  if (reports.empty()) throw DataError("aggregate: no reports");
  ConfusionMatrix pooled;
  for (const SegmentationReport& r : reports) pooled += r.confusion;
  return report_from_confusion(pooled);
}

/// Macro aggregation: plain mean of each defined measure across plants.
inline SegmentationReport aggregate_macro(const std::vector<SegmentationReport>& reports) {
  if (reports.empty()) throw DataError("aggregate: no reports");
  SegmentationReport out;
  auto mean_of = [&](auto getter) -> std::optional<double> {
    double sum = 0.0;
    std::size_t n = 0;
    for (const SegmentationReport& r : reports) {
      const std::optional<double> v = getter(r);
      if (v) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  for (const SegmentationReport& r : reports) out.confusion += r.confusion;
  out.stem.precision = mean_of([](const auto& r) { return r.stem.precision; });
  out.stem.recall = mean_of([](const auto& r) { return r.stem.recall; });
  out.stem.iou = mean_of([](const auto& r) { return r.stem.iou; });
  out.leaf.precision = mean_of([](const auto& r) { return r.leaf.precision; });
  out.leaf.recall = mean_of([](const auto& r) { return r.leaf.recall; });
  out.leaf.iou = mean_of([](const auto& r) { return r.leaf.iou; });
  out.accuracy = mean_of([](const auto& r) { return r.accuracy; });
  out.miou = mean_of([](const auto& r) { return r.miou; });
  return out;
}

/// Key-value serialization, one measure per line, 4 decimal places, absent
/// measures printed as n/a. Lines starting with '#' carry context.
inline std::string report_to_text(const SegmentationReport& r,
                                  const std::vector<std::string>& comments = {}) {
  std::string out;
  for (const std::string& c : comments) out += "# " + c + "\n";
  char buf[64];
  auto row = [&](const char* name, const std::optional<double>& v) {
    if (v) {
      std::snprintf(buf, sizeof(buf), "%s: %.4f\n", name, *v);
      out += buf;
    } else {
      out += std::string(name) + ": n/a\n";
    }
  };
  row("Precision - Stem", r.stem.precision);
  row("Recall - Stem", r.stem.recall);
  row("IoU - Stem", r.stem.iou);
  row("Precision - Leaf", r.leaf.precision);
  row("Recall - Leaf", r.leaf.recall);
  row("IoU - Leaf", r.leaf.iou);
  row("Acc", r.accuracy);
  row("MIoU", r.miou);
  return out;
}

} // namespace plantcloud

#endif // PLANTCLOUD_METRICS_EVALUATE_HPP
