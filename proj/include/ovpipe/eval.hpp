#pragma once
// Detection evaluation: COCO-style greedy IoU matching and 101-point
// interpolated AP, in two variants. The standard variant caps detections
// per image across classes, which couples class scores; the fixed
// variant instead takes the top predictions per class over the whole
// evaluation set, so per-class results are independent of other classes.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ovpipe/core.hpp"

namespace ovpipe {

enum class FreqBucket { rare, common, frequent };

inline const char* to_string(FreqBucket b) {
  switch (b) {
    case FreqBucket::rare: return "rare";
    case FreqBucket::common: return "common";
    default: return "frequent";
  }
}

inline FreqBucket bucket_from_string(std::string_view s) {
  if (s == "rare") return FreqBucket::rare;
  if (s == "common") return FreqBucket::common;
  if (s == "frequent") return FreqBucket::frequent;
  throw std::invalid_argument("unknown frequency bucket: " + std::string(s));
}

struct GtBox {
  std::string image_id;
  std::string cls;
  Box box;
};

struct Prediction {
  std::string image_id;
  std::string cls;
  Box box;
  double score = 0.0;
};

inline std::vector<double> default_iou_thresholds() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(0.5 + 0.05 * i);
  return out;
}

struct EvalTask {
  std::vector<GtBox> ground_truth;
  std::vector<Prediction> predictions;
  // Bucket assignments are input metadata; classes may be unassigned, in
  // which case they count toward ap_all only.
  std::map<std::string, FreqBucket> class_buckets;
  std::vector<double> iou_thresholds = default_iou_thresholds();

  void validate() const {
    if (iou_thresholds.empty()) {
      throw std::invalid_argument("eval: no IoU thresholds");
    }
    std::set<std::string> catalog;
    for (const auto& g : ground_truth) {
      if (!g.box.valid()) throw std::invalid_argument("eval: invalid GT box");
      catalog.insert(g.cls);
    }
    for (const auto& [cls, bucket] : class_buckets) {
      (void)bucket;
      catalog.insert(cls);
    }
    for (const auto& p : predictions) {
      if (!p.box.valid()) {
        throw std::invalid_argument("eval: invalid prediction box");
      }
      if (!(p.score >= 0.0 && p.score <= 1.0)) {
        throw std::invalid_argument("eval: prediction score outside [0,1]");
      }
      if (!catalog.count(p.cls)) {
        throw std::invalid_argument("eval: prediction class not in catalog: " +
                                    p.cls);
      }
    }
  }
};

// TP/FP labels for one class at one IoU threshold, in descending score
// order, plus the recall denominator.
struct ClassCurve {
  std::vector<std::uint8_t> tp;  // aligned with score-sorted predictions
  std::size_t gt_count = 0;
};

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

namespace eval_detail {

// Indices of `preds` sorted by descending score; equal scores keep their
// input order.
inline std::vector<std::size_t> score_order(const std::vector<Prediction>& preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].score > preds[b].score;
  });
  return order;
}

// Greedy matching for one class at one threshold. Predictions are walked
// in descending score order; each is matched to the unmatched GT of the
// same image with the highest IoU, provided that IoU reaches the
// threshold. IoU ties go to the lower GT index.
inline ClassCurve match_class(const std::vector<Prediction>& preds,
                              const std::vector<std::size_t>& order,
                              const std::map<std::string, std::vector<Box>>& gt_by_image,
                              std::size_t gt_total, double iou_thr) {
  ClassCurve curve;
  curve.gt_count = gt_total;
  curve.tp.assign(preds.size(), 0);
  std::map<std::string, std::vector<std::uint8_t>> matched;
  for (const auto& [img, boxes] : gt_by_image) {
    matched[img].assign(boxes.size(), 0);
  }
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto& p = preds[order[rank]];
    auto it = gt_by_image.find(p.image_id);
    if (it == gt_by_image.end()) continue;
    auto& used = matched[p.image_id];
    double best_iou = 0.0;
    std::size_t best = it->second.size();
    for (std::size_t g = 0; g < it->second.size(); ++g) {
      if (used[g]) continue;
      const double v = iou(p.box, it->second[g]);
      if (v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best != it->second.size() && best_iou >= iou_thr) {
      used[best] = 1;
      curve.tp[rank] = 1;
    }
  }
  return curve;
}

}  // namespace eval_detail

// Matching curves for one class, one per IoU threshold, over the task's
// full prediction set.
inline std::vector<ClassCurve> match_and_score(const EvalTask& task,
                                               const std::string& cls) {
  std::vector<Prediction> preds;
  for (const auto& p : task.predictions) {
    if (p.cls == cls) preds.push_back(p);
  }
  std::map<std::string, std::vector<Box>> gt_by_image;
  std::size_t gt_total = 0;
  for (const auto& g : task.ground_truth) {
    if (g.cls == cls) {
      gt_by_image[g.image_id].push_back(g.box);
      ++gt_total;
    }
  }
  const auto order = eval_detail::score_order(preds);
  std::vector<ClassCurve> curves;
  curves.reserve(task.iou_thresholds.size());
  for (double thr : task.iou_thresholds) {
    curves.push_back(eval_detail::match_class(preds, order, gt_by_image, gt_total, thr));
  }
  return curves;
}

// Raw precision/recall points along the score-sorted prediction list.
inline std::vector<PrPoint> pr_points(const ClassCurve& curve) {
  std::vector<PrPoint> pts;
  pts.reserve(curve.tp.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < curve.tp.size(); ++i) {
    tp += curve.tp[i];
    pts.push_back(PrPoint{
        curve.gt_count ? static_cast<double>(tp) / static_cast<double>(curve.gt_count) : 0.0,
        static_cast<double>(tp) / static_cast<double>(i + 1)});
  }
  return pts;
}

// 101-point interpolated AP: mean over recall thresholds {0, 0.01, ...,
// 1.00} of the precision envelope at the first point whose recall
// reaches the threshold.
inline double average_precision(const ClassCurve& curve) {
  if (curve.gt_count == 0) {
    throw std::invalid_argument("average_precision: class has no ground truth");
  }
  const auto pts = pr_points(curve);
  std::vector<double> envelope(pts.size());
  double running = 0.0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    running = std::max(running, pts[i].precision);
    envelope[i] = running;
  }
  double sum = 0.0;
  std::size_t idx = 0;
  for (int j = 0; j <= 100; ++j) {
    const double r = static_cast<double>(j) / 100.0;
    while (idx < pts.size() && pts[idx].recall < r) ++idx;
    if (idx < pts.size()) sum += envelope[idx];
  }
  return sum / 101.0;
}

enum class ApVariant { old_style, fixed };

struct APResult {
  std::map<std::string, double> per_class_ap;  // classes with >= 1 GT box
  std::optional<double> ap_all;
  std::optional<double> ap_rare;
  std::optional<double> ap_common;
  std::optional<double> ap_frequent;
  ApVariant variant = ApVariant::fixed;
};

namespace eval_detail {

inline APResult evaluate(const EvalTask& task, ApVariant variant) {
  std::set<std::string> gt_classes;
  for (const auto& g : task.ground_truth) gt_classes.insert(g.cls);

  APResult result;
  result.variant = variant;
  for (const auto& cls : gt_classes) {
    const auto curves = match_and_score(task, cls);
    double sum = 0.0;
    for (const auto& c : curves) sum += average_precision(c);
    result.per_class_ap[cls] = sum / static_cast<double>(curves.size());
  }

  auto mean_over = [&](auto include) -> std::optional<double> {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [cls, ap] : result.per_class_ap) {
      if (include(cls)) {
        sum += ap;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  result.ap_all = mean_over([](const std::string&) { return true; });
  auto in_bucket = [&](FreqBucket b) {
    return [&, b](const std::string& cls) {
      auto it = task.class_buckets.find(cls);
      return it != task.class_buckets.end() && it->second == b;
    };
  };
  result.ap_rare = mean_over(in_bucket(FreqBucket::rare));
  result.ap_common = mean_over(in_bucket(FreqBucket::common));
  result.ap_frequent = mean_over(in_bucket(FreqBucket::frequent));
  return result;
}

}  // namespace eval_detail

// Standard protocol: cap detections per image across all classes by
// score, then evaluate per class. The cap couples classes: rescaling one
// class's scores can change which detections of other classes survive.
inline APResult ap_old(const EvalTask& task, int per_image_cap = 300) {
  if (per_image_cap <= 0) {
    throw std::invalid_argument("ap_old: per_image_cap must be positive");
  }
  task.validate();
  std::map<std::string, std::vector<std::size_t>> by_image;
  for (std::size_t i = 0; i < task.predictions.size(); ++i) {
    by_image[task.predictions[i].image_id].push_back(i);
  }
  EvalTask capped;
  capped.ground_truth = task.ground_truth;
  capped.class_buckets = task.class_buckets;
  capped.iou_thresholds = task.iou_thresholds;
  std::vector<std::size_t> keep;
  for (auto& [img, idxs] : by_image) {
    (void)img;
    std::stable_sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
      return task.predictions[a].score > task.predictions[b].score;
    });
    for (std::size_t i = 0; i < idxs.size() && i < static_cast<std::size_t>(per_image_cap); ++i) {
      keep.push_back(idxs[i]);
    }
  }
  // Preserve original relative order of the survivors.
  std::sort(keep.begin(), keep.end());
  for (std::size_t i : keep) capped.predictions.push_back(task.predictions[i]);
  return eval_detail::evaluate(capped, ApVariant::old_style);
}

// Fixed protocol: per class independently, keep the top predictions by
// score across the entire evaluation set (10'000 by default), with no
// per-image cross-class cap.
inline APResult ap_fixed(const EvalTask& task, int per_class_cap = 10000) {
  if (per_class_cap <= 0) {
    throw std::invalid_argument("ap_fixed: per_class_cap must be positive");
  }
  task.validate();
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < task.predictions.size(); ++i) {
    by_class[task.predictions[i].cls].push_back(i);
  }
  EvalTask capped;
  capped.ground_truth = task.ground_truth;
  capped.class_buckets = task.class_buckets;
  capped.iou_thresholds = task.iou_thresholds;
  std::vector<std::size_t> keep;
  for (auto& [cls, idxs] : by_class) {
    (void)cls;
    std::stable_sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
      return task.predictions[a].score > task.predictions[b].score;
    });
    for (std::size_t i = 0; i < idxs.size() && i < static_cast<std::size_t>(per_class_cap); ++i) {
      keep.push_back(idxs[i]);
    }
  }
  std::sort(keep.begin(), keep.end());
  for (std::size_t i : keep) capped.predictions.push_back(task.predictions[i]);
  return eval_detail::evaluate(capped, ApVariant::fixed);
}

// Mean and median of per-dataset mAPs. The median of an even count is
// the midpoint of the two central values.
inline std::pair<double, double> aggregate_datasets(std::vector<double> maps) {
  if (maps.empty()) {
    throw std::invalid_argument("aggregate_datasets: empty input");
  }
  const double mean =
      std::accumulate(maps.begin(), maps.end(), 0.0) / static_cast<double>(maps.size());
  std::sort(maps.begin(), maps.end());
  const std::size_t n = maps.size();
  const double median =
      (n % 2 == 1) ? maps[n / 2] : (maps[n / 2 - 1] + maps[n / 2]) / 2.0;
  return {mean, median};
}

}  // namespace ovpipe
