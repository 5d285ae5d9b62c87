#pragma once
// Test-only brute-force AP oracle, written independently of the library's
// evaluator: per class, walk detections in score order, match each to the
// best remaining ground-truth box by direct pairwise IoU, and compute the
// interpolated AP at each recall point by scanning the full raw curve.
// Quadratic everywhere; only suitable for tiny tasks.

#include <map>
#include <string>
#include <vector>

namespace ap_oracle {

struct OBox {
  double x0, y0, x1, y1;
};

struct OGt {
  std::string image;
  std::string cls;
  OBox box;
};

struct ODet {
  std::string image;
  std::string cls;
  OBox box;
  double score;
};

inline double obox_iou(const OBox& a, const OBox& b) {
  const double ix0 = a.x0 > b.x0 ? a.x0 : b.x0;
  const double iy0 = a.y0 > b.y0 ? a.y0 : b.y0;
  const double ix1 = a.x1 < b.x1 ? a.x1 : b.x1;
  const double iy1 = a.y1 < b.y1 ? a.y1 : b.y1;
  const double iw = ix1 - ix0 > 0 ? ix1 - ix0 : 0;
  const double ih = iy1 - iy0 > 0 ? iy1 - iy0 : 0;
  const double inter = iw * ih;
  const double area_a = (a.x1 - a.x0) * (a.y1 - a.y0);
  const double area_b = (b.x1 - b.x0) * (b.y1 - b.y0);
  const double uni = area_a + area_b - inter;
  return uni > 0 ? inter / uni : 0;
}

// AP for one class at one IoU threshold.
inline double class_ap_at(const std::vector<OGt>& gts, std::vector<ODet> dets,
                          const std::string& cls, double thr) {
  std::vector<OGt> class_gt;
  for (const auto& g : gts) {
    if (g.cls == cls) class_gt.push_back(g);
  }
  if (class_gt.empty()) return -1.0;  // undefined

  std::vector<ODet> class_det;
  for (const auto& d : dets) {
    if (d.cls == cls) class_det.push_back(d);
  }
  // Selection sort by descending score keeps equal scores in input order.
  for (std::size_t i = 0; i < class_det.size(); ++i) {
    std::size_t best = i;
    for (std::size_t j = i + 1; j < class_det.size(); ++j) {
      if (class_det[j].score > class_det[best].score) best = j;
    }
    if (best != i) {
      const ODet tmp = class_det[best];
      for (std::size_t j = best; j > i; --j) class_det[j] = class_det[j - 1];
      class_det[i] = tmp;
    }
  }

  std::vector<bool> gt_used(class_gt.size(), false);
  std::vector<bool> is_tp(class_det.size(), false);
  for (std::size_t d = 0; d < class_det.size(); ++d) {
    double best_iou = 0;
    std::size_t best_g = class_gt.size();
    for (std::size_t g = 0; g < class_gt.size(); ++g) {
      if (gt_used[g] || class_gt[g].image != class_det[d].image) continue;
      const double v = obox_iou(class_det[d].box, class_gt[g].box);
      if (v > best_iou) {
        best_iou = v;
        best_g = g;
      }
    }
    if (best_g != class_gt.size() && best_iou >= thr) {
      gt_used[best_g] = true;
      is_tp[d] = true;
    }
  }

  std::vector<double> recalls, precisions;
  int tp = 0;
  for (std::size_t d = 0; d < class_det.size(); ++d) {
    if (is_tp[d]) ++tp;
    recalls.push_back(static_cast<double>(tp) / static_cast<double>(class_gt.size()));
    precisions.push_back(static_cast<double>(tp) / static_cast<double>(d + 1));
  }

  double total = 0;
  for (int point = 0; point <= 100; ++point) {
    const double r = point / 100.0;
    double best_p = 0;
    for (std::size_t d = 0; d < class_det.size(); ++d) {
      if (recalls[d] >= r && precisions[d] > best_p) best_p = precisions[d];
    }
    total += best_p;
  }
  return total / 101.0;
}

// Fixed-style evaluation: no cross-class interaction; returns per-class
// AP averaged over the IoU thresholds, plus the mean over classes.
inline std::map<std::string, double> per_class_ap(
    const std::vector<OGt>& gts, const std::vector<ODet>& dets,
    const std::vector<double>& thresholds) {
  std::map<std::string, double> out;
  std::map<std::string, int> gt_counts;
  for (const auto& g : gts) gt_counts[g.cls]++;
  for (const auto& [cls, count] : gt_counts) {
    (void)count;
    double sum = 0;
    for (double thr : thresholds) sum += class_ap_at(gts, dets, cls, thr);
    out[cls] = sum / static_cast<double>(thresholds.size());
  }
  return out;
}

inline double mean_ap(const std::vector<OGt>& gts, const std::vector<ODet>& dets,
                      const std::vector<double>& thresholds) {
  const auto per_class = per_class_ap(gts, dets, thresholds);
  double sum = 0;
  for (const auto& [cls, ap] : per_class) {
    (void)cls;
    sum += ap;
  }
  return per_class.empty() ? 0 : sum / static_cast<double>(per_class.size());
}

}  // namespace ap_oracle
