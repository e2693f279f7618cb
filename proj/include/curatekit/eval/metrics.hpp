#pragma once

// Detection quality against ground truth: greedy matching, all-point AP,
// and the aggregate annotation report.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "curatekit/fusion/fuse.hpp"
#include "curatekit/fusion/voc.hpp"

namespace curatekit {

struct Matching {
  std::vector<std::pair<std::size_t, std::size_t>> tp;  // (pred, gt)
  std::vector<std::size_t> fp;
  std::vector<std::size_t> fn;
};

namespace detail {

// Score desc, then input position.
inline std::vector<std::size_t> score_order(const std::vector<Proposal>& preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  return order;
}

}  // namespace detail

/// Greedy one-to-one matching within one image. In descending score order each
/// prediction claims the unclaimed same-label GT of highest IoU >= iou_thresh
/// (lowest GT index on ties).
inline Matching match_detections(const std::vector<Proposal>& preds, const std::vector<Proposal>& gts,
                                 double iou_thresh) {
  Matching m;
  std::vector<char> claimed(gts.size(), 0);
  for (auto p : detail::score_order(preds)) {
    std::size_t best = gts.size();
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (claimed[g] || gts[g].label != preds[p].label) continue;
      const double v = iou(preds[p].box, gts[g].box);
      if (v >= iou_thresh && v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best < gts.size()) {
      claimed[best] = 1;
      m.tp.emplace_back(p, best);
    } else {
      m.fp.push_back(p);
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (!claimed[g]) m.fn.push_back(g);
  }
  return m;
}

struct RankedHit {
  double score = 0.0;
  bool tp = false;
};

/// All-point interpolated area under the precision-recall curve. `hits` must
/// already be in ranking order.
inline double average_precision(const std::vector<RankedHit>& hits, std::size_t n_gt) {
  if (n_gt == 0) throw ValidationError("average_precision: class has no ground truth");
  std::vector<double> precision(hits.size());
  std::vector<char> is_tp(hits.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    tp += hits[i].tp ? 1 : 0;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    is_tp[i] = hits[i].tp;
  }
  for (std::size_t i = hits.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (is_tp[i]) ap += precision[i];
  }
  return ap / static_cast<double>(n_gt);
}

struct ImagePair {
  std::string id;
  VocAnnotation gt;
  VocAnnotation pred;
};

/// AP of one class over a corpus: predictions are ranked globally by score
/// (ties by image id, then file order), matching stays per image.
inline double class_average_precision(const std::vector<ImagePair>& images, const std::string& label,
                                      double iou_thresh) {
  struct Entry {
    double score;
    std::size_t image, index;
    bool tp;
  };
  std::vector<Entry> entries;
  std::size_t n_gt = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::vector<Proposal> preds, gts;
    for (const auto& p : images[i].pred.proposals) {
      if (p.label == label) preds.push_back(p);
    }
    for (const auto& g : images[i].gt.proposals) {
      if (g.label == label) gts.push_back(g);
    }
    n_gt += gts.size();
    const auto m = match_detections(preds, gts, iou_thresh);
    std::vector<char> tp(preds.size(), 0);
    for (const auto& [p, g] : m.tp) tp[p] = 1;
    for (std::size_t p = 0; p < preds.size(); ++p) entries.push_back({preds[p].score, i, p, tp[p] != 0});
  }
  std::sort(entries.begin(), entries.end(), [&](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    const auto &ia = images[a.image].id, &ib = images[b.image].id;
    if (ia != ib) return ia < ib;
    return std::pair(a.image, a.index) < std::pair(b.image, b.index);
  });
  std::vector<RankedHit> hits;
  hits.reserve(entries.size());
  for (const auto& e : entries) hits.push_back({e.score, e.tp});
  return average_precision(hits, n_gt);
}

/// Mean of per-class AP over the classes present in ground truth; 0 when the
/// corpus has no ground truth at all.
inline double mean_average_precision(const std::vector<ImagePair>& images, double iou_thresh) {
  std::set<std::string> classes;
  for (const auto& im : images) {
    for (const auto& g : im.gt.proposals) classes.insert(g.label);
  }
  if (classes.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& c : classes) sum += class_average_precision(images, c, iou_thresh);
  return sum / static_cast<double>(classes.size());
}

/// Mean over IoU thresholds 0.50, 0.55, ..., 0.95.
inline double mean_average_precision_coco(const std::vector<ImagePair>& images) {
  double sum = 0.0;
  for (int t = 0; t < 10; ++t) sum += mean_average_precision(images, 0.5 + 0.05 * t);
  return sum / 10.0;
}

struct EvaluationReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double map50 = 0.0;
  double map75 = 0.0;
  double map5095 = 0.0;
  double avg_iou = 0.0;
  double overlap_ratio = 0.0;
  double pct_small = 0.0;
  double pct_medium = 0.0;
  double pct_large = 0.0;
  double imbalance_ratio = 0.0;
  double avg_gt_per_img = 0.0;
  double avg_pred_per_img = 0.0;
  double avg_correct_per_img = 0.0;
  double coverage_gt_pct = 0.0;
  std::size_t discovered_new_classes = 0;

  // Raw counts at IoU 0.5.
  std::size_t images = 0;
  std::size_t true_positives = 0;
  std::size_t predictions = 0;
  std::size_t ground_truth = 0;
};

struct EvalConfig {
  // Label vocabulary of the predictor. Empty: the set of predicted labels.
  std::vector<std::string> vocabulary;
  double iou_thresh = 0.5;
};

/// Aggregate report over paired images. Size buckets and the imbalance ratio
/// describe the predicted boxes; coverage and discovered classes compare the
/// prediction vocabulary with the GT taxonomy.
inline EvaluationReport evaluate(const std::vector<ImagePair>& images, const EvalConfig& cfg = {}) {
  EvaluationReport r;
  r.images = images.size();
  double iou_sum = 0.0;
  std::size_t overlapped = 0;
  std::array<std::size_t, 3> sizes{};
  std::map<std::string, std::size_t> pred_freq;
  std::set<std::string> taxonomy;
  std::set<std::string> vocabulary(cfg.vocabulary.begin(), cfg.vocabulary.end());

  for (const auto& im : images) {
    const auto& preds = im.pred.proposals;
    const auto& gts = im.gt.proposals;
    r.predictions += preds.size();
    r.ground_truth += gts.size();
    const auto m = match_detections(preds, gts, cfg.iou_thresh);
    r.true_positives += m.tp.size();
    for (const auto& [p, g] : m.tp) iou_sum += iou(preds[p].box, gts[g].box);
    for (const auto& g : gts) {
      taxonomy.insert(g.label);
      for (const auto& p : preds) {
        if (iou(p.box, g.box) > 0.0) {
          ++overlapped;
          break;
        }
      }
    }
    const ImageMeta& meta = im.pred.meta.width > 0 && im.pred.meta.height > 0 ? im.pred.meta : im.gt.meta;
    const double image_area = static_cast<double>(meta.width) * static_cast<double>(meta.height);
    if (!preds.empty() && image_area <= 0.0) throw ValidationError(im.id + ": image size unknown");
    for (const auto& p : preds) {
      const double frac = p.box.area() / image_area;
      ++sizes[frac < 0.01 ? 0 : frac <= 0.05 ? 1 : 2];
      ++pred_freq[p.label];
      if (cfg.vocabulary.empty()) vocabulary.insert(p.label);
    }
  }

  const auto n = [](std::size_t v) { return static_cast<double>(v); };
  r.precision = r.predictions ? n(r.true_positives) / n(r.predictions) : 0.0;
  r.recall = r.ground_truth ? n(r.true_positives) / n(r.ground_truth) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  r.map50 = mean_average_precision(images, 0.5);
  r.map75 = mean_average_precision(images, 0.75);
  r.map5095 = mean_average_precision_coco(images);
  r.avg_iou = r.predictions ? iou_sum / n(r.predictions) : 0.0;
  r.overlap_ratio = r.ground_truth ? n(overlapped) / n(r.ground_truth) : 0.0;
  if (r.predictions) {
    r.pct_small = 100.0 * n(sizes[0]) / n(r.predictions);
    r.pct_medium = 100.0 * n(sizes[1]) / n(r.predictions);
    r.pct_large = 100.0 * n(sizes[2]) / n(r.predictions);
  }
  if (!pred_freq.empty()) {
    const auto [lo, hi] = std::minmax_element(pred_freq.begin(), pred_freq.end(),
                                              [](const auto& a, const auto& b) { return a.second < b.second; });
    r.imbalance_ratio = n(hi->second) / n(lo->second);
  }
  if (r.images) {
    r.avg_gt_per_img = n(r.ground_truth) / n(r.images);
    r.avg_pred_per_img = n(r.predictions) / n(r.images);
    r.avg_correct_per_img = n(r.true_positives) / n(r.images);
  }
  std::size_t covered = 0;
  for (const auto& im : images) {
    for (const auto& g : im.gt.proposals) covered += vocabulary.contains(g.label) ? 1 : 0;
  }
  r.coverage_gt_pct = r.ground_truth ? 100.0 * n(covered) / n(r.ground_truth) : 0.0;
  for (const auto& v : vocabulary) r.discovered_new_classes += taxonomy.contains(v) ? 0 : 1;
  return r;
}

/// Pairs every prediction file with its ground truth. GT images without a
/// prediction file count as empty predictions.
inline std::vector<ImagePair> load_image_pairs(const std::filesystem::path& pred_dir,
                                               const std::filesystem::path& gt_dir) {
  const auto pred_ids = list_annotation_ids(pred_dir);
  const auto gt_ids = list_annotation_ids(gt_dir);
  const std::set<std::string> gt_set(gt_ids.begin(), gt_ids.end());
  for (const auto& id : pred_ids) {
    if (!gt_set.contains(id)) throw ValidationError("no ground truth for predicted image '" + id + "'");
  }
  const std::set<std::string> pred_set(pred_ids.begin(), pred_ids.end());
  std::vector<ImagePair> out;
  out.reserve(gt_ids.size());
  for (const auto& id : gt_ids) {
    ImagePair im{id, parse_voc(gt_dir / (id + ".xml"), "gt"), {}};
    if (pred_set.contains(id)) {
      im.pred = parse_voc(pred_dir / (id + ".xml"), "pred");
    } else {
      im.pred.meta = im.gt.meta;
    }
    out.push_back(std::move(im));
  }
  return out;
}

inline EvaluationReport evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                         const EvalConfig& cfg = {}) {
  return evaluate(load_image_pairs(pred_dir, gt_dir), cfg);
}

inline constexpr const char* kReportHeader =
    "Method,Precision,Recall,F1,mAP@0.5,mAP@0.75,mAP@.5:.95,Avg IoU,Overlap Ratio,Sm% (<1%),Med% (1-5%),"
    "Lg% (>5%),Imbalance Ratio,Avg GT Obj/Img,Avg Pred Obj/Img,Avg Correct Obj/Img,Coverage GT %,"
    "Discovered New Classes";

inline std::string report_csv_row(const std::string& method, const EvaluationReport& r) {
  std::string row = method;
  for (double v : {r.precision, r.recall, r.f1, r.map50, r.map75, r.map5095, r.avg_iou, r.overlap_ratio,
                   r.pct_small, r.pct_medium, r.pct_large, r.imbalance_ratio, r.avg_gt_per_img, r.avg_pred_per_img,
                   r.avg_correct_per_img, r.coverage_gt_pct}) {
    row += ',' + detail::format_number(v);
  }
  row += ',' + std::to_string(r.discovered_new_classes);
  return row;
}

inline void write_report_csv(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, EvaluationReport>>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kReportHeader << '\n';
  for (const auto& [method, r] : rows) out << report_csv_row(method, r) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace curatekit
