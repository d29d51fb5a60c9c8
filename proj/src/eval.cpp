#include "thermdet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "thermdet/box_fusion.hpp"
#include "thermdet/data.hpp"

namespace thermdet {

std::vector<GroundTruth> load_yolo_labels(const std::string& path,
                                          const std::string& image_id,
                                          int image_w, int image_h) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open labels: " + path);
  std::vector<GroundTruth> gts;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    int cls;
    float cx, cy, w, h;
    if (!(ss >> cls >> cx >> cy >> w >> h)) {
      std::ostringstream err;
      err << "labels " << path << ": parse error at line " << line_no;
      throw std::runtime_error(err.str());
    }
    GroundTruth gt;
    gt.image_id = image_id;
    gt.class_id = cls;
    gt.x1 = (cx - w / 2) * static_cast<float>(image_w);
    gt.y1 = (cy - h / 2) * static_cast<float>(image_h);
    gt.x2 = (cx + w / 2) * static_cast<float>(image_w);
    gt.y2 = (cy + h / 2) * static_cast<float>(image_h);
    gts.push_back(gt);
  }
  return gts;
}

void save_yolo_labels(const std::vector<GroundTruth>& gts, int image_w,
                      int image_h, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << std::fixed << std::setprecision(6);
  const float fw = static_cast<float>(image_w), fh = static_cast<float>(image_h);
  for (const auto& gt : gts)
    os << gt.class_id << ' ' << (gt.x1 + gt.x2) / 2 / fw << ' '
       << (gt.y1 + gt.y2) / 2 / fh << ' ' << (gt.x2 - gt.x1) / fw << ' '
       << (gt.y2 - gt.y1) / fh << '\n';
}

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<GroundTruth>& gts,
                             float iou_threshold) {
  std::vector<size_t> order(dets.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return dets[a].score > dets[b].score;
  });

  MatchResult result;
  std::vector<bool> gt_used(gts.size(), false);
  for (size_t oi : order) {
    const Detection& d = dets[oi];
    float best_iou = 0.0f;
    int best_gt = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g]) continue;
      const float ov = iou(d.x1, d.y1, d.x2, d.y2, gts[g].x1, gts[g].y1,
                           gts[g].x2, gts[g].y2);
      if (ov > best_iou) {
        best_iou = ov;
        best_gt = static_cast<int>(g);
      }
    }
    const bool tp = best_gt >= 0 && best_iou >= iou_threshold;
    if (tp) gt_used[static_cast<size_t>(best_gt)] = true;
    result.labels.push_back(tp);
    result.scores.push_back(d.score);
  }
  result.false_negatives =
      static_cast<int>(std::count(gt_used.begin(), gt_used.end(), false));
  return result;
}

std::optional<double> average_precision(const std::vector<bool>& labels,
                                        int total_gt) {
  if (total_gt < 0) throw std::invalid_argument("average_precision: total_gt < 0");
  if (total_gt == 0) {
    if (labels.empty()) return std::nullopt;  // class absent everywhere
    return 0.0;                               // only false positives
  }
  if (labels.empty()) return 0.0;

  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (bool label : labels) {
    label ? ++tp : ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / total_gt);
  }
  // precision envelope (monotone non-increasing from the right)
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
    precision[static_cast<size_t>(i)] =
        std::max(precision[static_cast<size_t>(i)], precision[static_cast<size_t>(i) + 1]);

  double ap = 0.0, prev_recall = 0.0;
  for (size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

EvalReport evaluate(const std::vector<Detection>& dets,
                    const std::vector<GroundTruth>& gts,
                    const std::vector<float>& thresholds) {
  std::set<int> classes;
  std::set<std::string> images;
  for (const auto& gt : gts) {
    classes.insert(gt.class_id);
    images.insert(gt.image_id);
  }
  for (const auto& d : dets) {
    classes.insert(d.class_id);  // a class with detections but no GT scores 0
    images.insert(d.image_id);
  }

  EvalReport report;
  for (float thr : thresholds) {
    report.tp[thr] = report.fp[thr] = report.fn[thr] = 0;
    double ap_sum = 0.0;
    int ap_count = 0;
    for (int cls : classes) {
      // per-image matching, then global score-ordered accumulation
      struct Scored {
        float score;
        bool tp;
      };
      std::vector<Scored> scored;
      int total_gt = 0;
      for (const auto& img : images) {
        std::vector<Detection> img_dets;
        std::vector<GroundTruth> img_gts;
        for (const auto& d : dets)
          if (d.image_id == img && d.class_id == cls) img_dets.push_back(d);
        for (const auto& gt : gts)
          if (gt.image_id == img && gt.class_id == cls) img_gts.push_back(gt);
        total_gt += static_cast<int>(img_gts.size());
        MatchResult match = match_detections(img_dets, img_gts, thr);
        for (size_t i = 0; i < match.labels.size(); ++i)
          scored.push_back({match.scores[i], match.labels[i]});
        report.fn[thr] += match.false_negatives;
      }
      std::stable_sort(scored.begin(), scored.end(),
                       [](const Scored& a, const Scored& b) { return a.score > b.score; });
      std::vector<bool> labels;
      labels.reserve(scored.size());
      for (const auto& s : scored) {
        labels.push_back(s.tp);
        s.tp ? ++report.tp[thr] : ++report.fp[thr];
      }
      auto ap = average_precision(labels, total_gt);
      if (ap.has_value()) {
        report.per_class_ap[thr][cls] = *ap;
        ap_sum += *ap;
        ++ap_count;
        // PR samples for the report
        int tp = 0, fp = 0;
        auto& curve = report.pr_curves[thr][cls];
        for (const auto& s : scored) {
          s.tp ? ++tp : ++fp;
          curve.push_back({total_gt ? static_cast<double>(tp) / total_gt : 0.0,
                           static_cast<double>(tp) / (tp + fp), s.score});
        }
      }
    }
    report.map_at[thr] = ap_count ? ap_sum / ap_count : 0.0;
  }
  return report;
}

std::vector<GroundTruth> load_manifest_ground_truth(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error("cannot open manifest: " + manifest_path);
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  std::vector<GroundTruth> gts;
  std::string image_rel, label_rel;
  while (is >> image_rel >> label_rel) {
    const auto image_path = dir / image_rel;
    const auto label_path = dir / label_rel;
    const auto [w, h] = pgm_dims(image_path.string());
    const std::string image_id = std::filesystem::path(image_rel).stem().string();
    auto img_gts = load_yolo_labels(label_path.string(), image_id, w, h);
    gts.insert(gts.end(), img_gts.begin(), img_gts.end());
  }
  return gts;
}

EvalReport evaluate_files(const std::string& dets_path,
                          const std::string& manifest_path,
                          const std::vector<float>& thresholds) {
  return evaluate(read_detections_file(dets_path),
                  load_manifest_ground_truth(manifest_path), thresholds);
}

}  // namespace thermdet
