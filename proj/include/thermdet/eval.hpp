#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "thermdet/detection.hpp"

namespace thermdet {

struct GroundTruth {
  std::string image_id;
  int class_id = 0;
  float x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// YOLO label file: `class cx cy w h` normalized to [0,1], one object per line.
std::vector<GroundTruth> load_yolo_labels(const std::string& path,
                                          const std::string& image_id,
                                          int image_w, int image_h);
void save_yolo_labels(const std::vector<GroundTruth>& gts, int image_w,
                      int image_h, const std::string& path);

struct MatchResult {
  // one label per detection, in descending-score order: true = TP, false = FP
  std::vector<bool> labels;
  std::vector<float> scores;  // aligned with labels
  int false_negatives = 0;
};

// Greedy matching in descending score; each ground truth is consumed at most
// once; a detection is a TP iff its best unmatched GT has IoU >= threshold.
// Inputs are a single-image, single-class slice.
MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<GroundTruth>& gts,
                             float iou_threshold);

// All-point interpolated AP (area under the precision envelope).
// Returns nullopt when total_gt == 0 and there are no detections
// (class absent: excluded from the mean rather than scored 0).
std::optional<double> average_precision(const std::vector<bool>& labels,
                                        int total_gt);

struct PrPoint {
  double recall = 0, precision = 0, score = 0;
};

struct EvalReport {
  // threshold -> class -> AP (absent classes omitted)
  std::map<float, std::map<int, double>> per_class_ap;
  std::map<float, double> map_at;  // threshold -> mAP
  std::map<float, std::map<int, std::vector<PrPoint>>> pr_curves;
  std::map<float, int> tp, fp, fn;  // totals per threshold
};

EvalReport evaluate(const std::vector<Detection>& dets,
                    const std::vector<GroundTruth>& gts,
                    const std::vector<float>& thresholds = {0.5f, 0.95f});

// dets: detection text-line file; manifest: `image.pgm label.txt` per line
// (paths relative to the manifest's directory).
EvalReport evaluate_files(const std::string& dets_path,
                          const std::string& manifest_path,
                          const std::vector<float>& thresholds = {0.5f, 0.95f});

std::vector<GroundTruth> load_manifest_ground_truth(const std::string& manifest_path);

}  // namespace thermdet
