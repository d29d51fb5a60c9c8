#pragma once

#include <vector>

#include "thermdet/detection.hpp"

namespace thermdet {

enum class FusionMethod { kNms, kSoftNms, kWbf };
enum class SoftDecay { kLinear, kGaussian };

struct FusionConfig {
  FusionMethod method = FusionMethod::kSoftNms;
  float iou_threshold = 0.5f;       // in (0,1)
  float soft_sigma = 0.5f;          // > 0
  float soft_score_floor = 0.001f;  // in [0,1)
  SoftDecay decay = SoftDecay::kGaussian;

  void validate() const;
};

// Intersection over union of two boxes; 0 for disjoint or zero-area boxes.
float iou(float ax1, float ay1, float ax2, float ay2,
          float bx1, float by1, float bx2, float by2);
float iou(const Detection& a, const Detection& b);

// All three run class-wise per image_id; ties in score are broken by earlier
// input index, so results are permutation-stable up to documented tie cases.
std::vector<Detection> nms(const std::vector<Detection>& dets, const FusionConfig& cfg);
std::vector<Detection> soft_nms(const std::vector<Detection>& dets, const FusionConfig& cfg);
std::vector<Detection> wbf(const std::vector<Detection>& dets, const FusionConfig& cfg);

std::vector<Detection> fuse(const std::vector<Detection>& dets, const FusionConfig& cfg);

}  // namespace thermdet
