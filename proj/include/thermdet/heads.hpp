#pragma once

#include <string>
#include <utility>
#include <vector>

#include "thermdet/detection.hpp"
#include "thermdet/feature_map.hpp"
#include "thermdet/tensor.hpp"

namespace thermdet {

// Per-level anchors in pixels, 3 per level, sorted by area within a level.
struct AnchorTable {
  struct Level {
    int stride = 0;
    std::vector<std::pair<float, float>> anchors;  // (w, h)
  };
  std::vector<Level> levels;

  void validate() const;
  const Level& for_stride(int stride) const;
};

// Text format, one line per level: `stride w h w h w h`
AnchorTable load_anchor_table(const std::string& path);
void save_anchor_table(const AnchorTable& table, const std::string& path);

// Per-anchor (tx, ty, tw, th, objectness, class logits), stacked along the
// channel axis: a * (5 + num_classes) channels.
struct RawPrediction {
  Tensor logits;  // (a*(5+C), h, w)
  int stride = 0;
  int num_anchors = 0;
  int num_classes = 0;
};

// 1x1 convolution to a*(5+C) logit channels, no activation.
RawPrediction head_forward(const FeatureMap& level, const Tensor& filters,
                           const Tensor& bias, int num_anchors, int num_classes);

// Sigmoid decode:
//   center = (2*sigmoid(t_xy) - 0.5 + grid_cell) * stride
//   size   = (2*sigmoid(t_wh))^2 * anchor
//   score  = sigmoid(obj) * sigmoid(best class logit)
// Boxes are clipped to [0, image_w] x [0, image_h]; detections below
// conf_threshold are dropped.
std::vector<Detection> decode(const RawPrediction& raw,
                              const AnchorTable::Level& anchors,
                              int image_w, int image_h, float conf_threshold,
                              const std::string& image_id = "0");

}  // namespace thermdet
