#pragma once

#include <array>
#include <vector>

#include "thermdet/attention.hpp"
#include "thermdet/feature_map.hpp"
#include "thermdet/tensor.hpp"

namespace thermdet {

// Four levels at strides 4, 8, 16, 32; spatial dims halve level-to-level.
struct PyramidLevels {
  std::vector<FeatureMap> levels;
  void validate() const;
};

// Nonnegative learnable fusion scalars, stored pre-activation and exposed
// post-ReLU so w_i >= 0 by construction.
struct FusionWeights {
  std::vector<float> raw;
  float epsilon = 1e-4f;

  float value(size_t i) const { return raw[i] > 0.0f ? raw[i] : 0.0f; }
};

enum class ResizeFactor { kDouble, kHalf };

// Nearest-neighbor 2x upsample / 2x2 max-pool downsample. Downsampling
// requires even spatial dims.
FeatureMap resize_nearest(const FeatureMap& x, ResizeFactor factor);

// out = conv3x3( sum_i (w_i / (sum_j w_j + eps)) * input_i )
FeatureMap weighted_fuse(const std::vector<FeatureMap>& inputs,
                         const FusionWeights& weights,
                         const Tensor& conv_filters, const Tensor& conv_bias);

// One fusion node: its scalar weights plus the 3x3 conv applied after fusion.
struct FusionNode {
  FusionWeights weights;
  Tensor conv_filters, conv_bias;
};

// Dataflow (levels indexed 0..3 at strides 4..32, see docs/bifpn.md):
//   top-down:  T2 = fuse(P2, up(P3)) ; T1 = fuse(P1, up(T2)) ; T0 = fuse(P0, up(T1))
//   bottom-up: O0 = T0
//              O1 = fuse(P1, T1, down(O0))
//              O2 = fuse(P2, T2, down(O1))
//              O3 = fuse(P3, down(O2))
// node order in the array: td2, td1, td0, bu1, bu2, bu3
struct BifpnWeights {
  std::array<FusionNode, 6> nodes;
};

PyramidLevels bifpn_pass(const PyramidLevels& levels, const BifpnWeights& w);

// window_attention_block per level; shapes preserved.
PyramidLevels neck_refine(const PyramidLevels& levels,
                          const std::vector<WindowAttentionWeights>& wa,
                          const AttentionSpec& spec, int mh, int mw);

}  // namespace thermdet
