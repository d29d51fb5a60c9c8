#include "thermdet/pyramid.hpp"

#include <algorithm>
#include <stdexcept>

namespace thermdet {

void PyramidLevels::validate() const {
  if (levels.size() != 4)
    throw std::invalid_argument("PyramidLevels: exactly 4 levels required");
  const int strides[4] = {4, 8, 16, 32};
  for (size_t i = 0; i < 4; ++i) {
    if (levels[i].stride != strides[i])
      throw std::invalid_argument("PyramidLevels: strides must be 4,8,16,32");
    if (i > 0 && (levels[i - 1].height() != 2 * levels[i].height() ||
                  levels[i - 1].width() != 2 * levels[i].width()))
      throw std::invalid_argument("PyramidLevels: spatial dims must halve level-to-level");
  }
}

FeatureMap resize_nearest(const FeatureMap& x, ResizeFactor factor) {
  const int c = x.channels(), h = x.height(), w = x.width();
  if (factor == ResizeFactor::kDouble) {
    Tensor out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx)
          out.at(ch, y, xx) = x.map.at(ch, y / 2, xx / 2);
    return {std::move(out), x.stride / 2};
  }
  if (h % 2 != 0 || w % 2 != 0)
    throw std::invalid_argument("resize_nearest: downscale requires even dims");
  Tensor out({c, h / 2, w / 2});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h / 2; ++y)
      for (int xx = 0; xx < w / 2; ++xx)
        out.at(ch, y, xx) =
            std::max(std::max(x.map.at(ch, 2 * y, 2 * xx), x.map.at(ch, 2 * y, 2 * xx + 1)),
                     std::max(x.map.at(ch, 2 * y + 1, 2 * xx), x.map.at(ch, 2 * y + 1, 2 * xx + 1)));
  return {std::move(out), x.stride * 2};
}

FeatureMap weighted_fuse(const std::vector<FeatureMap>& inputs,
                         const FusionWeights& weights,
                         const Tensor& conv_filters, const Tensor& conv_bias) {
  if (inputs.size() < 2)
    throw std::invalid_argument("weighted_fuse: need at least 2 inputs");
  if (weights.raw.size() != inputs.size())
    throw std::invalid_argument("weighted_fuse: one weight per input required");
  for (size_t i = 1; i < inputs.size(); ++i)
    if (!inputs[i].map.same_shape(inputs[0].map))
      throw std::invalid_argument("weighted_fuse: input shape mismatch");

  float denom = weights.epsilon;
  for (size_t i = 0; i < inputs.size(); ++i) denom += weights.value(i);

  Tensor acc(inputs[0].map.shape());
  for (size_t i = 0; i < inputs.size(); ++i) {
    const float coef = weights.value(i) / denom;
    if (coef == 0.0f) continue;
    for (int64_t j = 0; j < acc.size(); ++j) acc[j] += coef * inputs[i].map[j];
  }
  return {conv2d(acc, conv_filters, conv_bias, 1, 1), inputs[0].stride};
}

PyramidLevels bifpn_pass(const PyramidLevels& levels, const BifpnWeights& w) {
  levels.validate();
  const auto& p = levels.levels;

  FeatureMap t2 = weighted_fuse({p[2], resize_nearest(p[3], ResizeFactor::kDouble)},
                                w.nodes[0].weights, w.nodes[0].conv_filters,
                                w.nodes[0].conv_bias);
  FeatureMap t1 = weighted_fuse({p[1], resize_nearest(t2, ResizeFactor::kDouble)},
                                w.nodes[1].weights, w.nodes[1].conv_filters,
                                w.nodes[1].conv_bias);
  FeatureMap t0 = weighted_fuse({p[0], resize_nearest(t1, ResizeFactor::kDouble)},
                                w.nodes[2].weights, w.nodes[2].conv_filters,
                                w.nodes[2].conv_bias);

  FeatureMap o0 = t0;
  FeatureMap o1 = weighted_fuse({p[1], t1, resize_nearest(o0, ResizeFactor::kHalf)},
                                w.nodes[3].weights, w.nodes[3].conv_filters,
                                w.nodes[3].conv_bias);
  FeatureMap o2 = weighted_fuse({p[2], t2, resize_nearest(o1, ResizeFactor::kHalf)},
                                w.nodes[4].weights, w.nodes[4].conv_filters,
                                w.nodes[4].conv_bias);
  FeatureMap o3 = weighted_fuse({p[3], resize_nearest(o2, ResizeFactor::kHalf)},
                                w.nodes[5].weights, w.nodes[5].conv_filters,
                                w.nodes[5].conv_bias);

  PyramidLevels out;
  out.levels = {std::move(o0), std::move(o1), std::move(o2), std::move(o3)};
  out.validate();
  return out;
}

PyramidLevels neck_refine(const PyramidLevels& levels,
                          const std::vector<WindowAttentionWeights>& wa,
                          const AttentionSpec& spec, int mh, int mw) {
  levels.validate();
  if (wa.size() != levels.levels.size())
    throw std::invalid_argument("neck_refine: one weight set per level required");
  PyramidLevels out;
  out.levels.reserve(levels.levels.size());
  for (size_t i = 0; i < levels.levels.size(); ++i)
    out.levels.push_back(window_attention_block(levels.levels[i], wa[i], spec, mh, mw));
  return out;
}

}  // namespace thermdet
