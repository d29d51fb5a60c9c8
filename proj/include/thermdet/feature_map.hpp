#pragma once

#include "thermdet/tensor.hpp"

namespace thermdet {

// A (c,h,w) tensor annotated with its pyramid stride relative to the input image.
struct FeatureMap {
  Tensor map;
  int stride = 1;

  int channels() const { return map.dim(0); }
  int height() const { return map.dim(1); }
  int width() const { return map.dim(2); }
};

}  // namespace thermdet
