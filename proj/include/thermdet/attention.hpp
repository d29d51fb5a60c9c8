#pragma once

#include <cstdint>
#include <vector>

#include "thermdet/feature_map.hpp"
#include "thermdet/tensor.hpp"

namespace thermdet {

// Reading of "LN" in the window-attention residual pair. The default is
// layer normalization; the learned-linear-map reading is kept available
// behind this switch.
enum class NormKind { kLayerNorm, kLinear };

struct AttentionSpec {
  int d_model = 0;
  int num_heads = 1;
  int mlp_hidden = 0;
  NormKind norm = NormKind::kLayerNorm;

  int d_k() const { return d_model / num_heads; }
  void validate() const;
};

struct MultiHeadWeights {
  Tensor wq, wk, wv;  // each (d_model, d_model)
  Tensor wo;          // (d_model, d_model); empty means no output projection
};

// Multi-head scaled dot-product attention over tokens (t, d_model).
// mask, when non-empty, is an additive (t, t) matrix applied to the logits.
Tensor attention(const Tensor& tokens, const MultiHeadWeights& w,
                 const AttentionSpec& spec, const Tensor& mask = {});

struct TransformerEncoderWeights {
  Tensor fuse_filters, fuse_bias;  // 1x1 conv (d_model, cx+ca, 1, 1)
  MultiHeadWeights attn;
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;  // linear -> GELU -> linear
};

// Fuses x with the ASPP output (channel concat + 1x1 projection), flattens to
// h*w tokens, applies attention and a GELU feed-forward with residuals, and
// reshapes back to (d_model, h, w).
FeatureMap transformer_encoder(const FeatureMap& x, const FeatureMap& aspp_out,
                               const AttentionSpec& spec,
                               const TransformerEncoderWeights& w);

struct WindowGrid {
  int window_h = 0, window_w = 0;
  int n_windows = 0;
  int pad_h = 0, pad_w = 0;
  int channels = 0, height = 0, width = 0;  // source shape
  int windows_per_row = 0;
};

struct WindowMask {
  // cell_valid[window * (mh*mw) + cell] is false for zero-padded cells
  std::vector<uint8_t> cell_valid;
  int n_windows = 0;
  int cells = 0;  // mh*mw

  bool valid(int window, int cell) const {
    return cell_valid[static_cast<size_t>(window) * cells + cell] != 0;
  }
  // additive (cells, cells) matrix for one window: 0 for valid keys, a large
  // negative value for padded ones
  Tensor additive(int window) const;
};

struct WindowPartition {
  Tensor windows;  // (n, mh, mw, c)
  WindowGrid grid;
  WindowMask mask;
};

// Non-overlapping raster-order tiling; the input is zero-padded bottom/right
// to multiples of the window size.
WindowPartition window_partition(const Tensor& x, int mh, int mw);
Tensor window_unpartition(const Tensor& windows, const WindowGrid& grid);

struct WindowAttentionWeights {
  Tensor norm1_gamma, norm1_beta;  // layer-norm reading
  Tensor norm1_w, norm1_b;         // linear reading
  MultiHeadWeights attn;
  Tensor norm2_gamma, norm2_beta;
  Tensor norm2_w, norm2_b;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Per-window pre-norm residual pair:
//   zhat = WA(LN(z)) + z ; out = MLP(LN(zhat)) + zhat
// WA is masked multi-head attention inside each window; MLP is
// linear -> GELU -> linear. Shape is preserved.
FeatureMap window_attention_block(const FeatureMap& x,
                                  const WindowAttentionWeights& w,
                                  const AttentionSpec& spec, int mh, int mw);

}  // namespace thermdet
