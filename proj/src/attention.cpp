#include "thermdet/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace thermdet {

namespace {
constexpr float kMaskNegative = -1e30f;
}

void AttentionSpec::validate() const {
  if (d_model <= 0 || num_heads <= 0)
    throw std::invalid_argument("AttentionSpec: d_model and num_heads must be positive");
  if (d_model % num_heads != 0)
    throw std::invalid_argument("AttentionSpec: d_model must be divisible by num_heads");
}

Tensor attention(const Tensor& tokens, const MultiHeadWeights& w,
                 const AttentionSpec& spec, const Tensor& mask) {
  spec.validate();
  if (tokens.rank() != 2 || tokens.dim(1) != spec.d_model)
    throw std::invalid_argument("attention: tokens must be (t, d_model)");
  const int t = tokens.dim(0), d = spec.d_model, dk = spec.d_k();
  const float scale = 1.0f / std::sqrt(static_cast<float>(dk));
  const bool masked = mask.size() != 0;
  if (masked && (mask.rank() != 2 || mask.dim(0) != t || mask.dim(1) != t))
    throw std::invalid_argument("attention: mask must be (t, t)");

  Tensor q = linear(tokens, w.wq, {});
  Tensor k = linear(tokens, w.wk, {});
  Tensor v = linear(tokens, w.wv, {});

  Tensor out({t, d});
  std::vector<float> logits(static_cast<size_t>(t));
  for (int h = 0; h < spec.num_heads; ++h) {
    const int col0 = h * dk;
    for (int i = 0; i < t; ++i) {
      float mx = -std::numeric_limits<float>::infinity();
      for (int j = 0; j < t; ++j) {
        float s = 0.0f;
        for (int e = 0; e < dk; ++e) s += q.at(i, col0 + e) * k.at(j, col0 + e);
        s *= scale;
        if (masked) s += mask.at(i, j);
        logits[static_cast<size_t>(j)] = s;
        mx = std::max(mx, s);
      }
      float sum = 0.0f;
      for (int j = 0; j < t; ++j) {
        logits[static_cast<size_t>(j)] = std::exp(logits[static_cast<size_t>(j)] - mx);
        sum += logits[static_cast<size_t>(j)];
      }
      for (int e = 0; e < dk; ++e) {
        float acc = 0.0f;
        for (int j = 0; j < t; ++j)
          acc += logits[static_cast<size_t>(j)] * v.at(j, col0 + e);
        out.at(i, col0 + e) = acc / sum;
      }
    }
  }
  if (w.wo.size() != 0) out = linear(out, w.wo, {});
  return out;
}

namespace {

// (c,h,w) -> (h*w, c) tokens in raster order
Tensor to_tokens(const Tensor& x) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor tokens({h * w, c});
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      for (int ch = 0; ch < c; ++ch)
        tokens.at(y * w + xx, ch) = x.at(ch, y, xx);
  return tokens;
}

Tensor from_tokens(const Tensor& tokens, int h, int w) {
  const int c = tokens.dim(1);
  Tensor x({c, h, w});
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      for (int ch = 0; ch < c; ++ch)
        x.at(ch, y, xx) = tokens.at(y * w + xx, ch);
  return x;
}

}  // namespace

FeatureMap transformer_encoder(const FeatureMap& x, const FeatureMap& aspp_out,
                               const AttentionSpec& spec,
                               const TransformerEncoderWeights& w) {
  spec.validate();
  if (x.height() != aspp_out.height() || x.width() != aspp_out.width())
    throw std::invalid_argument("transformer_encoder: spatial dims of x and aspp_out differ");
  const int h = x.height(), wd = x.width();
  const int cx = x.channels(), ca = aspp_out.channels();

  Tensor fused({cx + ca, h, wd});
  for (int64_t i = 0; i < x.map.size(); ++i) fused[i] = x.map[i];
  for (int64_t i = 0; i < aspp_out.map.size(); ++i) fused[x.map.size() + i] = aspp_out.map[i];
  Tensor proj = conv2d(fused, w.fuse_filters, w.fuse_bias, 1, 0);

  Tensor z = to_tokens(proj);
  Tensor attn = attention(z, w.attn, spec);
  for (int64_t i = 0; i < z.size(); ++i) z[i] += attn[i];
  Tensor ff = linear(gelu(linear(z, w.ff_w1, w.ff_b1)), w.ff_w2, w.ff_b2);
  for (int64_t i = 0; i < z.size(); ++i) z[i] += ff[i];

  return {from_tokens(z, h, wd), x.stride};
}

Tensor WindowMask::additive(int window) const {
  Tensor m({cells, cells});
  for (int i = 0; i < cells; ++i)
    for (int j = 0; j < cells; ++j)
      m.at(i, j) = valid(window, j) ? 0.0f : kMaskNegative;
  return m;
}

WindowPartition window_partition(const Tensor& x, int mh, int mw) {
  if (x.rank() != 3) throw std::invalid_argument("window_partition: input must be (c,h,w)");
  if (mh <= 0 || mw <= 0) throw std::invalid_argument("window_partition: bad window size");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int rows = (h + mh - 1) / mh;
  const int cols = (w + mw - 1) / mw;
  const int n = rows * cols;

  WindowPartition part;
  part.grid = {mh, mw, n, rows * mh - h, cols * mw - w, c, h, w, cols};
  part.windows = Tensor({n, mh, mw, c});
  part.mask.n_windows = n;
  part.mask.cells = mh * mw;
  part.mask.cell_valid.assign(static_cast<size_t>(n) * mh * mw, 0);

  float* wd = part.windows.data();
  for (int wi = 0; wi < n; ++wi) {
    const int wy = (wi / cols) * mh;
    const int wx = (wi % cols) * mw;
    for (int y = 0; y < mh; ++y)
      for (int xx = 0; xx < mw; ++xx) {
        const int sy = wy + y, sx = wx + xx;
        const bool inside = sy < h && sx < w;
        part.mask.cell_valid[static_cast<size_t>(wi) * mh * mw + y * mw + xx] = inside;
        const int64_t base = ((static_cast<int64_t>(wi) * mh + y) * mw + xx) * c;
        for (int ch = 0; ch < c; ++ch)
          wd[base + ch] = inside ? x.at(ch, sy, sx) : 0.0f;
      }
  }
  return part;
}

Tensor window_unpartition(const Tensor& windows, const WindowGrid& grid) {
  if (windows.rank() != 4 || windows.dim(0) != grid.n_windows ||
      windows.dim(1) != grid.window_h || windows.dim(2) != grid.window_w ||
      windows.dim(3) != grid.channels)
    throw std::invalid_argument("window_unpartition: windows inconsistent with grid");
  const int c = grid.channels, h = grid.height, w = grid.width;
  const int mh = grid.window_h, mw = grid.window_w, cols = grid.windows_per_row;
  Tensor x({c, h, w});
  const float* wd = windows.data();
  for (int wi = 0; wi < grid.n_windows; ++wi) {
    const int wy = (wi / cols) * mh;
    const int wx = (wi % cols) * mw;
    for (int y = 0; y < mh; ++y)
      for (int xx = 0; xx < mw; ++xx) {
        const int sy = wy + y, sx = wx + xx;
        if (sy >= h || sx >= w) continue;
        const int64_t base = ((static_cast<int64_t>(wi) * mh + y) * mw + xx) * c;
        for (int ch = 0; ch < c; ++ch) x.at(ch, sy, sx) = wd[base + ch];
      }
  }
  return x;
}

namespace {

Tensor apply_norm(const Tensor& tokens, NormKind kind, const Tensor& gamma,
                  const Tensor& beta, const Tensor& lin_w, const Tensor& lin_b) {
  if (kind == NormKind::kLayerNorm) return layer_norm(tokens, gamma, beta);
  return linear(tokens, lin_w, lin_b);
}

}  // namespace

FeatureMap window_attention_block(const FeatureMap& x,
                                  const WindowAttentionWeights& w,
                                  const AttentionSpec& spec, int mh, int mw) {
  spec.validate();
  if (x.channels() != spec.d_model)
    throw std::invalid_argument("window_attention_block: channels != d_model");
  WindowPartition part = window_partition(x.map, mh, mw);
  const int cells = mh * mw, c = spec.d_model;
  float* wd = part.windows.data();

  for (int wi = 0; wi < part.grid.n_windows; ++wi) {
    Tensor z({cells, c});
    const int64_t base = static_cast<int64_t>(wi) * cells * c;
    for (int64_t i = 0; i < z.size(); ++i) z[i] = wd[base + i];

    Tensor mask = part.mask.additive(wi);
    Tensor zhat = attention(
        apply_norm(z, spec.norm, w.norm1_gamma, w.norm1_beta, w.norm1_w, w.norm1_b),
        w.attn, spec, mask);
    for (int64_t i = 0; i < z.size(); ++i) zhat[i] += z[i];

    Tensor normed = apply_norm(zhat, spec.norm, w.norm2_gamma, w.norm2_beta,
                               w.norm2_w, w.norm2_b);
    Tensor mlp = linear(gelu(linear(normed, w.mlp_w1, w.mlp_b1)), w.mlp_w2, w.mlp_b2);
    for (int64_t i = 0; i < z.size(); ++i) wd[base + i] = mlp[i] + zhat[i];
  }
  return {window_unpartition(part.windows, part.grid), x.stride};
}

}  // namespace thermdet
