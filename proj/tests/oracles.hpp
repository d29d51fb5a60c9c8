#pragma once

// Independent brute-force reference implementations used to check the library.
// Everything here is computed in double with plain nested loops and must not
// call into the implementation paths it verifies.

#include <algorithm>
#include <cmath>
#include <vector>

#include "thermdet/conv_blocks.hpp"
#include "thermdet/detection.hpp"
#include "thermdet/pyramid.hpp"
#include "thermdet/tensor.hpp"

namespace oracles {

using thermdet::Tensor;

// Cross-correlation, quadruple loop, double accumulation.
// Returns flat (n, oh, ow) values.
inline std::vector<double> conv2d(const Tensor& input, const Tensor& filters,
                                  const Tensor& bias, int stride, int padding,
                                  int dilation = 1) {
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int n = filters.dim(0), kh = filters.dim(2), kw = filters.dim(3);
  const int oh = (h + 2 * padding - dilation * (kh - 1) - 1) / stride + 1;
  const int ow = (w + 2 * padding - dilation * (kw - 1) - 1) / stride + 1;
  std::vector<double> out(static_cast<size_t>(n) * oh * ow, 0.0);
  for (int oc = 0; oc < n; ++oc)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias.size() ? static_cast<double>(bias[oc]) : 0.0;
        for (int ic = 0; ic < c; ++ic)
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              const int iy = oy * stride - padding + ky * dilation;
              const int ix = ox * stride - padding + kx * dilation;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += static_cast<double>(input.at(ic, iy, ix)) *
                     filters[((static_cast<int64_t>(oc) * c + ic) * kh + ky) * kw + kx];
            }
        out[(static_cast<size_t>(oc) * oh + oy) * ow + ox] = acc;
      }
  return out;
}

// Depthwise convolution on a precomputed (c, h, w) map held as doubles.
inline std::vector<double> depthwise(const std::vector<double>& input, int c,
                                     int h, int w, const Tensor& filters,
                                     const Tensor& bias, int padding) {
  const int k = filters.dim(2);
  std::vector<double> out(static_cast<size_t>(c) * h * w, 0.0);
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < h; ++oy)
      for (int ox = 0; ox < w; ++ox) {
        double acc = bias.size() ? static_cast<double>(bias[ch]) : 0.0;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const int iy = oy - padding + ky;
            const int ix = ox - padding + kx;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            acc += input[(static_cast<size_t>(ch) * h + iy) * w + ix] *
                   filters[(static_cast<int64_t>(ch) * k + ky) * k + kx];
          }
        out[(static_cast<size_t>(ch) * h + oy) * w + ox] = acc;
      }
  return out;
}

// Two-stage ghost convolution assembled from the conv and depthwise oracles.
inline std::vector<double> ghost_conv(const Tensor& x,
                                      const thermdet::GhostConvSpec& spec,
                                      const Tensor& primary_filters,
                                      const Tensor& primary_bias,
                                      const Tensor& cheap_filters,
                                      const Tensor& cheap_bias) {
  const int m = spec.primary_out, s = spec.total_out / spec.primary_out;
  std::vector<double> primary =
      oracles::conv2d(x, primary_filters, primary_bias, spec.stride, spec.padding);
  const int oh = (x.dim(1) + 2 * spec.padding - spec.primary_kernel) / spec.stride + 1;
  const int ow = (x.dim(2) + 2 * spec.padding - spec.primary_kernel) / spec.stride + 1;
  std::vector<double> out(static_cast<size_t>(spec.total_out) * oh * ow, 0.0);
  std::copy(primary.begin(), primary.end(), out.begin());
  const int d = spec.cheap_kernel, pad = d / 2;
  for (int p = 0; p < m; ++p)
    for (int j = 0; j < s - 1; ++j) {
      const int fidx = p * (s - 1) + j;
      const int oc = m + fidx;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = cheap_bias.size() ? static_cast<double>(cheap_bias[fidx]) : 0.0;
          for (int ky = 0; ky < d; ++ky)
            for (int kx = 0; kx < d; ++kx) {
              const int iy = oy - pad + ky;
              const int ix = ox - pad + kx;
              if (iy < 0 || iy >= oh || ix < 0 || ix >= ow) continue;
              acc += primary[(static_cast<size_t>(p) * oh + iy) * ow + ix] *
                     cheap_filters[(static_cast<int64_t>(fidx) * d + ky) * d + kx];
            }
          out[(static_cast<size_t>(oc) * oh + oy) * ow + ox] = acc;
        }
    }
  return out;
}

// Dilation-aware ASPP: branches at each rate, concat, 1x1 projection.
inline std::vector<double> aspp(const Tensor& x, const thermdet::AsppSpec& spec,
                                const std::vector<Tensor>& branch_filters,
                                const std::vector<Tensor>& branch_biases,
                                const Tensor& projection,
                                const Tensor& projection_bias) {
  const int h = x.dim(1), w = x.dim(2);
  const int n_rates = static_cast<int>(spec.dilation_rates.size());
  const int cc = n_rates * spec.out_channels;
  std::vector<double> concat(static_cast<size_t>(cc) * h * w, 0.0);
  for (int i = 0; i < n_rates; ++i) {
    const int rate = spec.dilation_rates[static_cast<size_t>(i)];
    auto branch = oracles::conv2d(x, branch_filters[static_cast<size_t>(i)],
                                  branch_biases[static_cast<size_t>(i)], 1, rate, rate);
    std::copy(branch.begin(), branch.end(),
              concat.begin() + static_cast<int64_t>(i) * spec.out_channels * h * w);
  }
  std::vector<double> out(static_cast<size_t>(spec.out_channels) * h * w, 0.0);
  for (int oc = 0; oc < spec.out_channels; ++oc)
    for (int p = 0; p < h * w; ++p) {
      double acc = projection_bias.size() ? static_cast<double>(projection_bias[oc]) : 0.0;
      for (int ic = 0; ic < cc; ++ic)
        acc += concat[static_cast<size_t>(ic) * h * w + p] *
               projection[static_cast<int64_t>(oc) * cc + ic];
      out[static_cast<size_t>(oc) * h * w + p] = acc;
    }
  return out;
}

// Direct Eq.-style multi-head attention: per-head softmax(QK^T/sqrt(dk)) V,
// optional additive mask (t x t) and output projection.
inline std::vector<double> attention(const std::vector<double>& tokens, int t,
                                     int d_model, int num_heads,
                                     const Tensor& wq, const Tensor& wk,
                                     const Tensor& wv, const Tensor& wo,
                                     const std::vector<double>* mask = nullptr) {
  const int dk = d_model / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  auto project = [&](const Tensor& w) {
    std::vector<double> out(static_cast<size_t>(t) * d_model, 0.0);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < d_model; ++j) {
        double acc = 0.0;
        for (int k = 0; k < d_model; ++k)
          acc += tokens[static_cast<size_t>(i) * d_model + k] *
                 w[static_cast<int64_t>(k) * d_model + j];
        out[static_cast<size_t>(i) * d_model + j] = acc;
      }
    return out;
  };
  auto q = project(wq), k = project(wk), v = project(wv);
  std::vector<double> concat(static_cast<size_t>(t) * d_model, 0.0);
  for (int head = 0; head < num_heads; ++head) {
    const int col0 = head * dk;
    for (int i = 0; i < t; ++i) {
      std::vector<double> logits(static_cast<size_t>(t));
      double mx = -1e300;
      for (int j = 0; j < t; ++j) {
        double s = 0.0;
        for (int e = 0; e < dk; ++e)
          s += q[static_cast<size_t>(i) * d_model + col0 + e] *
               k[static_cast<size_t>(j) * d_model + col0 + e];
        s *= scale;
        if (mask) s += (*mask)[static_cast<size_t>(i) * t + j];
        logits[static_cast<size_t>(j)] = s;
        mx = std::max(mx, s);
      }
      double sum = 0.0;
      for (int j = 0; j < t; ++j) {
        logits[static_cast<size_t>(j)] = std::exp(logits[static_cast<size_t>(j)] - mx);
        sum += logits[static_cast<size_t>(j)];
      }
      for (int e = 0; e < dk; ++e) {
        double acc = 0.0;
        for (int j = 0; j < t; ++j)
          acc += logits[static_cast<size_t>(j)] * v[static_cast<size_t>(j) * d_model + col0 + e];
        concat[static_cast<size_t>(i) * d_model + col0 + e] = acc / sum;
      }
    }
  }
  if (wo.size() == 0) return concat;
  std::vector<double> out(static_cast<size_t>(t) * d_model, 0.0);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d_model; ++j) {
      double acc = 0.0;
      for (int k2 = 0; k2 < d_model; ++k2)
        acc += concat[static_cast<size_t>(i) * d_model + k2] *
               wo[static_cast<int64_t>(k2) * d_model + j];
      out[static_cast<size_t>(i) * d_model + j] = acc;
    }
  return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline std::vector<double> layer_norm_rows(const std::vector<double>& x, int rows,
                                           int d, const Tensor& gamma,
                                           const Tensor& beta, double eps = 1e-5) {
  std::vector<double> out(x.size());
  for (int r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (int i = 0; i < d; ++i) mean += x[static_cast<size_t>(r) * d + i];
    mean /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) {
      const double c = x[static_cast<size_t>(r) * d + i] - mean;
      var += c * c;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int i = 0; i < d; ++i)
      out[static_cast<size_t>(r) * d + i] =
          gamma[i] * (x[static_cast<size_t>(r) * d + i] - mean) * inv + beta[i];
  }
  return out;
}

inline std::vector<double> linear_rows(const std::vector<double>& x, int rows,
                                       const Tensor& w, const Tensor& b) {
  const int d_in = w.dim(0), d_out = w.dim(1);
  std::vector<double> out(static_cast<size_t>(rows) * d_out, 0.0);
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < d_out; ++j) {
      double acc = b.size() ? static_cast<double>(b[j]) : 0.0;
      for (int i = 0; i < d_in; ++i)
        acc += x[static_cast<size_t>(r) * d_in + i] * w[static_cast<int64_t>(i) * d_out + j];
      out[static_cast<size_t>(r) * d_out + j] = acc;
    }
  return out;
}

// Per-window application of the WA/MLP residual pair, windows enumerated by
// hand in raster order with bottom/right zero padding.
inline std::vector<double> window_attention_block(
    const Tensor& x, int mh, int mw, int num_heads,
    const thermdet::WindowAttentionWeights& w, bool layer_norm_kind) {
  const int c = x.dim(0), h = x.dim(1), w_dim = x.dim(2);
  const int rows = (h + mh - 1) / mh, cols = (w_dim + mw - 1) / mw;
  const int cells = mh * mw;
  std::vector<double> result(static_cast<size_t>(c) * h * w_dim, 0.0);

  for (int wr = 0; wr < rows; ++wr)
    for (int wc = 0; wc < cols; ++wc) {
      std::vector<double> z(static_cast<size_t>(cells) * c, 0.0);
      std::vector<double> mask(static_cast<size_t>(cells) * cells, 0.0);
      std::vector<bool> valid(static_cast<size_t>(cells), false);
      for (int cy = 0; cy < mh; ++cy)
        for (int cx = 0; cx < mw; ++cx) {
          const int sy = wr * mh + cy, sx = wc * mw + cx;
          const int cell = cy * mw + cx;
          if (sy < h && sx < w_dim) {
            valid[static_cast<size_t>(cell)] = true;
            for (int ch = 0; ch < c; ++ch)
              z[static_cast<size_t>(cell) * c + ch] = x.at(ch, sy, sx);
          }
        }
      for (int i = 0; i < cells; ++i)
        for (int j = 0; j < cells; ++j)
          mask[static_cast<size_t>(i) * cells + j] = valid[static_cast<size_t>(j)] ? 0.0 : -1e30;

      auto norm = [&](const std::vector<double>& in, const Tensor& gamma,
                      const Tensor& beta, const Tensor& lw, const Tensor& lb) {
        return layer_norm_kind ? layer_norm_rows(in, cells, c, gamma, beta)
                               : linear_rows(in, cells, lw, lb);
      };
      auto normed = norm(z, w.norm1_gamma, w.norm1_beta, w.norm1_w, w.norm1_b);
      auto wa = attention(normed, cells, c, num_heads, w.attn.wq, w.attn.wk,
                          w.attn.wv, w.attn.wo, &mask);
      std::vector<double> zhat(z.size());
      for (size_t i = 0; i < z.size(); ++i) zhat[i] = wa[i] + z[i];
      auto normed2 = norm(zhat, w.norm2_gamma, w.norm2_beta, w.norm2_w, w.norm2_b);
      auto hidden = linear_rows(normed2, cells, w.mlp_w1, w.mlp_b1);
      for (auto& v : hidden) v = gelu(v);
      auto mlp = linear_rows(hidden, cells, w.mlp_w2, w.mlp_b2);
      for (int cy = 0; cy < mh; ++cy)
        for (int cx = 0; cx < mw; ++cx) {
          const int sy = wr * mh + cy, sx = wc * mw + cx;
          if (sy >= h || sx >= w_dim) continue;
          const int cell = cy * mw + cx;
          for (int ch = 0; ch < c; ++ch)
            result[(static_cast<size_t>(ch) * h + sy) * w_dim + sx] =
                mlp[static_cast<size_t>(cell) * c + ch] + zhat[static_cast<size_t>(cell) * c + ch];
        }
    }
  return result;
}

// Node-by-node Bi-FPN dataflow on double maps (same table as docs/bifpn.md).
struct DoubleMap {
  std::vector<double> data;
  int c = 0, h = 0, w = 0;
};

inline DoubleMap to_double(const Tensor& t) {
  DoubleMap m{std::vector<double>(t.data(), t.data() + t.size()), t.dim(0), t.dim(1), t.dim(2)};
  return m;
}

inline DoubleMap up2(const DoubleMap& x) {
  DoubleMap out{std::vector<double>(static_cast<size_t>(x.c) * 4 * x.h * x.w), x.c, 2 * x.h, 2 * x.w};
  for (int c = 0; c < x.c; ++c)
    for (int y = 0; y < out.h; ++y)
      for (int xx = 0; xx < out.w; ++xx)
        out.data[(static_cast<size_t>(c) * out.h + y) * out.w + xx] =
            x.data[(static_cast<size_t>(c) * x.h + y / 2) * x.w + xx / 2];
  return out;
}

inline DoubleMap down2(const DoubleMap& x) {
  DoubleMap out{std::vector<double>(static_cast<size_t>(x.c) * (x.h / 2) * (x.w / 2)),
                x.c, x.h / 2, x.w / 2};
  for (int c = 0; c < x.c; ++c)
    for (int y = 0; y < out.h; ++y)
      for (int xx = 0; xx < out.w; ++xx) {
        double m = -1e300;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            m = std::max(m, x.data[(static_cast<size_t>(c) * x.h + 2 * y + dy) * x.w +
                                   2 * xx + dx]);
        out.data[(static_cast<size_t>(c) * out.h + y) * out.w + xx] = m;
      }
  return out;
}

inline DoubleMap fuse_node(const std::vector<DoubleMap>& inputs,
                           const thermdet::FusionWeights& weights,
                           const Tensor& conv_filters, const Tensor& conv_bias) {
  double denom = weights.epsilon;
  for (size_t i = 0; i < inputs.size(); ++i) denom += weights.value(i);
  DoubleMap acc{std::vector<double>(inputs[0].data.size(), 0.0), inputs[0].c,
                inputs[0].h, inputs[0].w};
  for (size_t i = 0; i < inputs.size(); ++i) {
    const double coef = weights.value(i) / denom;
    for (size_t j = 0; j < acc.data.size(); ++j) acc.data[j] += coef * inputs[i].data[j];
  }
  // 3x3 conv, padding 1, on the double map
  const int n = conv_filters.dim(0), c = acc.c, h = acc.h, w = acc.w;
  DoubleMap out{std::vector<double>(static_cast<size_t>(n) * h * w, 0.0), n, h, w};
  for (int oc = 0; oc < n; ++oc)
    for (int oy = 0; oy < h; ++oy)
      for (int ox = 0; ox < w; ++ox) {
        double sum = conv_bias.size() ? static_cast<double>(conv_bias[oc]) : 0.0;
        for (int ic = 0; ic < c; ++ic)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy - 1 + ky, ix = ox - 1 + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              sum += acc.data[(static_cast<size_t>(ic) * h + iy) * w + ix] *
                     conv_filters[((static_cast<int64_t>(oc) * c + ic) * 3 + ky) * 3 + kx];
            }
        out.data[(static_cast<size_t>(oc) * h + oy) * w + ox] = sum;
      }
  return out;
}

inline std::vector<DoubleMap> bifpn_pass(const std::vector<Tensor>& p,
                                         const thermdet::BifpnWeights& w) {
  std::vector<DoubleMap> in;
  for (const auto& t : p) in.push_back(to_double(t));
  auto node = [&](int i, const std::vector<DoubleMap>& inputs) {
    return fuse_node(inputs, w.nodes[static_cast<size_t>(i)].weights,
                     w.nodes[static_cast<size_t>(i)].conv_filters,
                     w.nodes[static_cast<size_t>(i)].conv_bias);
  };
  DoubleMap t2 = node(0, {in[2], up2(in[3])});
  DoubleMap t1 = node(1, {in[1], up2(t2)});
  DoubleMap t0 = node(2, {in[0], up2(t1)});
  DoubleMap o0 = t0;
  DoubleMap o1 = node(3, {in[1], t1, down2(o0)});
  DoubleMap o2 = node(4, {in[2], t2, down2(o1)});
  DoubleMap o3 = node(5, {in[3], down2(o2)});
  return {o0, o1, o2, o3};
}

// Greedy NMS simulated directly on a (score, box) list, one class.
struct OracleBox {
  float score;
  float x1, y1, x2, y2;
  size_t index;
};

inline std::vector<size_t> nms_keep(std::vector<OracleBox> boxes, float thr) {
  std::sort(boxes.begin(), boxes.end(), [](const OracleBox& a, const OracleBox& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.index < b.index;
  });
  std::vector<size_t> kept;
  std::vector<OracleBox> kept_boxes;
  for (const auto& cand : boxes) {
    bool ok = true;
    for (const auto& k : kept_boxes) {
      const double ax = std::max(0.0f, std::min(cand.x2, k.x2) - std::max(cand.x1, k.x1));
      const double ay = std::max(0.0f, std::min(cand.y2, k.y2) - std::max(cand.y1, k.y1));
      const double inter = ax * ay;
      const double uni = (cand.x2 - cand.x1) * (cand.y2 - cand.y1) +
                         (k.x2 - k.x1) * (k.y2 - k.y1) - inter;
      if (uni > 0 && inter / uni > thr) {
        ok = false;
        break;
      }
    }
    if (ok) {
      kept.push_back(cand.index);
      kept_boxes.push_back(cand);
    }
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

}  // namespace oracles
