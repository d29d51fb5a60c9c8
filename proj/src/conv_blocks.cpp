#include "thermdet/conv_blocks.hpp"

#include <sstream>
#include <stdexcept>

namespace thermdet {

void GhostConvSpec::validate() const {
  if (in_channels <= 0 || primary_out <= 0 || total_out <= 0)
    throw std::invalid_argument("GhostConvSpec: channel counts must be positive");
  if (primary_out > total_out)
    throw std::invalid_argument("GhostConvSpec: primary_out must not exceed total_out");
  if (total_out % primary_out != 0)
    throw std::invalid_argument("GhostConvSpec: total_out must be a multiple of primary_out");
  if (primary_kernel <= 0 || cheap_kernel <= 0 || stride <= 0 || padding < 0)
    throw std::invalid_argument("GhostConvSpec: bad kernel/stride/padding");
}

GhostParamCount ghost_param_count(const GhostConvSpec& spec) {
  spec.validate();
  const int64_t c = spec.in_channels, m = spec.primary_out, n = spec.total_out;
  const int64_t k = spec.primary_kernel, d = spec.cheap_kernel;
  const int64_t s = n / m;
  GhostParamCount count;
  count.ghost = c * k * k * m + m * (s - 1) * d * d + n;
  count.standard = c * k * k * n + n;
  return count;
}

Tensor depthwise_conv2d(const Tensor& input, const Tensor& filters,
                        const Tensor& bias, int stride, int padding) {
  if (input.rank() != 3 || filters.rank() != 4 || filters.dim(1) != 1 ||
      filters.dim(0) != input.dim(0))
    throw std::invalid_argument("depthwise_conv2d: filters must be (c,1,d,d)");
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int kh = filters.dim(2), kw = filters.dim(3);
  const int oh = (h + 2 * padding - kh) / stride + 1;
  const int ow = (w + 2 * padding - kw) / stride + 1;
  Tensor out({c, oh, ow});
  for (int ch = 0; ch < c; ++ch) {
    const float b = bias.size() ? bias[ch] : 0.0f;
    const float* f = filters.data() + static_cast<int64_t>(ch) * kh * kw;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        float acc = b;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= w) continue;
            acc += input.at(ch, iy, ix) * f[ky * kw + kx];
          }
        }
        out.at(ch, oy, ox) = acc;
      }
  }
  return out;
}

Tensor ghost_conv(const Tensor& x, const GhostConvSpec& spec,
                  const Tensor& primary_filters, const Tensor& primary_bias,
                  const Tensor& cheap_filters, const Tensor& cheap_bias) {
  spec.validate();
  const int m = spec.primary_out, n = spec.total_out, s = spec.ratio();
  if (x.dim(0) != spec.in_channels) {
    std::ostringstream ss;
    ss << "ghost_conv: input has " << x.dim(0) << " channels, spec expects "
       << spec.in_channels;
    throw std::invalid_argument(ss.str());
  }
  if (primary_filters.dim(0) != m || primary_filters.dim(1) != spec.in_channels ||
      primary_filters.dim(2) != spec.primary_kernel)
    throw std::invalid_argument("ghost_conv: primary filter shape mismatch");

  Tensor primary = conv2d(x, primary_filters, primary_bias, spec.stride, spec.padding);
  const int oh = primary.dim(1), ow = primary.dim(2);
  Tensor out({n, oh, ow});
  for (int ch = 0; ch < m; ++ch)
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) out.at(ch, y, xx) = primary.at(ch, y, xx);

  if (s > 1) {
    const int n_cheap = m * (s - 1);
    if (cheap_filters.dim(0) != n_cheap || cheap_filters.dim(2) != spec.cheap_kernel)
      throw std::invalid_argument("ghost_conv: cheap filter shape mismatch");
    const int d = spec.cheap_kernel;
    const int pad = d / 2;  // cheap path preserves the primary map's dims
    // channel layout of the cheap maps: primary 0's s-1 maps, then primary 1's, ...
    for (int p = 0; p < m; ++p) {
      for (int j = 0; j < s - 1; ++j) {
        const int fidx = p * (s - 1) + j;
        const float* f = cheap_filters.data() + static_cast<int64_t>(fidx) * d * d;
        const float b = cheap_bias.size() ? cheap_bias[fidx] : 0.0f;
        const int oc = m + fidx;
        for (int y = 0; y < oh; ++y)
          for (int xx = 0; xx < ow; ++xx) {
            float acc = b;
            for (int ky = 0; ky < d; ++ky) {
              const int iy = y - pad + ky;
              if (iy < 0 || iy >= oh) continue;
              for (int kx = 0; kx < d; ++kx) {
                const int ix = xx - pad + kx;
                if (ix < 0 || ix >= ow) continue;
                acc += primary.at(p, iy, ix) * f[ky * d + kx];
              }
            }
            out.at(oc, y, xx) = acc;
          }
      }
    }
  }
  return out;
}

Tensor ghost_bottleneck(const Tensor& x, const GhostConvSpec& spec_expand,
                        const GhostConvSpec& spec_project,
                        const GhostBottleneckWeights& w, bool use_residual) {
  Tensor h = ghost_conv(x, spec_expand, w.expand_primary, w.expand_primary_bias,
                        w.expand_cheap, w.expand_cheap_bias);
  h = gelu(h);
  Tensor out = ghost_conv(h, spec_project, w.project_primary, w.project_primary_bias,
                          w.project_cheap, w.project_cheap_bias);
  if (use_residual) {
    if (!out.same_shape(x))
      throw std::invalid_argument("ghost_bottleneck: residual shape mismatch");
    for (int64_t i = 0; i < out.size(); ++i) out[i] += x[i];
  }
  return out;
}

void AsppSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0)
    throw std::invalid_argument("AsppSpec: channel counts must be positive");
  if (dilation_rates.empty() || dilation_rates.front() != 1)
    throw std::invalid_argument("AsppSpec: first dilation rate must be 1");
  for (size_t i = 1; i < dilation_rates.size(); ++i)
    if (dilation_rates[i] <= dilation_rates[i - 1])
      throw std::invalid_argument("AsppSpec: dilation rates must be strictly increasing");
}

Tensor aspp(const Tensor& x, const AsppSpec& spec,
            const std::vector<Tensor>& branch_filters,
            const std::vector<Tensor>& branch_biases,
            const Tensor& projection, const Tensor& projection_bias) {
  spec.validate();
  const size_t n_rates = spec.dilation_rates.size();
  if (branch_filters.size() != n_rates || branch_biases.size() != n_rates)
    throw std::invalid_argument("aspp: one filter set per dilation rate required");
  const int h = x.dim(1), w = x.dim(2);
  Tensor concat({static_cast<int>(n_rates) * spec.out_channels, h, w});
  for (size_t i = 0; i < n_rates; ++i) {
    const int rate = spec.dilation_rates[i];
    // padding = rate keeps 3x3 dilated output at h x w
    Tensor branch = conv2d(x, branch_filters[i], branch_biases[i], 1, rate, rate);
    const int64_t offset = static_cast<int64_t>(i) * spec.out_channels * h * w;
    for (int64_t j = 0; j < branch.size(); ++j) concat[offset + j] = branch[j];
  }
  return conv2d(concat, projection, projection_bias, 1, 0);
}

}  // namespace thermdet
