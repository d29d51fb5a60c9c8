#pragma once

#include <cstdint>
#include <vector>

#include "thermdet/tensor.hpp"

namespace thermdet {

// Ghost convolution: m primary maps from a standard k x k convolution, then
// each primary map spawns s-1 extra maps via a cheap depthwise d x d
// convolution (the primary map itself counts among the s outputs, so
// total_out = primary_out * s).
struct GhostConvSpec {
  int in_channels = 0;
  int primary_out = 0;   // m
  int total_out = 0;     // n = m * s
  int primary_kernel = 3;  // k
  int cheap_kernel = 3;    // d
  int stride = 1;
  int padding = 1;

  int ratio() const { return total_out / primary_out; }  // s
  void validate() const;
};

struct GhostParamCount {
  int64_t ghost = 0;     // c*k*k*m + m*(s-1)*d*d + n bias
  int64_t standard = 0;  // c*k*k*n + n bias
};

GhostParamCount ghost_param_count(const GhostConvSpec& spec);

// primary_filters (m, c, k, k); primary_bias (m);
// cheap_filters (m*(s-1), 1, d, d) grouped per primary map; cheap_bias (m*(s-1)).
// Output channel layout: [primary 0..m) then cheap maps in primary-major order.
Tensor ghost_conv(const Tensor& x, const GhostConvSpec& spec,
                  const Tensor& primary_filters, const Tensor& primary_bias,
                  const Tensor& cheap_filters, const Tensor& cheap_bias);

struct GhostBottleneckWeights {
  Tensor expand_primary, expand_primary_bias, expand_cheap, expand_cheap_bias;
  Tensor project_primary, project_primary_bias, project_cheap, project_cheap_bias;
};

// ghost_conv -> GELU -> ghost_conv, optionally + input. Residual requires
// stride 1 and matching channel counts.
Tensor ghost_bottleneck(const Tensor& x, const GhostConvSpec& spec_expand,
                        const GhostConvSpec& spec_project,
                        const GhostBottleneckWeights& w, bool use_residual);

struct AsppSpec {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<int> dilation_rates;  // strictly increasing, first rate 1

  void validate() const;
};

// Parallel dilated 3x3 branches (out_channels each, padding = rate so spatial
// dims are preserved), channel concat, then 1x1 projection to out_channels.
// branch_filters[i] is (out, in, 3, 3); projection (out, n_rates*out, 1, 1).
Tensor aspp(const Tensor& x, const AsppSpec& spec,
            const std::vector<Tensor>& branch_filters,
            const std::vector<Tensor>& branch_biases,
            const Tensor& projection, const Tensor& projection_bias);

// Per-channel (depthwise) convolution: filters (c, 1, d, d), one per channel.
Tensor depthwise_conv2d(const Tensor& input, const Tensor& filters,
                        const Tensor& bias, int stride, int padding);

}  // namespace thermdet
