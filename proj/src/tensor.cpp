#include "thermdet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace thermdet {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0f) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
    throw std::invalid_argument("tensor data length does not match shape");
}

Tensor Tensor::full(std::vector<int> shape, float value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor conv2d(const Tensor& input, const Tensor& filters, const Tensor& bias,
              int stride, int padding, int dilation) {
  if (input.rank() != 3) throw std::invalid_argument("conv2d: input must be (c,h,w)");
  if (filters.rank() != 4) throw std::invalid_argument("conv2d: filters must be (n,c,k,k)");
  const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int n = filters.dim(0), fc = filters.dim(1), kh = filters.dim(2), kw = filters.dim(3);
  if (fc != c) {
    std::ostringstream ss;
    ss << "conv2d: filter channels (" << fc << ") != input channels (" << c << ")";
    throw std::invalid_argument(ss.str());
  }
  if (bias.size() != 0 && (bias.rank() != 1 || bias.dim(0) != n))
    throw std::invalid_argument("conv2d: bias must be (n) or empty");
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be positive");
  if (padding < 0 || dilation < 1) throw std::invalid_argument("conv2d: bad padding/dilation");
  const int eff_kh = dilation * (kh - 1) + 1;
  const int eff_kw = dilation * (kw - 1) + 1;
  if (eff_kh > h + 2 * padding || eff_kw > w + 2 * padding)
    throw std::invalid_argument("conv2d: kernel larger than padded input");

  const int oh = (h + 2 * padding - eff_kh) / stride + 1;
  const int ow = (w + 2 * padding - eff_kw) / stride + 1;
  Tensor out({n, oh, ow});
  const float* fdata = filters.data();
  for (int oc = 0; oc < n; ++oc) {
    const float b = bias.size() ? bias[oc] : 0.0f;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        float acc = b;
        for (int ic = 0; ic < c; ++ic) {
          const int64_t fbase = ((static_cast<int64_t>(oc) * c + ic) * kh) * kw;
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride - padding + ky * dilation;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ox * stride - padding + kx * dilation;
              if (ix < 0 || ix >= w) continue;
              acc += input.at(ic, iy, ix) * fdata[fbase + ky * kw + kx];
            }
          }
        }
        out.at(oc, oy, ox) = acc;
      }
    }
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = x;
  constexpr float inv_sqrt2 = 0.70710678118654752440f;
  for (int64_t i = 0; i < out.size(); ++i) {
    const float v = out[i];
    out[i] = 0.5f * v * (1.0f + std::erf(v * inv_sqrt2));
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = x;
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = 1.0f / (1.0f + std::exp(-out[i]));
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis < 0) axis += x.rank();
  if (axis < 0 || axis >= x.rank()) throw std::invalid_argument("softmax: bad axis");
  const auto& shape = x.shape();
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < x.rank(); ++i) inner *= shape[static_cast<size_t>(i)];
  const int64_t n = shape[static_cast<size_t>(axis)];

  Tensor out = x;
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * n * inner + in;
      float mx = out[base];
      for (int64_t k = 1; k < n; ++k) mx = std::max(mx, out[base + k * inner]);
      float sum = 0.0f;
      for (int64_t k = 0; k < n; ++k) {
        const float e = std::exp(out[base + k * inner] - mx);
        out[base + k * inner] = e;
        sum += e;
      }
      for (int64_t k = 0; k < n; ++k) out[base + k * inner] /= sum;
    }
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2) throw std::invalid_argument("linear: weight must be 2-d");
  const int d_in = weight.dim(0), d_out = weight.dim(1);
  if (x.rank() < 1 || x.shape().back() != d_in)
    throw std::invalid_argument("linear: last input dim does not match weight");
  if (bias.size() != 0 && (bias.rank() != 1 || bias.dim(0) != d_out))
    throw std::invalid_argument("linear: bias must be (d_out) or empty");

  std::vector<int> out_shape = x.shape();
  out_shape.back() = d_out;
  Tensor out(out_shape);
  const int64_t rows = x.size() / d_in;
  for (int64_t r = 0; r < rows; ++r) {
    const float* xr = x.data() + r * d_in;
    float* yr = out.data() + r * d_out;
    for (int j = 0; j < d_out; ++j) yr[j] = bias.size() ? bias[j] : 0.0f;
    for (int i = 0; i < d_in; ++i) {
      const float xv = xr[i];
      const float* wr = weight.data() + static_cast<int64_t>(i) * d_out;
      for (int j = 0; j < d_out; ++j) yr[j] += xv * wr[j];
    }
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const int d = x.shape().back();
  if (gamma.size() != d || beta.size() != d)
    throw std::invalid_argument("layer_norm: gamma/beta must have size d");
  Tensor out = x;
  const int64_t rows = x.size() / d;
  for (int64_t r = 0; r < rows; ++r) {
    float* row = out.data() + r * d;
    float mean = 0.0f;
    for (int i = 0; i < d; ++i) mean += row[i];
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (int i = 0; i < d; ++i) {
      const float c = row[i] - mean;
      var += c * c;
    }
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + eps);
    for (int i = 0; i < d; ++i)
      row[i] = gamma[i] * (row[i] - mean) * inv + beta[i];
  }
  return out;
}

namespace {

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("tensor file: truncated header");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_tensor(const Tensor& t, std::ostream& os) {
  os.write("TNSR", 4);
  write_u32(os, static_cast<uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) write_u32(os, static_cast<uint32_t>(t.dim(i)));
  // f32 payload, little-endian (host is LE on every supported target)
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(t.data()), t.size() * 4);
}

Tensor read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TNSR", 4) != 0)
    throw std::runtime_error("tensor file: bad magic");
  const uint32_t rank = read_u32(is);
  if (rank > 8) throw std::runtime_error("tensor file: implausible rank");
  std::vector<int> shape(rank);
  for (auto& d : shape) d = static_cast<int>(read_u32(is));
  const int64_t n = shape_numel(shape);
  std::vector<float> data(static_cast<size_t>(n));
  is.read(reinterpret_cast<char*>(data.data()), n * 4);
  if (!is) throw std::runtime_error("tensor file: truncated payload");
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const Tensor& t, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  write_tensor(t, os);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for read: " + path);
  return read_tensor(is);
}

GradCheckReport grad_check(const std::function<double(std::span<const double>)>& f,
                           std::vector<double> x,
                           std::span<const double> analytic_grad,
                           double h, double tolerance) {
  if (h < 1e-6 || h > 1e-2) throw std::invalid_argument("grad_check: h must be in [1e-6,1e-2]");
  if (analytic_grad.size() != x.size())
    throw std::invalid_argument("grad_check: gradient size mismatch");
  if (!std::isfinite(f(x))) throw std::runtime_error("grad_check: f(x) not finite");

  GradCheckReport report;
  for (size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic_grad[i];
    const double rel = std::abs(a - numeric) /
                       std::max({std::abs(a), std::abs(numeric), 1e-8});
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_index = static_cast<int64_t>(i);
    }
  }
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace thermdet
