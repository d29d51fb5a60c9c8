#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace thermdet {

// Dense row-major float tensor. No views, no broadcasting beyond bias adds;
// every op returns a fresh tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<float> data);

  static Tensor full(std::vector<int> shape, float value);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<const float> span() const { return data_; }
  std::span<float> span() { return {data_.data(), data_.size()}; }

  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 3-d accessor (c,h,w), the common case in this codebase
  float& at(int c, int y, int x) {
    return data_[static_cast<size_t>((static_cast<int64_t>(c) * shape_[1] + y) * shape_[2] + x)];
  }
  float at(int c, int y, int x) const {
    return data_[static_cast<size_t>((static_cast<int64_t>(c) * shape_[1] + y) * shape_[2] + x)];
  }
  // 2-d accessor (row, col)
  float& at(int r, int c) {
    return data_[static_cast<size_t>(static_cast<int64_t>(r) * shape_[1] + c)];
  }
  float at(int r, int c) const {
    return data_[static_cast<size_t>(static_cast<int64_t>(r) * shape_[1] + c)];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

int64_t shape_numel(const std::vector<int>& shape);

// 2-d cross-correlation (the deep-learning "convolution": kernels are not
// flipped). input (c,h,w), filters (n,c,k,k), bias (n). Output spatial dims
// follow floor((dim + 2*padding - dilation*(k-1) - 1)/stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& filters, const Tensor& bias,
              int stride, int padding, int dilation = 1);

// Exact-erf GELU, 0.5*x*(1+erf(x/sqrt(2))). The tanh approximation is not used.
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Softmax along `axis` with max-subtraction.
Tensor softmax(const Tensor& x, int axis);

// x (..., d_in) @ weight (d_in, d_out) + bias (d_out). bias may be empty.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Normalize over the last axis, then scale/shift by gamma/beta (each size d).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);

// Binary tensor container: magic "TNSR", u32 rank, u32 dims, f32 payload,
// all little-endian. Round-trips bit-exactly.
void save_tensor(const Tensor& t, const std::string& path);
Tensor load_tensor(const std::string& path);
void write_tensor(const Tensor& t, std::ostream& os);
Tensor read_tensor(std::istream& is);

struct GradCheckReport {
  double max_relative_error = 0.0;
  int64_t worst_index = -1;
  bool passed = false;
};

// Central-difference check of an analytic gradient, all in double.
// f must be finite at x; relative error uses |a-n| / max(|a|,|n|,1e-8).
GradCheckReport grad_check(const std::function<double(std::span<const double>)>& f,
                           std::vector<double> x,
                           std::span<const double> analytic_grad,
                           double h, double tolerance);

}  // namespace thermdet
