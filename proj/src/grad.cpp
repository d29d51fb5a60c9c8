#include "thermdet/grad.hpp"

#include <cmath>
#include <stdexcept>

namespace thermdet::grad {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

double sigmoid_value(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double sigmoid_derivative(double x) {
  const double s = sigmoid_value(x);
  return s * (1.0 - s);
}

std::vector<double> softmax_weighted_sum_grad(std::span<const double> x,
                                              std::span<const double> r) {
  const size_t n = x.size();
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  std::vector<double> p(n);
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    p[i] = std::exp(x[i] - mx);
    sum += p[i];
  }
  double dot = 0.0;
  for (size_t i = 0; i < n; ++i) {
    p[i] /= sum;
    dot += r[i] * p[i];
  }
  std::vector<double> g(n);
  for (size_t i = 0; i < n; ++i) g[i] = p[i] * (r[i] - dot);
  return g;
}

double layer_norm_weighted_sum(std::span<const double> x,
                               std::span<const double> r, double eps) {
  const size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + eps);
  double loss = 0.0;
  for (size_t i = 0; i < n; ++i) loss += r[i] * (x[i] - mean) * inv;
  return loss;
}

std::vector<double> layer_norm_weighted_sum_grad(std::span<const double> x,
                                                 std::span<const double> r,
                                                 double eps) {
  const size_t n = x.size();
  const double dn = static_cast<double>(n);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= dn;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= dn;
  const double inv = 1.0 / std::sqrt(var + eps);

  std::vector<double> y(n);
  for (size_t i = 0; i < n; ++i) y[i] = (x[i] - mean) * inv;

  double r_mean = 0.0, ry_mean = 0.0;
  for (size_t i = 0; i < n; ++i) {
    r_mean += r[i];
    ry_mean += r[i] * y[i];
  }
  r_mean /= dn;
  ry_mean /= dn;

  std::vector<double> g(n);
  for (size_t i = 0; i < n; ++i)
    g[i] = inv * (r[i] - r_mean - y[i] * ry_mean);
  return g;
}

namespace {

// C(rows x cols) = A(rows x inner) * B(inner x cols), all row-major
void matmul(std::span<const double> a, std::span<const double> b,
            std::span<double> c, int rows, int inner, int cols) {
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (int k = 0; k < inner; ++k)
        acc += a[static_cast<size_t>(i) * inner + k] * b[static_cast<size_t>(k) * cols + j];
      c[static_cast<size_t>(i) * cols + j] = acc;
    }
}

}  // namespace

AttentionGrad attention_sum_loss(std::span<const double> input, int tokens,
                                 int d_model, int num_heads,
                                 std::span<const double> wq,
                                 std::span<const double> wk,
                                 std::span<const double> wv) {
  if (d_model % num_heads != 0)
    throw std::invalid_argument("attention_sum_loss: d_model % num_heads != 0");
  const int dk = d_model / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const size_t t = static_cast<size_t>(tokens);
  const size_t d = static_cast<size_t>(d_model);

  AttentionGrad out;
  out.output.assign(t * d, 0.0);
  out.input_grad.assign(t * d, 0.0);

  // full projections once; head slicing is by column range
  std::vector<double> q(t * d), k(t * d), v(t * d);
  matmul(input, wq, q, tokens, d_model, d_model);
  matmul(input, wk, k, tokens, d_model, d_model);
  matmul(input, wv, v, tokens, d_model, d_model);

  std::vector<double> dq(t * d, 0.0), dkv(t * d, 0.0), dv(t * d, 0.0);

  for (int h = 0; h < num_heads; ++h) {
    const int col0 = h * dk;
    std::vector<double> attn(t * t);      // softmax(Q Kᵀ / sqrt(dk))
    for (size_t i = 0; i < t; ++i) {
      double mx = -1e300;
      std::vector<double> logits(t);
      for (size_t j = 0; j < t; ++j) {
        double s = 0.0;
        for (int e = 0; e < dk; ++e)
          s += q[i * d + col0 + e] * k[j * d + col0 + e];
        logits[j] = s * scale;
        mx = std::max(mx, logits[j]);
      }
      double sum = 0.0;
      for (size_t j = 0; j < t; ++j) {
        attn[i * t + j] = std::exp(logits[j] - mx);
        sum += attn[i * t + j];
      }
      for (size_t j = 0; j < t; ++j) attn[i * t + j] /= sum;
    }
    // forward: Z_h = A V_h
    for (size_t i = 0; i < t; ++i)
      for (int e = 0; e < dk; ++e) {
        double acc = 0.0;
        for (size_t j = 0; j < t; ++j) acc += attn[i * t + j] * v[j * d + col0 + e];
        out.output[i * d + col0 + e] = acc;
      }
    // backward with dZ_h = 1
    // dV_h = Aᵀ dZ_h : each row j gets sum_i A_ij
    std::vector<double> col_sum(t, 0.0);
    for (size_t i = 0; i < t; ++i)
      for (size_t j = 0; j < t; ++j) col_sum[j] += attn[i * t + j];
    for (size_t j = 0; j < t; ++j)
      for (int e = 0; e < dk; ++e) dv[j * d + col0 + e] += col_sum[j];
    // dA_ij = sum_e dZ_ie * V_je = sum_e V_je
    std::vector<double> da(t * t);
    for (size_t i = 0; i < t; ++i)
      for (size_t j = 0; j < t; ++j) {
        double acc = 0.0;
        for (int e = 0; e < dk; ++e) acc += v[j * d + col0 + e];
        da[i * t + j] = acc;
      }
    // softmax backward row-wise: dS = A ∘ (dA - rowdot), then scale
    std::vector<double> ds(t * t);
    for (size_t i = 0; i < t; ++i) {
      double rowdot = 0.0;
      for (size_t j = 0; j < t; ++j) rowdot += da[i * t + j] * attn[i * t + j];
      for (size_t j = 0; j < t; ++j)
        ds[i * t + j] = attn[i * t + j] * (da[i * t + j] - rowdot) * scale;
    }
    // dQ_h = dS K_h ; dK_h = dSᵀ Q_h
    for (size_t i = 0; i < t; ++i)
      for (int e = 0; e < dk; ++e) {
        double acc = 0.0;
        for (size_t j = 0; j < t; ++j) acc += ds[i * t + j] * k[j * d + col0 + e];
        dq[i * d + col0 + e] += acc;
      }
    for (size_t j = 0; j < t; ++j)
      for (int e = 0; e < dk; ++e) {
        double acc = 0.0;
        for (size_t i = 0; i < t; ++i) acc += ds[i * t + j] * q[i * d + col0 + e];
        dkv[j * d + col0 + e] += acc;
      }
  }

  // dI = dQ Wqᵀ + dK Wkᵀ + dV Wvᵀ
  for (size_t i = 0; i < t; ++i)
    for (size_t a = 0; a < d; ++a) {
      double acc = 0.0;
      for (size_t b = 0; b < d; ++b) {
        acc += dq[i * d + b] * wq[a * d + b];
        acc += dkv[i * d + b] * wk[a * d + b];
        acc += dv[i * d + b] * wv[a * d + b];
      }
      out.input_grad[i * d + a] = acc;
    }
  return out;
}

}  // namespace thermdet::grad
