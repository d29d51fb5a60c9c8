#pragma once

#include <span>
#include <vector>

namespace thermdet::grad {

// Hand-written analytic derivatives in double precision. There is no autograd
// tape in this codebase; these exist so finite-difference checks have an
// analytic side to compare against.

double gelu_value(double x);
double gelu_derivative(double x);
double sigmoid_value(double x);
double sigmoid_derivative(double x);

// Loss L = sum_i r_i * softmax(x)_i ; returns dL/dx.
std::vector<double> softmax_weighted_sum_grad(std::span<const double> x,
                                              std::span<const double> r);

// Loss L = sum_i r_i * LN(x)_i with gamma=1, beta=0; returns dL/dx.
std::vector<double> layer_norm_weighted_sum_grad(std::span<const double> x,
                                                 std::span<const double> r,
                                                 double eps);
double layer_norm_weighted_sum(std::span<const double> x,
                               std::span<const double> r, double eps);

// Multi-head attention over t tokens of width d_model (row-major t x d_model),
// projection matrices d_model x d_model, no output projection.
struct AttentionGrad {
  std::vector<double> output;      // t x d_model
  std::vector<double> input_grad;  // dL/dI for L = sum(output)
};
AttentionGrad attention_sum_loss(std::span<const double> input, int tokens,
                                 int d_model, int num_heads,
                                 std::span<const double> wq,
                                 std::span<const double> wk,
                                 std::span<const double> wv);

}  // namespace thermdet::grad
