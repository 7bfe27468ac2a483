#pragma once

#include <cstddef>
#include <vector>

#include "stlsnn/tensor.hpp"

namespace stlsnn {

// Geometry of the population-rate MSE loss: batch size S, classes C,
// population per class P, presentation window T.
struct LossSpec {
  std::size_t S = 1;
  std::size_t C = 1;
  std::size_t P = 1;
  std::size_t T = 1;

  void validate() const;
};

// L = (1/2S) * sum_s sum_c (y[s][c] - p[s][c])^2 over [S][C] rates/labels.
double mse_loss(const Tensor& p, const Tensor& y, const LossSpec& spec);

// Gradient of the loss with respect to every output spike o_i^t: for a unit
// belonging to class c of sample s, dL/do = -(y[s][c] - p[s][c]) / (S*T*P),
// identical across the window and across the P units of the class.
// Returned as [T][S][C*P].
Tensor loss_grad_output(const Tensor& p, const Tensor& y, const LossSpec& spec);

// One-hot encodes labels into [S][C]; labels must be < C.
Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t classes);

}  // namespace stlsnn
