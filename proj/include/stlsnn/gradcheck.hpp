#pragma once

#include <cstdint>
#include <vector>

#include "stlsnn/network.hpp"
#include "stlsnn/tensor.hpp"

namespace stlsnn {

// Compares the analytic backward pass against central finite differences of
// the loss, in soft mode (continuous surrogate outputs, constant leak), for
// every weight, threshold and BN affine entry. Returns the maximum relative
// error  |g_analytic - g_fd| / max(|g_fd|, 1e-8).
// `y` holds one-hot labels [S][C]; `epsilon` must lie in [1e-6, 1e-3].
double grad_check(Network& net, const Tensor& sample, const Tensor& y, std::size_t T,
                  double epsilon = 1e-4);

// A randomly generated dense-chain test case (1-3 spiking layers ending in a
// voting layer, optionally batch-normalized, jittered thresholds, random
// analog inputs). Deterministic in `seed`.
struct GradCheckCase {
  Network net;
  Tensor sample;  // [S][input width] static analog input
  Tensor y;       // [S][C] one-hot labels
  std::size_t T = 4;
};

GradCheckCase make_random_dense_case(std::uint64_t seed);

}  // namespace stlsnn
