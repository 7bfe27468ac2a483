#pragma once

#include <cstddef>
#include <vector>

#include "stlsnn/neuron.hpp"
#include "stlsnn/rng.hpp"
#include "stlsnn/tensor.hpp"

namespace stlsnn {

enum class LayerKind {
  Encoding,
  Dense,
  Conv2d,
  MaxPool2d,
  BatchNorm,
  Dropout,
  Voting,
};

const char* layer_kind_name(LayerKind k);

// Shape parameters for one layer of the chain. Only the fields relevant to
// `kind` are meaningful.
struct LayerSpec {
  LayerKind kind = LayerKind::Dense;

  // Dense / Voting
  std::size_t in_features = 0;
  std::size_t out_features = 0;

  // Conv2d
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;

  // MaxPool2d
  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;

  // Dropout
  double drop_p = 0.5;

  // Voting
  std::size_t classes = 0;
  std::size_t population = 0;

  static LayerSpec encoding();
  static LayerSpec dense(std::size_t in, std::size_t out);
  static LayerSpec conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                          std::size_t stride = 1, std::size_t padding = 0);
  static LayerSpec maxpool2d(std::size_t window, std::size_t stride = 0);
  static LayerSpec batchnorm();
  static LayerSpec dropout(double p);
  static LayerSpec voting(std::size_t classes, std::size_t population);
};

// Parameters of one spiking layer: weights, per-unit spike thresholds and,
// when batch normalization is attached, the BN parameter set.
//
// Dense/voting layers hold one threshold per neuron; conv layers hold one
// per output channel (shared across spatial positions, like the kernels).
struct LayerParams {
  Tensor W;     // dense: [out][in]; conv: [oc][ic][k][k]; empty for encoding
  Tensor v_th;  // [units] or [channels]

  Tensor bn_gamma;
  Tensor bn_beta;
  Tensor bn_running_mean;
  Tensor bn_running_var;

  bool learnable_w = true;
  bool learnable_vth = true;

  bool has_bn() const { return !bn_gamma.empty(); }
};

// ---- Single-sample layer operations ----------------------------------------
// These are the unit-testable building blocks; the batched network forward
// reuses the same arithmetic internally.

// x_i = sum_j w_ij * o_j over a spike (or analog) vector.
Tensor dense_forward(const Tensor& spikes_in, const LayerParams& p);

// Standard cross-correlation over one [in_ch][H][W] sample.
// Output spatial size is floor((H + 2*pad - k)/stride) + 1 per side.
Tensor conv2d_forward(const Tensor& frames_in, const LayerParams& p,
                      std::size_t stride, std::size_t padding);

// Batch normalization over an [N][C][spatial...] tensor, normalizing each
// channel across every other axis. In train mode the batch statistics are
// used and the running statistics are updated with momentum 0.1; in eval
// mode the running statistics are used. Epsilon is 1e-5.
struct BatchNormResult {
  Tensor y;      // normalized and affine-transformed output
  Tensor x_hat;  // normalized, pre-affine (cached for the backward pass)
  Tensor mean;   // per-channel statistics actually used
  Tensor var;    // biased variance actually used
};
BatchNormResult batchnorm_forward(const Tensor& x, LayerParams& p, bool train);

inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.1;

// Backward through batchnorm_forward given dL/dy. `train_stats` selects the
// batch-statistics chain rule; eval mode treats mean/var as constants.
Tensor batchnorm_backward(const Tensor& grad_y, const Tensor& x_hat,
                          const Tensor& var, const LayerParams& p,
                          bool train_stats, Tensor* dgamma, Tensor* dbeta);

// Elementwise max per window over one [C][H][W] tensor. `argmax` receives,
// for each output element, the flat index into the input plane of the first
// maximal element in row-major order; the backward pass routes gradient only
// to those positions.
struct MaxPoolResult {
  Tensor pooled;
  std::vector<std::size_t> argmax;  // one flat input index per output element
};
MaxPoolResult maxpool_forward(const Tensor& spikes_in, std::size_t window,
                              std::size_t stride);

// Inverted-dropout mask: kept entries carry 1/(1-p_drop), dropped are zero.
// One mask is drawn per sample per presentation window and reused across all
// timesteps. Pass train=false for the all-ones inference mask.
Tensor dropout_mask(std::size_t width, double p_drop, RngEngine& rng,
                    bool train = true);

}  // namespace stlsnn
