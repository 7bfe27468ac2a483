#pragma once

#include <string>
#include <vector>

#include "stlsnn/network.hpp"
#include "stlsnn/tensor.hpp"

namespace stlsnn {

// Which parameter families receive gradient: synaptic weights only (SL),
// spike thresholds only (TL), or both synergistically (STL).
enum class LearningMode { SL, TL, STL };

const char* learning_mode_name(LearningMode m);
LearningMode parse_learning_mode(const std::string& text);

// Loss gradients for one stage; tensors mirror the LayerParams shapes and
// are empty where the stage has no such parameter.
struct StageGrads {
  Tensor dW;
  Tensor dVth;
  Tensor dGamma;
  Tensor dBeta;
};

struct GradientSet {
  std::vector<StageGrads> stages;
};

// Reverse spatio-temporal sweep. `seed_grads` is dL/do for every output
// spike, [T][S][output units], typically from loss_grad_output. Iterates
// stages from the output inward and timesteps T..1 within each stage:
//   dL/du^t = dL/do^t * surrogate_grad(u^t)  +  alpha^{t+1} * dL/du^{t+1}
//   dVth   -= dL/do^t * surrogate_grad(u^t)
//   dW     += dL/du^t (x) inputs,  with BN / pooling / dropout backward
// applied by their standard rules using the cached statistics, routing
// indices and masks. The decay factor alpha is treated as a constant
// (no gradient flows through the reset path).
GradientSet backward(const Network& net, const ForwardCache& cache,
                     const Tensor& seed_grads);

// SL zeroes every dVth; TL zeroes every dW and the BN affine gradients
// (frozen alongside the weights); STL is the identity.
void apply_mode_mask(GradientSet& grads, LearningMode mode);

}  // namespace stlsnn
