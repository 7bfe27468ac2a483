#include "stlsnn/loss.hpp"

#include <string>

#include "stlsnn/error.hpp"

namespace stlsnn {

void LossSpec::validate() const {
  if (S == 0 || C == 0 || P == 0 || T == 0) {
    throw ConfigError("loss spec requires positive S, C, P and T");
  }
}

double mse_loss(const Tensor& p, const Tensor& y, const LossSpec& spec) {
  spec.validate();
  require_shape(p, {spec.S, spec.C}, "mse_loss rates");
  require_shape(y, {spec.S, spec.C}, "mse_loss labels");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double d = y.data()[i] - p.data()[i];
    acc += d * d;
  }
  return acc / (2.0 * static_cast<double>(spec.S));
}

Tensor loss_grad_output(const Tensor& p, const Tensor& y, const LossSpec& spec) {
  spec.validate();
  require_shape(p, {spec.S, spec.C}, "loss_grad_output rates");
  require_shape(y, {spec.S, spec.C}, "loss_grad_output labels");
  Tensor g({spec.T, spec.S, spec.C * spec.P});
  const double denom = static_cast<double>(spec.S) * static_cast<double>(spec.T) *
                       static_cast<double>(spec.P);
  for (std::size_t s = 0; s < spec.S; ++s) {
    for (std::size_t c = 0; c < spec.C; ++c) {
      const double v = -(y.data()[s * spec.C + c] - p.data()[s * spec.C + c]) / denom;
      for (std::size_t t = 0; t < spec.T; ++t) {
        double* row = g.data() + (t * spec.S + s) * spec.C * spec.P;
        for (std::size_t j = c * spec.P; j < (c + 1) * spec.P; ++j) {
          row[j] = v;
        }
      }
    }
  }
  return g;
}

Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t classes) {
  if (classes == 0) {
    throw ConfigError("one_hot requires a positive class count");
  }
  Tensor y = Tensor::zeros({labels.size(), classes});
  for (std::size_t s = 0; s < labels.size(); ++s) {
    if (labels[s] >= classes) {
      throw RangeError("label " + std::to_string(labels[s]) + " out of range for " +
                       std::to_string(classes) + " classes");
    }
    y.data()[s * classes + labels[s]] = 1.0;
  }
  return y;
}

}  // namespace stlsnn
