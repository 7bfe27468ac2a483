#include "stlsnn/layers.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>

#include "kernels.hpp"
#include "stlsnn/error.hpp"

namespace stlsnn {

namespace detail {

void bn_forward_raw(const double* x, std::size_t n, std::size_t c, std::size_t sp,
                    LayerParams& p, bool train, double* y, double* x_hat, double* mean,
                    double* var) {
  const std::size_t count = n * sp;
  if (train) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* row = x + (b * c + ch) * sp;
        for (std::size_t s = 0; s < sp; ++s) sum += row[s];
      }
      const double m = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* row = x + (b * c + ch) * sp;
        for (std::size_t s = 0; s < sp; ++s) {
          const double d = row[s] - m;
          sq += d * d;
        }
      }
      mean[ch] = m;
      var[ch] = sq / static_cast<double>(count);  // biased, used to normalize
      const double unbiased = sq / static_cast<double>(count - 1);
      p.bn_running_mean[ch] = (1.0 - kBnMomentum) * p.bn_running_mean[ch] + kBnMomentum * m;
      p.bn_running_var[ch] =
          (1.0 - kBnMomentum) * p.bn_running_var[ch] + kBnMomentum * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = p.bn_running_mean[ch];
      var[ch] = p.bn_running_var[ch];
    }
  }

  for (std::size_t ch = 0; ch < c; ++ch) {
    const double inv_std = 1.0 / std::sqrt(var[ch] + kBnEpsilon);
    const double m = mean[ch];
    const double g = p.bn_gamma[ch];
    const double b0 = p.bn_beta[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = (b * c + ch) * sp;
      for (std::size_t s = 0; s < sp; ++s) {
        const double xh = (x[base + s] - m) * inv_std;
        x_hat[base + s] = xh;
        y[base + s] = g * xh + b0;
      }
    }
  }
}

void bn_backward_raw(const double* g_y, const double* x_hat, const double* var,
                     const LayerParams& p, bool train_stats, std::size_t n, std::size_t c,
                     std::size_t sp, double* dx, double* dgamma, double* dbeta) {
  const std::size_t count = n * sp;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double inv_std = 1.0 / std::sqrt(var[ch] + kBnEpsilon);
    const double g = p.bn_gamma[ch];
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = (b * c + ch) * sp;
      for (std::size_t s = 0; s < sp; ++s) {
        const double dy = g_y[base + s];
        sum_dy += dy;
        sum_dy_xhat += dy * x_hat[base + s];
      }
    }
    if (dgamma != nullptr) dgamma[ch] = sum_dy_xhat;
    if (dbeta != nullptr) dbeta[ch] = sum_dy;

    const double inv_count = 1.0 / static_cast<double>(count);
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = (b * c + ch) * sp;
      for (std::size_t s = 0; s < sp; ++s) {
        const double dxh = g_y[base + s] * g;
        if (train_stats) {
          dx[base + s] = inv_std * (dxh - inv_count * g *
                                              (sum_dy + x_hat[base + s] * sum_dy_xhat));
        } else {
          dx[base + s] = dxh * inv_std;
        }
      }
    }
  }
}

}  // namespace detail

namespace {

using MatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                              Eigen::RowMajor>>;
using VecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMutMap = Eigen::Map<Eigen::VectorXd>;

}  // namespace

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Encoding: return "encoding";
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::MaxPool2d: return "maxpool2d";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Voting: return "voting";
  }
  return "unknown";
}

LayerSpec LayerSpec::encoding() {
  LayerSpec s;
  s.kind = LayerKind::Encoding;
  return s;
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.in_features = in;
  s.out_features = out;
  return s;
}

LayerSpec LayerSpec::conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                            std::size_t stride, std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::maxpool2d(std::size_t window, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool2d;
  s.pool_window = window;
  s.pool_stride = stride == 0 ? window : stride;
  return s;
}

LayerSpec LayerSpec::batchnorm() {
  LayerSpec s;
  s.kind = LayerKind::BatchNorm;
  return s;
}

LayerSpec LayerSpec::dropout(double p) {
  LayerSpec s;
  s.kind = LayerKind::Dropout;
  s.drop_p = p;
  return s;
}

LayerSpec LayerSpec::voting(std::size_t classes, std::size_t population) {
  LayerSpec s;
  s.kind = LayerKind::Voting;
  s.classes = classes;
  s.population = population;
  s.out_features = classes * population;
  return s;
}

Tensor dense_forward(const Tensor& spikes_in, const LayerParams& p) {
  if (p.W.rank() != 2) {
    throw ShapeError("dense_forward: weight tensor must be a matrix");
  }
  const std::size_t out = p.W.dim(0);
  const std::size_t in = p.W.dim(1);
  if (spikes_in.numel() != in) {
    throw ShapeError("dense_forward: input width " + std::to_string(spikes_in.numel()) +
                     " does not match weight columns " + std::to_string(in));
  }
  Tensor x({out});
  MatMap w(p.W.data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  VecMap o(spikes_in.data(), static_cast<Eigen::Index>(in));
  VecMutMap xv(x.data(), static_cast<Eigen::Index>(out));
  xv.noalias() = w * o;
  return x;
}

Tensor conv2d_forward(const Tensor& frames_in, const LayerParams& p,
                      std::size_t stride, std::size_t padding) {
  if (frames_in.rank() != 3) {
    throw ShapeError("conv2d_forward: input must be [channels][height][width]");
  }
  if (p.W.rank() != 4 || p.W.dim(2) != p.W.dim(3)) {
    throw ShapeError("conv2d_forward: kernel tensor must be [out_ch][in_ch][k][k]");
  }
  if (stride == 0) {
    throw ConfigError("conv2d_forward: stride must be positive");
  }
  const std::size_t ic = frames_in.dim(0);
  const std::size_t h = frames_in.dim(1);
  const std::size_t w = frames_in.dim(2);
  const std::size_t oc = p.W.dim(0);
  const std::size_t k = p.W.dim(2);
  if (p.W.dim(1) != ic) {
    throw ShapeError("conv2d_forward: kernel expects " + std::to_string(p.W.dim(1)) +
                     " input channels, got " + std::to_string(ic));
  }
  if (h + 2 * padding < k || w + 2 * padding < k) {
    throw ShapeError("conv2d_forward: kernel larger than padded input");
  }
  const std::size_t oh = (h + 2 * padding - k) / stride + 1;
  const std::size_t ow = (w + 2 * padding - k) / stride + 1;

  Tensor out({oc, oh, ow});
  detail::conv2d_sample_forward(frames_in.data(), ic, h, w, p.W.data(), oc, k, stride,
                                padding, out.data(), oh, ow);
  return out;
}

BatchNormResult batchnorm_forward(const Tensor& x, LayerParams& p, bool train) {
  if (x.rank() < 2) {
    throw ShapeError("batchnorm_forward: input must be [batch][channels]...");
  }
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  if (n == 0 || x.numel() == 0) {
    throw EmptyInputError("batchnorm_forward: empty batch");
  }
  if (p.bn_gamma.numel() != c || p.bn_beta.numel() != c ||
      p.bn_running_mean.numel() != c || p.bn_running_var.numel() != c) {
    throw ShapeError("batchnorm_forward: parameter width does not match channel count " +
                     std::to_string(c));
  }
  const std::size_t spatial = x.numel() / (n * c);
  if (train && n * spatial < 2) {
    throw NumericError(
        "batchnorm_forward: train mode needs more than one value per channel");
  }

  BatchNormResult r{Tensor(x.shape()), Tensor(x.shape()), Tensor({c}), Tensor({c})};
  detail::bn_forward_raw(x.data(), n, c, spatial, p, train, r.y.data(), r.x_hat.data(),
                         r.mean.data(), r.var.data());
  return r;
}

Tensor batchnorm_backward(const Tensor& grad_y, const Tensor& x_hat,
                          const Tensor& var, const LayerParams& p,
                          bool train_stats, Tensor* dgamma, Tensor* dbeta) {
  require_shape(x_hat, grad_y.shape(), "batchnorm_backward x_hat");
  if (grad_y.rank() < 2) {
    throw ShapeError("batchnorm_backward: gradient must be [batch][channels]...");
  }
  const std::size_t n = grad_y.dim(0);
  const std::size_t c = grad_y.dim(1);
  const std::size_t spatial = grad_y.numel() / (n * c);
  if (var.numel() != c || p.bn_gamma.numel() != c) {
    throw ShapeError("batchnorm_backward: channel width mismatch");
  }

  Tensor dx(grad_y.shape());
  if (dgamma != nullptr) *dgamma = Tensor::zeros({c});
  if (dbeta != nullptr) *dbeta = Tensor::zeros({c});
  detail::bn_backward_raw(grad_y.data(), x_hat.data(), var.data(), p, train_stats, n, c,
                          spatial, dx.data(), dgamma != nullptr ? dgamma->data() : nullptr,
                          dbeta != nullptr ? dbeta->data() : nullptr);
  return dx;
}

MaxPoolResult maxpool_forward(const Tensor& spikes_in, std::size_t window,
                              std::size_t stride) {
  if (spikes_in.rank() != 3) {
    throw ShapeError("maxpool_forward: input must be [channels][height][width]");
  }
  if (window == 0 || stride == 0) {
    throw ConfigError("maxpool_forward: window and stride must be positive");
  }
  const std::size_t c = spikes_in.dim(0);
  const std::size_t h = spikes_in.dim(1);
  const std::size_t w = spikes_in.dim(2);
  if (h < window || w < window || (h - window) % stride != 0 ||
      (w - window) % stride != 0) {
    throw ShapeError("maxpool_forward: spatial dims " + std::to_string(h) + "x" +
                     std::to_string(w) + " not divisible by window " +
                     std::to_string(window) + " stride " + std::to_string(stride));
  }
  const std::size_t oh = (h - window) / stride + 1;
  const std::size_t ow = (w - window) / stride + 1;

  MaxPoolResult r{Tensor({c, oh, ow}), {}};
  r.argmax.resize(c * oh * ow);
  detail::maxpool_sample_forward(spikes_in.data(), c, h, w, window, stride,
                                 r.pooled.data(), r.argmax.data(), oh, ow);
  return r;
}

Tensor dropout_mask(std::size_t width, double p_drop, RngEngine& rng, bool train) {
  if (p_drop < 0.0 || p_drop >= 1.0) {
    throw ConfigError("dropout_mask: drop probability must lie in [0,1)");
  }
  Tensor mask = Tensor::full({width}, 1.0);
  if (!train || p_drop == 0.0) {
    return mask;
  }
  const double keep_scale = 1.0 / (1.0 - p_drop);
  for (std::size_t i = 0; i < width; ++i) {
    mask[i] = bernoulli_draw(rng, p_drop) ? 0.0 : keep_scale;
  }
  return mask;
}

}  // namespace stlsnn
