// Internal raw-buffer kernels shared by the single-sample layer ops and the
// batched network engine. Not installed; include only from src/.
#pragma once

#include <cmath>
#include <cstddef>

#include "stlsnn/layers.hpp"

namespace stlsnn::detail {

// Cross-correlation of one [ic][h][w] sample with kernels [oc][ic][k][k],
// writing [oc][oh][ow]. Output size must be precomputed by the caller as
// floor((dim + 2*pad - k)/stride) + 1.
inline void conv2d_sample_forward(const double* in, std::size_t ic, std::size_t h,
                                  std::size_t w, const double* kern, std::size_t oc,
                                  std::size_t k, std::size_t stride, std::size_t pad,
                                  double* out, std::size_t oh, std::size_t ow) {
  for (std::size_t co = 0; co < oc; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (std::size_t ci = 0; ci < ic; ++ci) {
          const double* plane = in + ci * h * w;
          const double* kk = kern + ((co * ic + ci) * k) * k;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              acc += plane[iy * static_cast<std::ptrdiff_t>(w) + ix] * kk[ky * k + kx];
            }
          }
        }
        out[(co * oh + oy) * ow + ox] = acc;
      }
    }
  }
}

// Accumulates dL/d(input) of the above into g_in (g_in must be pre-zeroed or
// hold a running sum).
inline void conv2d_sample_input_grad(const double* g_out, std::size_t oc, std::size_t oh,
                                     std::size_t ow, const double* kern, std::size_t ic,
                                     std::size_t k, std::size_t stride, std::size_t pad,
                                     double* g_in, std::size_t h, std::size_t w) {
  for (std::size_t co = 0; co < oc; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double g = g_out[(co * oh + oy) * ow + ox];
        if (g == 0.0) continue;
        for (std::size_t ci = 0; ci < ic; ++ci) {
          double* plane = g_in + ci * h * w;
          const double* kk = kern + ((co * ic + ci) * k) * k;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              plane[iy * static_cast<std::ptrdiff_t>(w) + ix] += g * kk[ky * k + kx];
            }
          }
        }
      }
    }
  }
}

// Accumulates dL/d(kernels) into g_kern [oc][ic][k][k].
inline void conv2d_sample_weight_grad(const double* g_out, std::size_t oc, std::size_t oh,
                                      std::size_t ow, const double* in, std::size_t ic,
                                      std::size_t h, std::size_t w, std::size_t k,
                                      std::size_t stride, std::size_t pad, double* g_kern) {
  for (std::size_t co = 0; co < oc; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double g = g_out[(co * oh + oy) * ow + ox];
        if (g == 0.0) continue;
        for (std::size_t ci = 0; ci < ic; ++ci) {
          const double* plane = in + ci * h * w;
          double* kk = g_kern + ((co * ic + ci) * k) * k;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              kk[ky * k + kx] += g * plane[iy * static_cast<std::ptrdiff_t>(w) + ix];
            }
          }
        }
      }
    }
  }
}

// Max pool of one [c][h][w] sample; writes pooled [c][oh][ow] and the flat
// index (within the sample) of the first maximal element of each window.
inline void maxpool_sample_forward(const double* in, std::size_t c, std::size_t h,
                                   std::size_t w, std::size_t window, std::size_t stride,
                                   double* out, std::size_t* argmax, std::size_t oh,
                                   std::size_t ow) {
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = in + ch * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double best = plane[(oy * stride) * w + ox * stride];
        std::size_t best_idx = (oy * stride) * w + ox * stride;
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t idx = (oy * stride + ky) * w + (ox * stride + kx);
            if (plane[idx] > best) {  // strict: first maximal element wins ties
              best = plane[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t out_idx = (ch * oh + oy) * ow + ox;
        out[out_idx] = best;
        argmax[out_idx] = ch * h * w + best_idx;
      }
    }
  }
}

// Batch normalization over n rows of c channels with `sp` values per channel
// (layout [n][c][sp]). Writes y, x_hat and the per-channel statistics used;
// in train mode also updates the running statistics in `p`.
void bn_forward_raw(const double* x, std::size_t n, std::size_t c, std::size_t sp,
                    LayerParams& p, bool train, double* y, double* x_hat, double* mean,
                    double* var);

// Backward of the above given dL/dy; writes dx and (if non-null) per-channel
// dgamma/dbeta. `train_stats` enables the batch-statistics chain rule.
void bn_backward_raw(const double* g_y, const double* x_hat, const double* var,
                     const LayerParams& p, bool train_stats, std::size_t n, std::size_t c,
                     std::size_t sp, double* dx, double* dgamma, double* dbeta);

}  // namespace stlsnn::detail
