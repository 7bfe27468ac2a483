#include "stlsnn/backward.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "kernels.hpp"
#include "stlsnn/error.hpp"

namespace stlsnn {

namespace {

using MatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                              Eigen::RowMajor>>;
using MutMatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                           Eigen::RowMajor>>;

std::size_t prod(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

std::vector<std::size_t> with_time_batch(std::size_t t, std::size_t s,
                                         const std::vector<std::size_t>& rest) {
  std::vector<std::size_t> shape{t, s};
  shape.insert(shape.end(), rest.begin(), rest.end());
  return shape;
}

void check_finite(const Tensor& t, const std::string& what, std::size_t stage) {
  for (const double v : t) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite " + what + " gradient in stage " +
                         std::to_string(stage + 1));
    }
  }
}

}  // namespace

const char* learning_mode_name(LearningMode m) {
  switch (m) {
    case LearningMode::SL: return "sl";
    case LearningMode::TL: return "tl";
    case LearningMode::STL: return "stl";
  }
  return "unknown";
}

LearningMode parse_learning_mode(const std::string& text) {
  if (text == "sl" || text == "SL") return LearningMode::SL;
  if (text == "tl" || text == "TL") return LearningMode::TL;
  if (text == "stl" || text == "STL") return LearningMode::STL;
  throw ConfigError("unknown learning mode '" + text + "' (expected sl, tl or stl)");
}

GradientSet backward(const Network& net, const ForwardCache& cache,
                     const Tensor& seed_grads) {
  const std::size_t n_stages = net.stages.size();
  if (cache.stages.size() != n_stages) {
    throw ConsistencyError("forward cache does not match the network");
  }
  if (n_stages == 0) {
    throw ConfigError("network has no stages");
  }
  const std::size_t T = cache.T;
  const std::size_t S = cache.S;
  const std::size_t TS = T * S;
  const bool train_bn = cache.mode == RunMode::Train;
  require_shape(seed_grads,
                with_time_batch(T, S, {net.stages.back().core_units()}),
                "backward seed gradients");

  GradientSet grads;
  grads.stages.resize(n_stages);

  // Gradient w.r.t. the current stage's spikes o_spike, [T][S][core units].
  Tensor g_spike = seed_grads;

  for (std::size_t idx = n_stages; idx-- > 0;) {
    const Stage& st = net.stages[idx];
    const StageCache& sc = cache.stages[idx];
    StageGrads& sg = grads.stages[idx];
    const std::size_t units = st.core_units();
    const std::size_t in_units = prod(st.in_shape);
    const std::size_t block = S * units;
    if (sc.u.numel() != TS * units) {
      throw ConsistencyError("cached stage " + std::to_string(idx + 1) +
                             " does not match the network");
    }

    // Reverse LIF sweep: g_x = dL/du per step; thresholds accumulate the
    // negated surrogate term.
    const std::size_t vth_n = st.params.v_th.numel();
    const std::size_t sp_per_th = units / vth_n;
    sg.dVth = Tensor::zeros({vth_n});
    Tensor g_x(sc.u.shape());
    std::vector<double> g_u_next(block, 0.0);
    for (std::size_t t = T; t-- > 0;) {
      const std::size_t base = t * block;
      for (std::size_t j = 0; j < block; ++j) {
        const std::size_t i = j % units;
        const std::size_t th_idx = i / sp_per_th;
        const double sgrad =
            surrogate_grad(sc.u.data()[base + j], st.params.v_th[th_idx], net.surrogate);
        const double go = g_spike.data()[base + j];
        double gu = go * sgrad;
        if (t + 1 < T) {
          gu += sc.alpha.data()[base + block + j] * g_u_next[j];
        }
        g_u_next[j] = gu;
        g_x.data()[base + j] = gu;
        sg.dVth[th_idx] -= go * sgrad;
      }
    }

    // Batch-norm backward over the whole window/batch block.
    Tensor g_pre;
    if (st.params.has_bn()) {
      const std::size_t c = st.core_shape[0];
      const std::size_t sp = units / c;
      sg.dGamma = Tensor::zeros({c});
      sg.dBeta = Tensor::zeros({c});
      g_pre = Tensor(g_x.shape());
      detail::bn_backward_raw(g_x.data(), sc.x_hat.data(), sc.bn_var.data(), st.params,
                              train_bn, TS, c, sp, g_pre.data(), sg.dGamma.data(),
                              sg.dBeta.data());
    } else {
      g_pre = std::move(g_x);
    }

    // Linear backward: weight gradient and gradient into the previous
    // stage's (pooled, masked) outputs.
    const Tensor& o_prev = idx == 0 ? cache.input : cache.stages[idx - 1].o_out;
    Tensor g_prev;
    switch (st.kind) {
      case LayerKind::Encoding:
        break;  // no weights; input carries no gradient
      case LayerKind::Dense:
      case LayerKind::Voting: {
        sg.dW = Tensor({units, in_units});
        MatMap gp(g_pre.data(), static_cast<Eigen::Index>(TS),
                  static_cast<Eigen::Index>(units));
        MatMap op(o_prev.data(), static_cast<Eigen::Index>(TS),
                  static_cast<Eigen::Index>(in_units));
        MutMatMap dw(sg.dW.data(), static_cast<Eigen::Index>(units),
                     static_cast<Eigen::Index>(in_units));
        dw.noalias() = gp.transpose() * op;
        if (idx > 0) {
          g_prev = Tensor(with_time_batch(T, S, st.in_shape));
          MatMap w(st.params.W.data(), static_cast<Eigen::Index>(units),
                   static_cast<Eigen::Index>(in_units));
          MutMatMap gprev(g_prev.data(), static_cast<Eigen::Index>(TS),
                          static_cast<Eigen::Index>(in_units));
          gprev.noalias() = gp * w;
        }
        break;
      }
      case LayerKind::Conv2d: {
        const std::size_t ic = st.in_shape[0];
        const std::size_t h = st.in_shape[1];
        const std::size_t w = st.in_shape[2];
        const std::size_t oc = st.core_shape[0];
        const std::size_t oh = st.core_shape[1];
        const std::size_t ow = st.core_shape[2];
        sg.dW = Tensor::zeros(st.params.W.shape());
        for (std::size_t ts = 0; ts < TS; ++ts) {
          detail::conv2d_sample_weight_grad(g_pre.data() + ts * units, oc, oh, ow,
                                            o_prev.data() + ts * in_units, ic, h, w,
                                            st.spec.kernel, st.spec.stride,
                                            st.spec.padding, sg.dW.data());
        }
        if (idx > 0) {
          g_prev = Tensor::zeros(with_time_batch(T, S, st.in_shape));
          for (std::size_t ts = 0; ts < TS; ++ts) {
            detail::conv2d_sample_input_grad(g_pre.data() + ts * units, oc, oh, ow,
                                             st.params.W.data(), ic, st.spec.kernel,
                                             st.spec.stride, st.spec.padding,
                                             g_prev.data() + ts * in_units, h, w);
          }
        }
        break;
      }
      default:
        throw ConsistencyError("non-spiking stage in network");
    }

    check_finite(sg.dW, "weight", idx);
    check_finite(sg.dVth, "threshold", idx);
    check_finite(sg.dGamma, "bn scale", idx);
    check_finite(sg.dBeta, "bn shift", idx);

    if (idx == 0) break;

    // Route the gradient through the previous stage's dropout mask and
    // max-pool argmax indices to land on its raw spikes.
    const Stage& pst = net.stages[idx - 1];
    const StageCache& psc = cache.stages[idx - 1];
    const std::size_t p_out = pst.out_units();
    if (pst.has_dropout && !psc.dropout_mask.empty()) {
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t s = 0; s < S; ++s) {
          double* row = g_prev.data() + (t * S + s) * p_out;
          const double* mask = psc.dropout_mask.data() + s * p_out;
          for (std::size_t i = 0; i < p_out; ++i) row[i] *= mask[i];
        }
      }
    }
    if (pst.has_pool) {
      Tensor g_ps = Tensor::zeros(with_time_batch(T, S, pst.core_shape));
      const std::size_t p_units = pst.core_units();
      for (std::size_t ts = 0; ts < TS; ++ts) {
        double* dst = g_ps.data() + ts * p_units;
        const double* src = g_prev.data() + ts * p_out;
        const std::size_t* arg = psc.pool_argmax.data() + ts * p_out;
        for (std::size_t e = 0; e < p_out; ++e) {
          dst[arg[e]] += src[e];
        }
      }
      g_spike = std::move(g_ps);
    } else {
      g_spike = std::move(g_prev);
    }
  }
  return grads;
}

void apply_mode_mask(GradientSet& grads, LearningMode mode) {
  if (mode == LearningMode::STL) return;
  for (StageGrads& sg : grads.stages) {
    if (mode == LearningMode::SL) {
      sg.dVth.fill(0.0);
    } else {  // TL freezes weights and the BN affine pair
      sg.dW.fill(0.0);
      sg.dGamma.fill(0.0);
      sg.dBeta.fill(0.0);
    }
  }
}

}  // namespace stlsnn
