#include "stlsnn/network.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <string>

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

Tensor init_weights(const std::vector<std::size_t>& shape, std::size_t fan_in,
                    RngEngine& rng) {
  Tensor w(shape);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : w) v = uniform_real(rng, -bound, bound);
  return w;
}

}  // namespace

std::size_t Stage::core_units() const { return prod(core_shape); }
std::size_t Stage::out_units() const { return prod(out_shape); }

const Stage& Network::output_stage() const {
  if (stages.empty()) throw ConfigError("network has no stages");
  return stages.back();
}

const Tensor& ForwardCache::output_spikes() const {
  if (stages.empty()) throw ConsistencyError("forward cache holds no stages");
  return stages.back().o_spike;
}

Network build_network(const std::vector<LayerSpec>& chain,
                      const std::vector<std::size_t>& input_shape,
                      const LifConstants& lif, const SurrogateSpec& surrogate,
                      double v_th0, RngEngine& weight_rng) {
  lif.validate();
  surrogate.validate();
  if (!std::isfinite(v_th0)) {
    throw ConfigError("initial threshold must be finite");
  }
  if (chain.empty()) {
    throw ConfigError("layer chain is empty");
  }
  if (input_shape.empty()) {
    throw ShapeError("input shape is empty");
  }
  for (std::size_t d : input_shape) {
    if (d == 0) throw ShapeError("input shape has a zero dimension");
  }

  Network net;
  net.lif = lif;
  net.surrogate = surrogate;
  net.input_shape = input_shape;

  std::vector<std::size_t> signal = input_shape;
  bool voting_seen = false;

  for (const LayerSpec& spec : chain) {
    switch (spec.kind) {
      case LayerKind::Encoding: {
        if (!net.stages.empty()) {
          throw ConfigError("encoding layer must be the first layer");
        }
        Stage st;
        st.kind = LayerKind::Encoding;
        st.spec = spec;
        st.in_shape = signal;
        st.core_shape = signal;
        st.out_shape = signal;
        const std::size_t vth_units = signal.size() == 3 ? signal[0] : prod(signal);
        st.params.v_th = Tensor::full({vth_units}, v_th0);
        net.stages.push_back(std::move(st));
        break;
      }
      case LayerKind::Dense:
      case LayerKind::Voting: {
        if (voting_seen) {
          throw ConfigError("voting layer must be the last layer");
        }
        const std::size_t in = prod(signal);
        std::size_t out = spec.out_features;
        if (spec.kind == LayerKind::Voting) {
          if (spec.classes == 0 || spec.population == 0) {
            throw ConfigError("voting layer needs positive class and population counts");
          }
          out = spec.classes * spec.population;
          voting_seen = true;
          net.classes = spec.classes;
          net.population = spec.population;
        }
        if (out == 0) {
          throw ConfigError("dense layer needs a positive output width");
        }
        if (spec.in_features != 0 && spec.in_features != in) {
          throw ShapeError("dense layer declared input width " +
                           std::to_string(spec.in_features) +
                           " but receives " + std::to_string(in));
        }
        Stage st;
        st.kind = spec.kind;
        st.spec = spec;
        st.spec.in_features = in;
        st.spec.out_features = out;
        st.in_shape = signal;
        st.core_shape = {out};
        st.out_shape = {out};
        st.params.W = init_weights({out, in}, in, weight_rng);
        st.params.v_th = Tensor::full({out}, v_th0);
        net.stages.push_back(std::move(st));
        signal = {out};
        break;
      }
      case LayerKind::Conv2d: {
        if (voting_seen) {
          throw ConfigError("voting layer must be the last layer");
        }
        if (signal.size() != 3) {
          throw ShapeError("conv layer needs [channels][height][width] input");
        }
        const std::size_t ic = signal[0];
        if (spec.in_channels != 0 && spec.in_channels != ic) {
          throw ShapeError("conv layer declared " + std::to_string(spec.in_channels) +
                           " input channels but receives " + std::to_string(ic));
        }
        if (spec.out_channels == 0 || spec.kernel == 0) {
          throw ConfigError("conv layer needs positive channel and kernel sizes");
        }
        if (spec.stride == 0) {
          throw ConfigError("conv stride must be positive");
        }
        const std::size_t h = signal[1];
        const std::size_t w = signal[2];
        const std::size_t k = spec.kernel;
        const std::size_t pad = spec.padding;
        if (h + 2 * pad < k || w + 2 * pad < k) {
          throw ShapeError("conv kernel larger than padded input");
        }
        const std::size_t oh = (h + 2 * pad - k) / spec.stride + 1;
        const std::size_t ow = (w + 2 * pad - k) / spec.stride + 1;
        Stage st;
        st.kind = LayerKind::Conv2d;
        st.spec = spec;
        st.spec.in_channels = ic;
        st.in_shape = signal;
        st.core_shape = {spec.out_channels, oh, ow};
        st.out_shape = st.core_shape;
        st.params.W =
            init_weights({spec.out_channels, ic, k, k}, ic * k * k, weight_rng);
        st.params.v_th = Tensor::full({spec.out_channels}, v_th0);
        net.stages.push_back(std::move(st));
        signal = {spec.out_channels, oh, ow};
        break;
      }
      case LayerKind::BatchNorm: {
        if (net.stages.empty()) {
          throw ConfigError("batch norm cannot start the chain");
        }
        Stage& st = net.stages.back();
        if (st.kind != LayerKind::Dense && st.kind != LayerKind::Conv2d) {
          throw ConfigError("batch norm must directly follow a conv or dense layer");
        }
        if (st.params.has_bn()) {
          throw ConfigError("layer already has batch norm");
        }
        if (st.has_pool || st.has_dropout) {
          throw ConfigError("batch norm must directly follow its layer");
        }
        const std::size_t c = st.core_shape[0];
        st.params.bn_gamma = Tensor::full({c}, 1.0);
        st.params.bn_beta = Tensor::zeros({c});
        st.params.bn_running_mean = Tensor::zeros({c});
        st.params.bn_running_var = Tensor::full({c}, 1.0);
        break;
      }
      case LayerKind::MaxPool2d: {
        if (net.stages.empty()) {
          throw ConfigError("max pooling cannot start the chain");
        }
        Stage& st = net.stages.back();
        if (st.has_pool) {
          throw ConfigError("layer already has max pooling");
        }
        if (st.has_dropout) {
          throw ConfigError("max pooling must precede dropout within a block");
        }
        if (st.out_shape.size() != 3) {
          throw ShapeError("max pooling needs [channels][height][width] spikes");
        }
        const std::size_t window = spec.pool_window;
        const std::size_t stride = spec.pool_stride == 0 ? window : spec.pool_stride;
        if (window == 0 || stride == 0) {
          throw ConfigError("max pooling needs positive window and stride");
        }
        const std::size_t h = st.out_shape[1];
        const std::size_t w = st.out_shape[2];
        if (h < window || w < window || (h - window) % stride != 0 ||
            (w - window) % stride != 0) {
          throw ShapeError("max pooling window " + std::to_string(window) + " stride " +
                           std::to_string(stride) + " does not tile " +
                           std::to_string(h) + "x" + std::to_string(w));
        }
        st.has_pool = true;
        st.pool_window = window;
        st.pool_stride = stride;
        st.out_shape = {st.out_shape[0], (h - window) / stride + 1,
                        (w - window) / stride + 1};
        signal = st.out_shape;
        break;
      }
      case LayerKind::Dropout: {
        if (net.stages.empty()) {
          throw ConfigError("dropout cannot start the chain");
        }
        Stage& st = net.stages.back();
        if (st.kind == LayerKind::Voting) {
          throw ConfigError("dropout cannot follow the voting layer");
        }
        if (st.has_dropout) {
          throw ConfigError("layer already has dropout");
        }
        if (!(spec.drop_p >= 0.0 && spec.drop_p < 1.0)) {
          throw ConfigError("dropout rate must lie in [0,1)");
        }
        st.has_dropout = true;
        st.drop_p = spec.drop_p;
        break;
      }
    }
  }
  return net;
}

ForwardCache network_forward(Network& net, const Tensor& input, std::size_t T,
                             RunMode mode, RngEngine* dropout_rng) {
  if (net.stages.empty()) {
    throw ConfigError("network has no stages");
  }
  if (T == 0) {
    throw ConfigError("presentation window T must be at least 1");
  }
  const std::vector<std::size_t>& ishape = net.input_shape;
  const std::size_t irank = ishape.size();
  const std::size_t ielem = prod(ishape);

  bool time_major = false;
  std::size_t S = 0;
  if (input.rank() == irank + 1) {
    S = input.dim(0);
  } else if (input.rank() == irank + 2) {
    time_major = true;
    if (input.dim(0) != T) {
      throw ShapeError("input window length " + std::to_string(input.dim(0)) +
                       " does not match T=" + std::to_string(T));
    }
    S = input.dim(1);
  } else {
    throw ShapeError("input rank " + std::to_string(input.rank()) +
                     " does not match the network input shape");
  }
  const std::size_t off = time_major ? 2 : 1;
  for (std::size_t i = 0; i < irank; ++i) {
    if (input.dim(off + i) != ishape[i]) {
      throw ShapeError("input dimension " + std::to_string(i) + " is " +
                       std::to_string(input.dim(off + i)) + ", expected " +
                       std::to_string(ishape[i]));
    }
  }
  if (S == 0) {
    throw EmptyInputError("network_forward: empty batch");
  }

  ForwardCache cache;
  cache.mode = mode;
  cache.T = T;
  cache.S = S;
  cache.input = Tensor(with_time_batch(T, S, ishape));
  if (time_major) {
    std::memcpy(cache.input.data(), input.data(), input.numel() * sizeof(double));
  } else {
    for (std::size_t t = 0; t < T; ++t) {
      std::memcpy(cache.input.data() + t * S * ielem, input.data(),
                  S * ielem * sizeof(double));
    }
  }

  const double lam = net.lif.leak();
  const bool train = mode == RunMode::Train;
  const bool soft = mode == RunMode::Soft;
  const std::size_t TS = T * S;

  cache.stages.resize(net.stages.size());
  const Tensor* cur = &cache.input;

  for (std::size_t si = 0; si < net.stages.size(); ++si) {
    Stage& st = net.stages[si];
    StageCache& sc = cache.stages[si];
    const std::size_t in_units = prod(st.in_shape);
    const std::size_t units = st.core_units();
    const std::vector<std::size_t> core_ts = with_time_batch(T, S, st.core_shape);

    // 1. Linear map (or pass-through for the encoding stage).
    Tensor pre(core_ts);
    switch (st.kind) {
      case LayerKind::Encoding:
        std::memcpy(pre.data(), cur->data(), cur->numel() * sizeof(double));
        break;
      case LayerKind::Dense:
      case LayerKind::Voting: {
        MatMap x(cur->data(), static_cast<Eigen::Index>(TS),
                 static_cast<Eigen::Index>(in_units));
        MatMap w(st.params.W.data(), static_cast<Eigen::Index>(units),
                 static_cast<Eigen::Index>(in_units));
        MutMatMap p(pre.data(), static_cast<Eigen::Index>(TS),
                    static_cast<Eigen::Index>(units));
        p.noalias() = x * w.transpose();
        break;
      }
      case LayerKind::Conv2d: {
        const std::size_t ic = st.in_shape[0];
        const std::size_t h = st.in_shape[1];
        const std::size_t w = st.in_shape[2];
        const std::size_t oc = st.core_shape[0];
        const std::size_t oh = st.core_shape[1];
        const std::size_t ow = st.core_shape[2];
        for (std::size_t ts = 0; ts < TS; ++ts) {
          detail::conv2d_sample_forward(cur->data() + ts * in_units, ic, h, w,
                                        st.params.W.data(), oc, st.spec.kernel,
                                        st.spec.stride, st.spec.padding,
                                        pre.data() + ts * units, oh, ow);
        }
        break;
      }
      default:
        throw ConsistencyError("non-spiking stage in network");
    }

    // 2. Fused batch normalization of the scaled input.
    if (st.params.has_bn()) {
      const std::size_t c = st.core_shape[0];
      const std::size_t sp = units / c;
      if (train && TS * sp < 2) {
        throw NumericError("batch norm in stage " + std::to_string(si + 1) +
                           " needs more than one value per channel");
      }
      sc.x = Tensor(core_ts);
      sc.x_hat = Tensor(core_ts);
      sc.bn_mean = Tensor({c});
      sc.bn_var = Tensor({c});
      detail::bn_forward_raw(pre.data(), TS, c, sp, st.params, train, sc.x.data(),
                             sc.x_hat.data(), sc.bn_mean.data(), sc.bn_var.data());
    } else {
      sc.x = std::move(pre);
    }

    // 3. Iterative LIF update over the window.
    sc.u = Tensor(core_ts);
    sc.o_spike = Tensor(core_ts);
    sc.alpha = Tensor(core_ts);
    const std::size_t block = S * units;
    const std::size_t sp_per_th = units / st.params.v_th.numel();
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t s = 0; s < S; ++s) {
        const std::size_t base = t * block + s * units;
        const std::size_t prev = base - block;
        for (std::size_t i = 0; i < units; ++i) {
          double a = lam;
          if (!soft && t > 0 && sc.o_spike.data()[prev + i] != 0.0) {
            a = 0.0;
          }
          const double u_prev = t == 0 ? 0.0 : sc.u.data()[prev + i];
          const double u = a * u_prev + sc.x.data()[base + i];
          sc.alpha.data()[base + i] = a;
          sc.u.data()[base + i] = u;
          const double th = st.params.v_th[i / sp_per_th];
          sc.o_spike.data()[base + i] =
              soft ? surrogate_value(u, th, net.surrogate) : (u >= th ? 1.0 : 0.0);
        }
      }
      for (std::size_t j = t * block; j < (t + 1) * block; ++j) {
        if (!std::isfinite(sc.u.data()[j])) {
          throw NumericError("non-finite membrane potential in stage " +
                             std::to_string(si + 1) + " at timestep " +
                             std::to_string(t + 1));
        }
      }
    }

    // 4. Max pooling of the emitted spikes.
    const std::vector<std::size_t> out_ts = with_time_batch(T, S, st.out_shape);
    const std::size_t out_elems = st.out_units();
    if (st.has_pool) {
      sc.o_out = Tensor(out_ts);
      sc.pool_argmax.resize(TS * out_elems);
      const std::size_t c = st.core_shape[0];
      const std::size_t h = st.core_shape[1];
      const std::size_t w = st.core_shape[2];
      const std::size_t oh = st.out_shape[1];
      const std::size_t ow = st.out_shape[2];
      for (std::size_t ts = 0; ts < TS; ++ts) {
        detail::maxpool_sample_forward(sc.o_spike.data() + ts * units, c, h, w,
                                       st.pool_window, st.pool_stride,
                                       sc.o_out.data() + ts * out_elems,
                                       sc.pool_argmax.data() + ts * out_elems, oh, ow);
      }
    } else {
      sc.o_out = sc.o_spike;
    }

    // 5. Dropout: one mask per sample, constant across the window.
    if (st.has_dropout && train) {
      if (dropout_rng == nullptr) {
        throw ConfigError("train-mode forward with dropout needs an rng stream");
      }
      sc.dropout_mask = Tensor({S, out_elems});
      for (std::size_t s = 0; s < S; ++s) {
        const Tensor mask = dropout_mask(out_elems, st.drop_p, *dropout_rng, true);
        std::memcpy(sc.dropout_mask.data() + s * out_elems, mask.data(),
                    out_elems * sizeof(double));
      }
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t s = 0; s < S; ++s) {
          double* row = sc.o_out.data() + (t * S + s) * out_elems;
          const double* mask = sc.dropout_mask.data() + s * out_elems;
          for (std::size_t i = 0; i < out_elems; ++i) row[i] *= mask[i];
        }
      }
    }

    cur = &sc.o_out;
  }
  return cache;
}

Tensor voting_readout(const Tensor& out_spikes, std::size_t classes,
                      std::size_t population, std::size_t T) {
  if (classes == 0 || population == 0 || T == 0) {
    throw ConfigError("voting readout needs positive classes, population and window");
  }
  if (out_spikes.rank() != 2 || out_spikes.dim(0) != T ||
      out_spikes.dim(1) != classes * population) {
    throw ShapeError("voting readout expects [T][classes*population] spikes");
  }
  Tensor p({classes});
  const double denom = static_cast<double>(T) * static_cast<double>(population);
  for (std::size_t c = 0; c < classes; ++c) {
    double count = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const double* row = out_spikes.data() + t * classes * population;
      for (std::size_t i = c * population; i < (c + 1) * population; ++i) {
        count += row[i];
      }
    }
    p[c] = count / denom;
  }
  return p;
}

Tensor readout_rates(const Network& net, const ForwardCache& cache) {
  if (net.classes == 0 || net.population == 0) {
    throw ConfigError("network has no voting layer to read out");
  }
  const Tensor& out = cache.output_spikes();
  const std::size_t width = net.classes * net.population;
  if (out.rank() != 3 || out.dim(2) != width) {
    throw ConsistencyError("cached output spikes do not match the voting layer");
  }
  const std::size_t T = cache.T;
  const std::size_t S = cache.S;
  Tensor rates({S, net.classes});
  const double denom = static_cast<double>(T) * static_cast<double>(net.population);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t c = 0; c < net.classes; ++c) {
      double count = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const double* row = out.data() + (t * S + s) * width;
        for (std::size_t i = c * net.population; i < (c + 1) * net.population; ++i) {
          count += row[i];
        }
      }
      rates.data()[s * net.classes + c] = count / denom;
    }
  }
  return rates;
}

std::size_t predict_class(const Tensor& rates) {
  if (rates.numel() == 0) {
    throw EmptyInputError("predict_class: empty rate vector");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < rates.numel(); ++i) {
    if (rates.data()[i] > rates.data()[best]) best = i;  // ties keep the lowest index
  }
  return best;
}

double average_firing_rate(const ForwardCache& cache) {
  double spikes = 0.0;
  std::size_t slots = 0;
  for (const StageCache& sc : cache.stages) {
    for (const double v : sc.o_spike) spikes += v;
    slots += sc.o_spike.numel();
  }
  if (slots == 0) {
    throw ConsistencyError("average_firing_rate: cache holds no spikes");
  }
  return spikes / static_cast<double>(slots);
}

}  // namespace stlsnn
