#include "stlsnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>
#include <vector>

#include "stlsnn/data.hpp"
#include "stlsnn/error.hpp"
#include "stlsnn/loss.hpp"

namespace stlsnn {

void TrainConfig::validate() const {
  LifConstants(tau, dt);  // throws on a bad tau/dt pair
  surrogate.validate();
  if (v_th0 <= 0.0) throw ConfigError("initial threshold must be positive");
  if (T == 0) throw ConfigError("window length T must be at least 1");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (eta0 < 0.0) throw ConfigError("initial learning rate must be non-negative");
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw ConfigError("learning-rate decay must lie in (0,1]");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw ConfigError("dropout probability must lie in [0,1)");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam moment decays must lie in [0,1)");
  }
  if (adam_eps <= 0.0) throw ConfigError("Adam epsilon must be positive");
}

double lr_schedule(double eta0, double gamma, std::size_t epoch) {
  return eta0 * std::pow(gamma, static_cast<double>(epoch));
}

OptimizerState OptimizerState::init(const Network& net) {
  OptimizerState state;
  state.stages.resize(net.stages.size());
  for (std::size_t i = 0; i < net.stages.size(); ++i) {
    const LayerParams& p = net.stages[i].params;
    StageMoments& m = state.stages[i];
    if (!p.W.empty()) {
      m.w_m = Tensor::zeros(p.W.shape());
      m.w_v = Tensor::zeros(p.W.shape());
    }
    if (!p.v_th.empty()) {
      m.vth_m = Tensor::zeros(p.v_th.shape());
      m.vth_v = Tensor::zeros(p.v_th.shape());
    }
    if (p.has_bn()) {
      m.gamma_m = Tensor::zeros(p.bn_gamma.shape());
      m.gamma_v = Tensor::zeros(p.bn_gamma.shape());
      m.beta_m = Tensor::zeros(p.bn_beta.shape());
      m.beta_v = Tensor::zeros(p.bn_beta.shape());
    }
  }
  return state;
}

namespace {

void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v,
                 double lr, double beta1, double beta2, double eps,
                 double bias1, double bias2) {
  if (!param.same_shape(grad) || !param.same_shape(m) || !param.same_shape(v)) {
    throw ShapeError("optimizer state does not match parameter shape");
  }
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double g = grad[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace

void optimizer_step(Network& net, const GradientSet& grads,
                    OptimizerState& state, double lr, const TrainConfig& cfg) {
  if (grads.stages.size() != net.stages.size() ||
      state.stages.size() != net.stages.size()) {
    throw ConsistencyError("optimizer state/gradients do not match the network");
  }
  state.step += 1;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < net.stages.size(); ++i) {
    LayerParams& p = net.stages[i].params;
    const StageGrads& g = grads.stages[i];
    StageMoments& m = state.stages[i];
    if (!p.W.empty() && p.learnable_w) {
      adam_update(p.W, g.dW, m.w_m, m.w_v, lr, cfg.beta1, cfg.beta2,
                  cfg.adam_eps, bias1, bias2);
    }
    if (!p.v_th.empty() && p.learnable_vth) {
      adam_update(p.v_th, g.dVth, m.vth_m, m.vth_v, lr, cfg.beta1, cfg.beta2,
                  cfg.adam_eps, bias1, bias2);
    }
    if (p.has_bn()) {
      adam_update(p.bn_gamma, g.dGamma, m.gamma_m, m.gamma_v, lr, cfg.beta1,
                  cfg.beta2, cfg.adam_eps, bias1, bias2);
      adam_update(p.bn_beta, g.dBeta, m.beta_m, m.beta_v, lr, cfg.beta1,
                  cfg.beta2, cfg.adam_eps, bias1, bias2);
    }
  }
}

const char* encoding_kind_name(EncodingKind k) {
  switch (k) {
    case EncodingKind::Direct: return "direct";
    case EncodingKind::Bernoulli: return "bernoulli";
    case EncodingKind::Frames: return "frames";
  }
  throw ConfigError("unknown encoding kind");
}

EncodingKind parse_encoding_kind(const std::string& text) {
  if (text == "direct") return EncodingKind::Direct;
  if (text == "bernoulli") return EncodingKind::Bernoulli;
  if (text == "frames") return EncodingKind::Frames;
  throw ConfigError("unknown encoding kind '" + text + "'");
}

std::vector<std::size_t> SampleSet::sample_shape() const {
  const std::size_t lead = encoding == EncodingKind::Frames ? 2 : 1;
  if (inputs.rank() < lead + 1) {
    throw ShapeError("sample set inputs have too few dimensions");
  }
  return std::vector<std::size_t>(inputs.shape().begin() + lead,
                                  inputs.shape().end());
}

void SampleSet::validate() const {
  sample_shape();  // rank check
  if (inputs.dim(0) != labels.size()) {
    throw ConsistencyError("sample count " + std::to_string(inputs.dim(0)) +
                           " does not match label count " +
                           std::to_string(labels.size()));
  }
  if (encoding == EncodingKind::Bernoulli) {
    for (const double p : inputs) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw RangeError("spike-probability inputs must lie in [0,1]");
      }
    }
  }
}

Tensor assemble_batch(const SampleSet& data,
                      const std::vector<std::size_t>& indices, std::size_t T,
                      RngEngine* encoder_rng) {
  if (indices.empty()) throw EmptyInputError("empty batch");
  if (T == 0) throw ConfigError("window length T must be at least 1");
  for (const std::size_t idx : indices) {
    if (idx >= data.count()) {
      throw RangeError("batch index " + std::to_string(idx) +
                       " out of range for " + std::to_string(data.count()) +
                       " samples");
    }
  }
  const std::vector<std::size_t> shape = data.sample_shape();
  const std::size_t unit = Tensor::numel(shape);
  const std::size_t S = indices.size();

  if (data.encoding == EncodingKind::Direct) {
    std::vector<std::size_t> out_shape{S};
    out_shape.insert(out_shape.end(), shape.begin(), shape.end());
    Tensor out(out_shape);
    for (std::size_t s = 0; s < S; ++s) {
      std::memcpy(out.data() + s * unit, data.inputs.data() + indices[s] * unit,
                  unit * sizeof(double));
    }
    return out;
  }

  std::vector<std::size_t> out_shape{T, S};
  out_shape.insert(out_shape.end(), shape.begin(), shape.end());
  Tensor out(out_shape);

  if (data.encoding == EncodingKind::Frames) {
    if (data.inputs.dim(1) != T) {
      throw ConsistencyError("frame sets carry " +
                             std::to_string(data.inputs.dim(1)) +
                             " timesteps but the window is " + std::to_string(T));
    }
    for (std::size_t s = 0; s < S; ++s) {
      const double* src = data.inputs.data() + indices[s] * T * unit;
      for (std::size_t t = 0; t < T; ++t) {
        std::memcpy(out.data() + (t * S + s) * unit, src + t * unit,
                    unit * sizeof(double));
      }
    }
    return out;
  }

  // Bernoulli: encode each selected sample once, in batch order.
  if (encoder_rng == nullptr) {
    throw ConfigError("Bernoulli encoding needs a random stream");
  }
  Tensor image(shape);
  for (std::size_t s = 0; s < S; ++s) {
    std::memcpy(image.data(), data.inputs.data() + indices[s] * unit,
                unit * sizeof(double));
    const Tensor train = bernoulli_encode(image, T, *encoder_rng);
    for (std::size_t t = 0; t < T; ++t) {
      std::memcpy(out.data() + (t * S + s) * unit, train.data() + t * unit,
                  unit * sizeof(double));
    }
  }
  return out;
}

namespace {

struct BatchStats {
  double loss_sum = 0.0;    // sum over samples of per-sample loss share
  double correct = 0.0;     // correctly classified samples
  double spike_sum = 0.0;   // afr numerator, weighted by sample count
  double samples = 0.0;

  void absorb(const Network& net, const ForwardCache& cache, double batch_loss,
              const Tensor& rates, const std::vector<std::size_t>& labels) {
    const double S = static_cast<double>(labels.size());
    loss_sum += batch_loss * S;
    for (std::size_t s = 0; s < labels.size(); ++s) {
      Tensor row({net.classes});
      for (std::size_t c = 0; c < net.classes; ++c) row[c] = rates[s * net.classes + c];
      if (predict_class(row) == labels[s]) correct += 1.0;
    }
    spike_sum += average_firing_rate(cache) * S;
    samples += S;
  }

  void fill(MetricsRecord& rec) const {
    rec.loss = loss_sum / samples;
    rec.top1 = correct / samples;
    rec.afr = spike_sum / samples;
  }
};

std::vector<std::size_t> gather_labels(const SampleSet& data,
                                       const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = data.labels[idx[i]];
  return out;
}

}  // namespace

MetricsRecord train_epoch(Network& net, const SampleSet& data,
                          const TrainConfig& cfg, std::size_t epoch,
                          OptimizerState& state, RngBundle& rngs) {
  cfg.validate();
  data.validate();
  if (data.count() == 0) throw EmptyInputError("empty training set");
  if (net.classes == 0) throw ConfigError("training requires a voting readout");

  const double lr = lr_schedule(cfg.eta0, cfg.gamma, epoch);

  // Seeded Fisher-Yates shuffle of the sample order.
  std::vector<std::size_t> order(data.count());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = data.count(); i > 1; --i) {
    std::swap(order[i - 1], order[uniform_index(rngs.batch, i)]);
  }

  BatchStats stats;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < order.size();
       start += cfg.batch_size, ++batch_index) {
    const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
    const std::vector<std::size_t> idx(order.begin() + start,
                                       order.begin() + stop);
    try {
      const Tensor input = assemble_batch(data, idx, cfg.T, &rngs.encoder);
      const ForwardCache cache =
          network_forward(net, input, cfg.T, RunMode::Train, &rngs.dropout);
      const Tensor rates = readout_rates(net, cache);
      const std::vector<std::size_t> labels = gather_labels(data, idx);
      const Tensor y = one_hot(labels, net.classes);
      const LossSpec spec{idx.size(), net.classes, net.population, cfg.T};
      const double batch_loss = mse_loss(rates, y, spec);
      const Tensor seed_grads = loss_grad_output(rates, y, spec);
      GradientSet grads = backward(net, cache, seed_grads);
      apply_mode_mask(grads, cfg.mode);
      optimizer_step(net, grads, state, lr, cfg);
      stats.absorb(net, cache, batch_loss, rates, labels);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (batch " +
                         std::to_string(batch_index) + ")");
    }
  }

  MetricsRecord rec;
  rec.epoch = epoch;
  rec.split = "train";
  rec.lr = lr;
  rec.seed = cfg.seed;
  rec.mode = learning_mode_name(cfg.mode);
  stats.fill(rec);
  return rec;
}

MetricsRecord evaluate(Network& net, const SampleSet& data,
                       const TrainConfig& cfg, std::size_t epoch) {
  cfg.validate();
  data.validate();
  if (data.count() == 0) throw EmptyInputError("empty evaluation set");
  if (net.classes == 0) throw ConfigError("evaluation requires a voting readout");

  RngEngine encoder = make_stream(cfg.seed, "encoder-eval");

  BatchStats stats;
  for (std::size_t start = 0; start < data.count(); start += cfg.batch_size) {
    const std::size_t stop = std::min(data.count(), start + cfg.batch_size);
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor input = assemble_batch(data, idx, cfg.T, &encoder);
    const ForwardCache cache = network_forward(net, input, cfg.T, RunMode::Eval);
    const Tensor rates = readout_rates(net, cache);
    const std::vector<std::size_t> labels = gather_labels(data, idx);
    const Tensor y = one_hot(labels, net.classes);
    const LossSpec spec{idx.size(), net.classes, net.population, cfg.T};
    stats.absorb(net, cache, mse_loss(rates, y, spec), rates, labels);
  }

  MetricsRecord rec;
  rec.epoch = epoch;
  rec.split = "test";
  rec.lr = lr_schedule(cfg.eta0, cfg.gamma, epoch);
  rec.seed = cfg.seed;
  rec.mode = learning_mode_name(cfg.mode);
  stats.fill(rec);
  return rec;
}

std::vector<ThresholdSnapshot> track_thresholds(
    const Network& net, const std::vector<std::size_t>& sample_indices) {
  std::vector<ThresholdSnapshot> snaps;
  for (std::size_t i = 0; i < net.stages.size(); ++i) {
    const Tensor& vth = net.stages[i].params.v_th;
    if (vth.empty()) continue;
    ThresholdSnapshot snap;
    snap.stage = i;
    for (const std::size_t idx : sample_indices) {
      if (idx >= vth.numel()) {
        throw RangeError("threshold index " + std::to_string(idx) +
                         " out of range for stage " + std::to_string(i) +
                         " with " + std::to_string(vth.numel()) + " thresholds");
      }
      snap.sampled.push_back(vth[idx]);
    }
    double sum = 0.0;
    double lo = vth[0], hi = vth[0];
    for (const double v : vth) {
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double n = static_cast<double>(vth.numel());
    snap.mean = sum / n;
    double sq = 0.0;
    for (const double v : vth) sq += (v - snap.mean) * (v - snap.mean);
    snap.stddev = std::sqrt(sq / n);
    snap.hist_lo = lo;
    snap.hist_hi = hi;
    snap.histogram.assign(kThresholdHistogramBins, 0);
    const double width = (hi - lo) / static_cast<double>(kThresholdHistogramBins);
    for (const double v : vth) {
      std::size_t bin = 0;
      if (width > 0.0) {
        bin = std::min(kThresholdHistogramBins - 1,
                       static_cast<std::size_t>((v - lo) / width));
      }
      snap.histogram[bin] += 1;
    }
    snaps.push_back(snap);
  }
  return snaps;
}

void shuffle_thresholds(Network& net, std::uint64_t seed) {
  RngEngine rng = make_stream(seed, "shuffle");
  for (Stage& stage : net.stages) {
    Tensor& vth = stage.params.v_th;
    for (std::size_t i = vth.numel(); i > 1; --i) {
      std::swap(vth[i - 1], vth[uniform_index(rng, i)]);
    }
  }
}

namespace {

void check_ensemble(const std::vector<Network>& members) {
  if (members.empty()) throw EmptyInputError("ensemble has no members");
  const std::size_t C = members.front().classes;
  const std::size_t P = members.front().population;
  if (C == 0) throw ConfigError("ensemble members need a voting readout");
  for (const Network& net : members) {
    if (net.classes != C || net.population != P) {
      throw ConsistencyError("ensemble members disagree on voting geometry");
    }
  }
}

// Per-sample per-class raw spike counts of one member, accumulated in place.
void accumulate_counts(const Network& net, const ForwardCache& cache,
                       Tensor& counts) {
  const Tensor& out = cache.output_spikes();
  const std::size_t C = net.classes, P = net.population;
  for (std::size_t t = 0; t < cache.T; ++t) {
    for (std::size_t s = 0; s < cache.S; ++s) {
      const double* row = out.data() + (t * cache.S + s) * C * P;
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t p = 0; p < P; ++p) {
          counts[s * C + c] += row[c * P + p];
        }
      }
    }
  }
}

}  // namespace

std::size_t jdf_predict(std::vector<Network>& members, const Tensor& input,
                        std::size_t T) {
  check_ensemble(members);
  const std::size_t rank = members.front().input_shape.size();
  std::vector<std::size_t> batched_shape;
  if (input.rank() == rank) {
    batched_shape.push_back(1);  // [shape] -> [S=1][shape]
    batched_shape.insert(batched_shape.end(), input.shape().begin(),
                         input.shape().end());
  } else if (input.rank() == rank + 1 && input.dim(0) == T) {
    batched_shape.push_back(T);  // [T][shape] -> [T][S=1][shape]
    batched_shape.push_back(1);
    batched_shape.insert(batched_shape.end(), input.shape().begin() + 1,
                         input.shape().end());
  } else {
    throw ShapeError("ensemble input must be one sample, static or time-major");
  }
  Tensor batched(batched_shape, std::vector<double>(input.begin(), input.end()));

  const std::size_t C = members.front().classes;
  Tensor counts = Tensor::zeros({1, C});
  for (Network& net : members) {
    const ForwardCache cache = network_forward(net, batched, T, RunMode::Eval);
    accumulate_counts(net, cache, counts);
  }
  return predict_class(counts);
}

MetricsRecord jdf_evaluate(std::vector<Network>& members, const SampleSet& data,
                           const TrainConfig& cfg) {
  check_ensemble(members);
  cfg.validate();
  data.validate();
  if (data.count() == 0) throw EmptyInputError("empty evaluation set");

  RngEngine encoder = make_stream(cfg.seed, "encoder-eval");
  const std::size_t C = members.front().classes;
  const std::size_t P = members.front().population;
  const double k = static_cast<double>(members.size());

  double loss_sum = 0.0, correct = 0.0, afr_sum = 0.0, samples = 0.0;
  for (std::size_t start = 0; start < data.count(); start += cfg.batch_size) {
    const std::size_t stop = std::min(data.count(), start + cfg.batch_size);
    std::vector<std::size_t> idx(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    // Encoded once; every member sees the identical spike train.
    const Tensor input = assemble_batch(data, idx, cfg.T, &encoder);
    const std::size_t S = idx.size();

    Tensor counts = Tensor::zeros({S, C});
    double batch_afr = 0.0;  // mean over members, so k identical copies
    for (Network& net : members) {
      const ForwardCache cache = network_forward(net, input, cfg.T, RunMode::Eval);
      accumulate_counts(net, cache, counts);
      batch_afr += average_firing_rate(cache) / k;
    }
    afr_sum += batch_afr * static_cast<double>(S);

    const std::vector<std::size_t> labels = gather_labels(data, idx);
    for (std::size_t s = 0; s < S; ++s) {
      Tensor row({C});
      for (std::size_t c = 0; c < C; ++c) row[c] = counts[s * C + c];
      if (predict_class(row) == labels[s]) correct += 1.0;
    }
    // Ensemble-mean rates: summed counts / (k * T * P).
    Tensor rates({S, C});
    for (std::size_t i = 0; i < rates.numel(); ++i) {
      rates[i] = counts[i] / (k * static_cast<double>(cfg.T * P));
    }
    const Tensor y = one_hot(labels, C);
    const LossSpec spec{S, C, P, cfg.T};
    loss_sum += mse_loss(rates, y, spec) * static_cast<double>(S);
    samples += static_cast<double>(S);
  }

  MetricsRecord rec;
  rec.epoch = 0;
  rec.split = "test";
  rec.loss = loss_sum / samples;
  rec.top1 = correct / samples;
  rec.afr = afr_sum / samples;
  rec.lr = 0.0;
  rec.seed = cfg.seed;
  rec.mode = learning_mode_name(cfg.mode);
  return rec;
}

}  // namespace stlsnn
