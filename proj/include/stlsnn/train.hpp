#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stlsnn/backward.hpp"
#include "stlsnn/network.hpp"
#include "stlsnn/rng.hpp"
#include "stlsnn/tensor.hpp"

namespace stlsnn {

// Experiment hyperparameters. The defaults reproduce the reference recipe:
// threshold 2.0, tau 2.0 ms, dt 1 ms, batch 50, eta0 1e-3 decayed by 0.93
// per epoch, dropout 0.5, Adam(0.9, 0.999, 1e-8).
struct TrainConfig {
  double v_th0 = 2.0;
  double tau = 2.0;
  double dt = 1.0;
  std::size_t T = 8;
  std::size_t batch_size = 50;
  std::size_t epochs = 1;
  double eta0 = 0.001;
  double gamma = 0.93;
  double dropout_p = 0.5;
  LearningMode mode = LearningMode::STL;
  SurrogateSpec surrogate = SurrogateSpec::arctan();
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

// eta0 * gamma^epoch; strictly decreasing in `epoch` iff gamma < 1.
double lr_schedule(double eta0, double gamma, std::size_t epoch);

// Adam moment accumulators mirroring one stage's learnable tensors.
struct StageMoments {
  Tensor w_m, w_v;
  Tensor vth_m, vth_v;
  Tensor gamma_m, gamma_v;
  Tensor beta_m, beta_v;
};

struct OptimizerState {
  std::vector<StageMoments> stages;
  std::size_t step = 0;

  static OptimizerState init(const Network& net);
};

// One Adam update with bias correction: p -= lr * m_hat / (sqrt(v_hat) + eps).
// Gradients already masked to zero (by apply_mode_mask) leave their tensors
// bit-identical, so frozen parameter families never drift.
void optimizer_step(Network& net, const GradientSet& grads,
                    OptimizerState& state, double lr, const TrainConfig& cfg);

// How raw samples become the tensor presented to the network.
//  Direct:    inputs [N][shape...]; the static frame is replicated over T.
//  Bernoulli: inputs [N][shape...] in [0,1]; each batch assembly draws a
//             fresh spike train (probability = pixel value) per timestep.
//  Frames:    inputs [N][T][shape...]; pre-sliced per-timestep frames.
enum class EncodingKind { Direct, Bernoulli, Frames };

const char* encoding_kind_name(EncodingKind k);
EncodingKind parse_encoding_kind(const std::string& text);

struct SampleSet {
  EncodingKind encoding = EncodingKind::Direct;
  Tensor inputs;
  std::vector<std::size_t> labels;

  std::size_t count() const { return labels.size(); }
  // Shape of one sample as fed to the network (without N or T).
  std::vector<std::size_t> sample_shape() const;
  void validate() const;
};

// Gathers the indexed samples into the network input tensor: [S][shape...]
// for Direct, [T][S][shape...] for Bernoulli (consuming `encoder_rng`) and
// Frames (whose stored T must equal `T`).
Tensor assemble_batch(const SampleSet& data,
                      const std::vector<std::size_t>& indices, std::size_t T,
                      RngEngine* encoder_rng);

// One row of the experiment log.
struct MetricsRecord {
  std::size_t epoch = 0;
  std::string split;  // "train" or "test"
  double loss = 0.0;
  double top1 = 0.0;
  double afr = 0.0;
  double lr = 0.0;
  std::uint64_t seed = 0;
  std::string mode;  // "sl", "tl" or "stl"
};

// One pass over `data` in shuffled batches: train-mode forward, rate
// readout, MSE loss, reverse sweep, mode mask, Adam step. Metrics are the
// sample-weighted epoch averages; `epoch` only selects the learning rate and
// stamps the record. Deterministic given the rng bundle states.
MetricsRecord train_epoch(Network& net, const SampleSet& data,
                          const TrainConfig& cfg, std::size_t epoch,
                          OptimizerState& state, RngBundle& rngs);

// Eval-mode pass (running-stats BN, identity dropout). Bernoulli encoding
// draws from a dedicated "encoder-eval" stream reseeded from cfg.seed on
// every call, so evaluation is reproducible and independent of training
// progress. Throws EmptyInputError on an empty set.
MetricsRecord evaluate(Network& net, const SampleSet& data,
                       const TrainConfig& cfg, std::size_t epoch);

// Threshold-evolution probe of one spiking stage.
struct ThresholdSnapshot {
  std::size_t stage = 0;            // index into net.stages
  std::vector<double> sampled;      // v_th at the requested unit indices
  double mean = 0.0;
  double stddev = 0.0;              // population standard deviation
  std::vector<std::size_t> histogram;  // 50 uniform bins over [lo, hi]
  double hist_lo = 0.0;
  double hist_hi = 0.0;
};

inline constexpr std::size_t kThresholdHistogramBins = 50;

// Snapshot of every spiking stage's thresholds: the values at
// `sample_indices` (which must be valid for each stage) plus full-layer
// mean, standard deviation and a 50-bin histogram over the observed range.
std::vector<ThresholdSnapshot> track_thresholds(
    const Network& net, const std::vector<std::size_t>& sample_indices);

// Heterogeneous-threshold construction: permutes each stage's v_th entries
// in place by a seeded uniform random permutation (weights untouched).
// Training then proceeds with thresholds frozen.
void shuffle_thresholds(Network& net, std::uint64_t seed);

// Joint-decision prediction of an ensemble: runs every member on the same
// input ([shape...] static or [T][shape...] pre-encoded), sums raw output
// spike counts per class across members, populations and the window, and
// returns the argmax with lowest-index tie break. All members must share the
// voting geometry.
std::size_t jdf_predict(std::vector<Network>& members, const Tensor& input,
                        std::size_t T);

// Ensemble evaluation; every member sees the identical encoded batch, so a
// single-member ensemble reproduces `evaluate` exactly. Reported afr is the
// member average; loss is the MSE of the ensemble-mean rates.
MetricsRecord jdf_evaluate(std::vector<Network>& members, const SampleSet& data,
                           const TrainConfig& cfg);

}  // namespace stlsnn
