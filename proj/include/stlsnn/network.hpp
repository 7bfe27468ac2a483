#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stlsnn/layers.hpp"
#include "stlsnn/neuron.hpp"
#include "stlsnn/rng.hpp"
#include "stlsnn/tensor.hpp"

namespace stlsnn {

// How the forward pass is run.
//  Train: binary spikes, batch-statistics BN (running stats updated), dropout
//         masks drawn from the provided engine.
//  Eval:  binary spikes, running-statistics BN, identity dropout.
//  Soft:  spikes replaced by the continuous surrogate value, constant leak
//         (no reset), running-statistics BN, identity dropout. Every
//         operation is smooth, which makes the analytic backward pass exactly
//         checkable against finite differences.
enum class RunMode { Train, Eval, Soft };

// One spiking stage of the chain: a linear map (or raw input for the
// encoding stage), optional fused batch normalization applied to the scaled
// input, the LIF membrane update, and optional max-pool / dropout applied to
// the emitted spikes. Non-spiking chain entries (BN / MP / DP) attach to the
// preceding spiking stage at build time.
struct Stage {
  LayerKind kind = LayerKind::Dense;  // Encoding, Dense, Conv2d or Voting
  LayerSpec spec;
  LayerParams params;

  bool has_pool = false;
  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;
  bool has_dropout = false;
  double drop_p = 0.5;

  std::vector<std::size_t> in_shape;    // signal entering the linear map
  std::vector<std::size_t> core_shape;  // membrane/spike shape of the stage
  std::vector<std::size_t> out_shape;   // after pooling, fed to the next stage

  std::size_t core_units() const;
  std::size_t out_units() const;
};

struct Network {
  std::vector<Stage> stages;
  LifConstants lif;
  SurrogateSpec surrogate;
  std::vector<std::size_t> input_shape;

  // Voting readout geometry; zero when the net ends in a plain layer.
  std::size_t classes = 0;
  std::size_t population = 0;

  const Stage& output_stage() const;
};

// Builds the network from a layer chain. Weights are initialized uniformly
// in [-1/sqrt(fan_in), 1/sqrt(fan_in)] drawing from `weight_rng` in layer
// order, thresholds are set to v_th0, BN parameters to the identity
// transform. Validates that shapes chain, that BN/MP/DP follow a spiking
// layer, that an encoding layer is first, and that a voting layer is last.
Network build_network(const std::vector<LayerSpec>& chain,
                      const std::vector<std::size_t>& input_shape,
                      const LifConstants& lif, const SurrogateSpec& surrogate,
                      double v_th0, RngEngine& weight_rng);

// Per-stage state recorded by the forward pass; everything the backward pass
// needs. Time-major tensors are [T][S][core...].
struct StageCache {
  Tensor x;        // scaled input to the membrane update (post-BN)
  Tensor u;        // membrane potentials
  Tensor o_spike;  // stage outputs before pooling/dropout
  Tensor o_out;    // stage outputs after pooling/dropout, [T][S][out...]
  Tensor alpha;    // decay factor actually applied at each step

  // Batch-norm cache (empty when the stage has no BN).
  Tensor x_hat;
  Tensor bn_mean;
  Tensor bn_var;

  // Max-pool routing: flat input index per [t][s][pooled element].
  std::vector<std::size_t> pool_argmax;

  // Dropout mask per sample, [S][out units], reused across all T steps.
  Tensor dropout_mask;
};

struct ForwardCache {
  RunMode mode = RunMode::Eval;
  std::size_t T = 0;
  std::size_t S = 0;
  Tensor input;  // [T][S][input...] as actually presented to the first stage
  std::vector<StageCache> stages;

  const Tensor& output_spikes() const;  // [T][S][C*P] of the final stage
};

// Runs the unrolled forward pass over a batch.
//  - If `input` is [S][input_shape...], the same analog frame is presented at
//    every timestep (direct encoding; the first spiking stage acts as the
//    encoding layer).
//  - If `input` is [T][S][input_shape...], it is taken as a pre-encoded spike
//    (or frame) train and `T` must match its leading dimension.
// `dropout_rng` is only consumed in Train mode and only by dropout stages.
ForwardCache network_forward(Network& net, const Tensor& input, std::size_t T,
                             RunMode mode, RngEngine* dropout_rng = nullptr);

// Population-rate readout of one sample's output spikes [T][C*P]:
// p_c = (spike count of the P units of class c over the window) / (T*P).
Tensor voting_readout(const Tensor& out_spikes, std::size_t classes,
                      std::size_t population, std::size_t T);

// Rates for every sample in a cache, [S][C].
Tensor readout_rates(const Network& net, const ForwardCache& cache);

// Argmax with lowest-index tie break.
std::size_t predict_class(const Tensor& rates);

// Mean firing rate over every spiking unit, timestep and sample of the
// cache: total spike count / total unit-step count (pre-pooling outputs).
double average_firing_rate(const ForwardCache& cache);

}  // namespace stlsnn
