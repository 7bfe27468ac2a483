#include "stlsnn/gradcheck.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

#include "stlsnn/backward.hpp"
#include "stlsnn/error.hpp"
#include "stlsnn/loss.hpp"
#include "stlsnn/rng.hpp"

namespace stlsnn {

namespace {

double soft_loss(Network& net, const Tensor& sample, const Tensor& y, std::size_t T,
                 const LossSpec& spec) {
  ForwardCache cache = network_forward(net, sample, T, RunMode::Soft, nullptr);
  const Tensor rates = readout_rates(net, cache);
  const double loss = mse_loss(rates, y, spec);
  if (!std::isfinite(loss)) {
    throw NumericError("grad_check: non-finite loss");
  }
  return loss;
}

// Central finite difference of the soft loss w.r.t. one parameter entry.
double fd_entry(Network& net, Tensor& param, std::size_t i, double eps,
                const Tensor& sample, const Tensor& y, std::size_t T,
                const LossSpec& spec) {
  const double saved = param[i];
  param[i] = saved + eps;
  const double lp = soft_loss(net, sample, y, T, spec);
  param[i] = saved - eps;
  const double lm = soft_loss(net, sample, y, T, spec);
  param[i] = saved;
  return (lp - lm) / (2.0 * eps);
}

double rel_err(double analytic, double fd) {
  return std::fabs(analytic - fd) / std::max(std::fabs(fd), 1e-8);
}

}  // namespace

double grad_check(Network& net, const Tensor& sample, const Tensor& y, std::size_t T,
                  double epsilon) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-3)) {
    throw ConfigError("grad_check: epsilon must lie in [1e-6, 1e-3]");
  }
  if (net.classes == 0) {
    throw ConfigError("grad_check: network must end in a voting layer");
  }
  for (const Stage& st : net.stages) {
    if (st.has_dropout) {
      throw ConfigError("grad_check: soft mode does not support dropout stages");
    }
  }

  ForwardCache cache = network_forward(net, sample, T, RunMode::Soft, nullptr);
  const Tensor rates = readout_rates(net, cache);
  const LossSpec spec{cache.S, net.classes, net.population, T};
  require_shape(y, {spec.S, spec.C}, "grad_check labels");
  if (!std::isfinite(mse_loss(rates, y, spec))) {
    throw NumericError("grad_check: non-finite loss");
  }
  const Tensor seed = loss_grad_output(rates, y, spec);
  const GradientSet analytic = backward(net, cache, seed);

  double worst = 0.0;
  for (std::size_t si = 0; si < net.stages.size(); ++si) {
    Stage& st = net.stages[si];
    const StageGrads& sg = analytic.stages[si];
    for (std::size_t i = 0; i < st.params.W.numel(); ++i) {
      const double fd = fd_entry(net, st.params.W, i, epsilon, sample, y, T, spec);
      worst = std::max(worst, rel_err(sg.dW[i], fd));
    }
    for (std::size_t i = 0; i < st.params.v_th.numel(); ++i) {
      const double fd = fd_entry(net, st.params.v_th, i, epsilon, sample, y, T, spec);
      worst = std::max(worst, rel_err(sg.dVth[i], fd));
    }
    for (std::size_t i = 0; i < st.params.bn_gamma.numel(); ++i) {
      const double fd = fd_entry(net, st.params.bn_gamma, i, epsilon, sample, y, T, spec);
      worst = std::max(worst, rel_err(sg.dGamma[i], fd));
    }
    for (std::size_t i = 0; i < st.params.bn_beta.numel(); ++i) {
      const double fd = fd_entry(net, st.params.bn_beta, i, epsilon, sample, y, T, spec);
      worst = std::max(worst, rel_err(sg.dBeta[i], fd));
    }
  }
  return worst;
}

GradCheckCase make_random_dense_case(std::uint64_t seed) {
  RngEngine rng = make_stream(seed, "gradcheck");

  const std::size_t in_width = 6 + uniform_index(rng, 11);    // 6..16
  const std::size_t n_hidden = uniform_index(rng, 3);         // 0..2
  const std::size_t classes = 2 + uniform_index(rng, 3);      // 2..4
  const std::size_t population = 1 + uniform_index(rng, 3);   // 1..3
  const std::size_t T = 2 + uniform_index(rng, 7);            // 2..8
  const std::size_t S = 1 + uniform_index(rng, 3);            // 1..3
  const double tau = uniform_real(rng, 1.5, 4.0);

  std::vector<LayerSpec> chain;
  for (std::size_t i = 0; i < n_hidden; ++i) {
    const std::size_t width = 4 + uniform_index(rng, 21);  // 4..24
    chain.push_back(LayerSpec::dense(0, width));
    if (bernoulli_draw(rng, 0.5)) {
      chain.push_back(LayerSpec::batchnorm());
    }
  }
  chain.push_back(LayerSpec::voting(classes, population));

  GradCheckCase c;
  c.T = T;
  const SurrogateSpec surrogate = SurrogateSpec::arctan(uniform_real(rng, 1.0, 4.0));
  c.net = build_network(chain, {in_width}, LifConstants(tau, 1.0), surrogate, 1.0, rng);

  // Jitter thresholds and BN parameters so the case is not a special point.
  for (Stage& st : c.net.stages) {
    for (double& v : st.params.v_th) v = uniform_real(rng, 0.5, 1.5);
    if (st.params.has_bn()) {
      for (double& v : st.params.bn_gamma) v = uniform_real(rng, 0.5, 1.5);
      for (double& v : st.params.bn_beta) v = uniform_real(rng, -0.3, 0.3);
      for (double& v : st.params.bn_running_mean) v = uniform_real(rng, -0.2, 0.2);
      for (double& v : st.params.bn_running_var) v = uniform_real(rng, 0.5, 1.5);
    }
  }

  c.sample = Tensor({S, in_width});
  for (double& v : c.sample) v = uniform_real(rng, 0.0, 1.0);

  std::vector<std::size_t> labels(S);
  for (std::size_t s = 0; s < S; ++s) labels[s] = uniform_index(rng, classes);
  c.y = one_hot(labels, classes);
  return c;
}

}  // namespace stlsnn
