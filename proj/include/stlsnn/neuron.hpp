#pragma once

#include <cmath>

#include "stlsnn/error.hpp"

namespace stlsnn {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Membrane constants shared by every neuron in a network.
// The resting potential is fixed at 0 mV.
struct LifConstants {
  double tau = 2.0;  // membrane time constant, ms
  double dt = 1.0;   // simulation step, ms

  LifConstants() = default;
  LifConstants(double tau_ms, double dt_ms) : tau(tau_ms), dt(dt_ms) {
    validate();
  }

  void validate() const {
    if (!(tau > 0.0)) throw ConfigError("LifConstants: tau must be positive");
    if (!(dt > 0.0) || dt > tau) {
      throw ConfigError("LifConstants: require 0 < dt <= tau");
    }
  }

  // Membrane retention per step when the neuron stayed silent.
  double leak() const { return 1.0 - dt / tau; }
};

struct NeuronState {
  double u = 0.0;       // membrane potential, mV
  bool o_prev = false;  // spike emitted on the previous step
};

enum class SurrogateKind { Arctan, Rectangular };

// Smooth stand-in for the spike derivative used in the backward pass.
// `scale` is the arctan steepness, or the window width for Rectangular.
struct SurrogateSpec {
  SurrogateKind kind = SurrogateKind::Arctan;
  double scale = kPi;

  static SurrogateSpec arctan(double scale = kPi) {
    SurrogateSpec s{SurrogateKind::Arctan, scale};
    s.validate();
    return s;
  }
  static SurrogateSpec rectangular(double width = 1.0) {
    SurrogateSpec s{SurrogateKind::Rectangular, width};
    s.validate();
    return s;
  }

  void validate() const {
    if (!(scale > 0.0)) throw ConfigError("SurrogateSpec: scale must be positive");
  }

  bool operator==(const SurrogateSpec&) const = default;
};

// Multiplier on the previous membrane potential. Zero right after a spike,
// which erases the accumulated potential (hard reset).
inline double decay_factor(bool o_prev, const LifConstants& c) {
  return o_prev ? 0.0 : c.leak();
}

// One membrane update. The dt/tau input scaling is already folded into x,
// so the new potential is just the decayed old one plus the scaled input.
inline double lif_step(const NeuronState& s, double x, const LifConstants& c) {
  return decay_factor(s.o_prev, c) * s.u + x;
}

// Threshold crossing is inclusive: equality fires.
inline bool fire(double u, double v_th) { return u >= v_th; }

// Continuous spike stand-in, strictly increasing in u with range (0, 1).
// Only defined for the Arctan kind; Rectangular is gradient-only.
inline double surrogate_value(double u, double v_th, const SurrogateSpec& s) {
  if (s.kind != SurrogateKind::Arctan) {
    throw UnsupportedError(
        "surrogate_value: only the Arctan surrogate has a forward value");
  }
  return std::atan(s.scale * (u - v_th)) / kPi + 0.5;
}

// d(surrogate_value)/du. The threshold derivative is the negation of this;
// callers apply the sign.
inline double surrogate_grad(double u, double v_th, const SurrogateSpec& s) {
  const double d = u - v_th;
  switch (s.kind) {
    case SurrogateKind::Arctan: {
      const double z = s.scale * d;
      return s.scale / (kPi * (1.0 + z * z));
    }
    case SurrogateKind::Rectangular:
      return std::abs(d) < 0.5 * s.scale ? 1.0 / s.scale : 0.0;
  }
  return 0.0;  // unreachable
}

}  // namespace stlsnn
