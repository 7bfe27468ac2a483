#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace stlsnn {

using RngEngine = std::mt19937_64;

// Derives an independent engine for a named randomness stream, so that one
// experiment seed drives weights, dropout, encoding, noise and shuffling
// without the streams interfering with each other.
RngEngine make_stream(std::uint64_t seed, std::string_view name);

// Every random draw in the project goes through one of these engines.
struct RngBundle {
  RngEngine weights;
  RngEngine dropout;
  RngEngine encoder;
  RngEngine noise;
  RngEngine shuffle;
  RngEngine batch;

  static RngBundle from_seed(std::uint64_t seed);
};

std::string serialize_engine(const RngEngine& e);
RngEngine deserialize_engine(const std::string& text);

inline double uniform_real(RngEngine& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Uniform integer in [0, n).
inline std::size_t uniform_index(RngEngine& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline bool bernoulli_draw(RngEngine& rng, double p) {
  return uniform_real(rng, 0.0, 1.0) < p;
}

}  // namespace stlsnn
