#include "stlsnn/rng.hpp"

namespace stlsnn {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

RngEngine make_stream(std::uint64_t seed, std::string_view name) {
  const std::uint64_t tag = fnv1a(name);
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag),
                    static_cast<std::uint32_t>(tag >> 32)};
  return RngEngine(seq);
}

RngBundle RngBundle::from_seed(std::uint64_t seed) {
  RngBundle b;
  b.weights = make_stream(seed, "weights");
  b.dropout = make_stream(seed, "dropout");
  b.encoder = make_stream(seed, "encoder");
  b.noise = make_stream(seed, "noise");
  b.shuffle = make_stream(seed, "shuffle");
  b.batch = make_stream(seed, "batch");
  return b;
}

std::string serialize_engine(const RngEngine& e) {
  std::ostringstream os;
  os << e;
  return os.str();
}

RngEngine deserialize_engine(const std::string& text) {
  RngEngine e;
  std::istringstream is(text);
  is >> e;
  return e;
}

}  // namespace stlsnn
