#pragma once

#include <string>
#include <vector>

#include "stlsnn/config.hpp"
#include "stlsnn/network.hpp"
#include "stlsnn/rng.hpp"
#include "stlsnn/train.hpp"

namespace stlsnn {

inline constexpr const char* kCheckpointMagic = "STLSNN-CKPT";
inline constexpr int kCheckpointVersion = 1;

// Complete training state: enough to resume bit-exactly.
struct Checkpoint {
  ExperimentConfig config;
  std::vector<std::size_t> input_shape;
  std::size_t epoch = 0;  // epochs completed so far
  Network net;
  OptimizerState opt;
  RngBundle rngs;
  std::vector<MetricsRecord> history;
};

// Text header (version, embedded config, counters, rng states, metrics
// history, tensor declarations) followed by a little-endian 64-bit float
// payload holding every declared tensor in order. Writes are atomic
// (temporary file + rename), so a failed save never corrupts an existing
// checkpoint.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// Errors: unreadable file (IoError), unrecognized version (FormatError),
// malformed header (ParseError), declared-shape/payload disagreement or
// truncation (FormatError).
Checkpoint load_checkpoint(const std::string& path);

// CSV with header `epoch,split,loss,top1,afr,lr,seed,mode`, one row per
// record, floats at 6 significant digits. The file is rewritten atomically
// from the full record list, so identical histories produce byte-identical
// files.
void write_metrics(const std::string& path, const std::vector<MetricsRecord>& records);

std::string metrics_to_csv(const std::vector<MetricsRecord>& records);

// Atomic whole-file write (temporary + rename), shared by every emitter.
void atomic_write_file(const std::string& path, const std::string& bytes);

// Single tensor on disk: text shape header + little-endian f64 payload.
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace stlsnn
