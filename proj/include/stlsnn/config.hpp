#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stlsnn/data.hpp"
#include "stlsnn/layers.hpp"
#include "stlsnn/train.hpp"

namespace stlsnn {

// Where samples come from and how they are presented to the network.
struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | idx | events

  // idx
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  bool downsample = false;  // 2x2 mean-pool the loaded images

  // synthetic
  std::size_t n_train = 2000;
  std::size_t n_test = 1000;
  std::size_t height = 14;
  std::size_t width = 14;
  std::uint64_t data_seed = 12345;

  // events (used by the encode subcommand)
  std::string events_path;
  std::string slicer = "equal_count";  // equal_count | fixed_duration
  std::size_t slices = 20;
  std::uint64_t slice_ms = 5;
  std::uint64_t total_ms = 100;

  EncodingKind encoding = EncodingKind::Bernoulli;

  bool operator==(const DatasetConfig&) const = default;
};

// Full experiment description as read from a config file.
struct ExperimentConfig {
  DatasetConfig dataset;
  std::string network = "FC256-VotingC10P10";
  TrainConfig train;
  std::string out_dir = "out";
  std::size_t jdf_k = 1;
  bool has_noise = false;
  NoiseSpec noise;
  std::size_t track_samples = 100;

  bool operator==(const ExperimentConfig&) const = default;
};

// Expands the compact layer notation into an ordered chain:
//   `128C3`  conv, 128 output channels, 3x3 kernel, stride 1, same padding
//            (optional suffixes: `S2` stride, `P0` padding)
//   `BN`     batch normalization fused into the preceding layer
//   `MP`     2x2 max pooling (`MP3` for 3x3)
//   `DP`     dropout at `dropout_p` (`DP0.3` overrides)
//   `FC256`  fully connected, 256 units
//   `ENC`    encoding layer (LIF over the raw input)
//   `VotingC10P10`  voting readout, 10 classes x 10 units
//   `{X-Y}*n`       n concatenated copies of the braced chain
// Tokens are joined by `-`.
std::vector<LayerSpec> parse_network_string(const std::string& text,
                                            double dropout_p);

// Shape-checks a chain against an input shape without training anything;
// throws ConfigError naming the offending layer boundary.
void check_chain(const std::vector<LayerSpec>& chain,
                 const std::vector<std::size_t>& input_shape,
                 const LifConstants& lif, const SurrogateSpec& surrogate);

// Parses the INI-style experiment file: `[section]` headers and `key = value`
// lines; `#` or `;` start comments. Unset keys keep their defaults. Unknown
// sections or keys raise ConfigError naming them.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::string& path);

// Serializes a config such that parse_config_text(emit_config(c)) == c.
std::string emit_config(const ExperimentConfig& cfg);

// Materializes the configured dataset splits (synthetic or idx kinds).
struct LoadedData {
  SampleSet train;
  SampleSet test;
  std::vector<std::size_t> input_shape;  // one sample's shape
};
LoadedData load_dataset(const DatasetConfig& cfg);

}  // namespace stlsnn
