#include "stlsnn/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stlsnn/error.hpp"
#include "stlsnn/network.hpp"

namespace stlsnn {

namespace {

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  for (const char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

std::size_t to_count(const std::string& s, const std::string& what) {
  if (!all_digits(s)) {
    throw ConfigError(what + " expects an unsigned integer, got '" + s + "'");
  }
  return static_cast<std::size_t>(std::stoull(s));
}

double to_real(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(what + " expects a number, got '" + s + "'");
  }
}

bool to_flag(const std::string& s, const std::string& what) {
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw ConfigError(what + " expects a boolean, got '" + s + "'");
}

// One grammar token -> LayerSpec.
LayerSpec parse_token(const std::string& tok, double dropout_p) {
  if (tok == "BN") return LayerSpec::batchnorm();
  if (tok == "ENC") return LayerSpec::encoding();
  if (tok == "MP") return LayerSpec::maxpool2d(2);
  if (tok.rfind("MP", 0) == 0) {
    return LayerSpec::maxpool2d(to_count(tok.substr(2), "max-pool window"));
  }
  if (tok == "DP") return LayerSpec::dropout(dropout_p);
  if (tok.rfind("DP", 0) == 0) {
    return LayerSpec::dropout(to_real(tok.substr(2), "dropout probability"));
  }
  if (tok.rfind("FC", 0) == 0) {
    return LayerSpec::dense(0, to_count(tok.substr(2), "dense width"));
  }
  if (tok.rfind("VotingC", 0) == 0) {
    const std::size_t p_pos = tok.find('P', 7);
    if (p_pos == std::string::npos) {
      throw ConfigError("voting token must look like VotingC10P10, got '" + tok + "'");
    }
    const std::size_t classes = to_count(tok.substr(7, p_pos - 7), "voting classes");
    const std::size_t pop = to_count(tok.substr(p_pos + 1), "voting population");
    return LayerSpec::voting(classes, pop);
  }
  // <channels>C<kernel>[S<stride>][P<padding>]
  const std::size_t c_pos = tok.find('C');
  if (c_pos != std::string::npos && c_pos > 0 && all_digits(tok.substr(0, c_pos))) {
    const std::size_t channels = to_count(tok.substr(0, c_pos), "conv channels");
    std::string rest = tok.substr(c_pos + 1);
    std::size_t stride = 1;
    bool explicit_pad = false;
    std::size_t padding = 0;
    const std::size_t p_pos = rest.find('P');
    if (p_pos != std::string::npos) {
      padding = to_count(rest.substr(p_pos + 1), "conv padding");
      explicit_pad = true;
      rest = rest.substr(0, p_pos);
    }
    const std::size_t s_pos = rest.find('S');
    if (s_pos != std::string::npos) {
      stride = to_count(rest.substr(s_pos + 1), "conv stride");
      rest = rest.substr(0, s_pos);
    }
    const std::size_t kernel = to_count(rest, "conv kernel");
    if (!explicit_pad) padding = (kernel - 1) / 2;  // same-size default
    return LayerSpec::conv2d(0, channels, kernel, stride, padding);
  }
  throw ConfigError("unknown layer token '" + tok + "'");
}

void parse_chain_into(const std::string& text, double dropout_p,
                      std::vector<LayerSpec>& out) {
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '-') {
      ++i;
      continue;
    }
    if (text[i] == '{') {
      std::size_t depth = 1;
      std::size_t j = i + 1;
      while (j < text.size() && depth > 0) {
        if (text[j] == '{') ++depth;
        if (text[j] == '}') --depth;
        ++j;
      }
      if (depth != 0) throw ConfigError("unbalanced '{' in network string");
      const std::string inner = text.substr(i + 1, j - i - 2);
      if (j >= text.size() || text[j] != '*') {
        throw ConfigError("'{...}' must be followed by '*n' in network string");
      }
      std::size_t k = j + 1;
      std::size_t digits = 0;
      while (k + digits < text.size() &&
             std::isdigit(static_cast<unsigned char>(text[k + digits]))) {
        ++digits;
      }
      if (digits == 0) {
        throw ConfigError("'{...}*' needs a repetition count in network string");
      }
      const std::size_t reps = to_count(text.substr(k, digits), "repetition count");
      if (reps == 0) throw ConfigError("repetition count must be at least 1");
      for (std::size_t r = 0; r < reps; ++r) {
        parse_chain_into(inner, dropout_p, out);
      }
      i = k + digits;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && text[j] != '-' && text[j] != '{') ++j;
    out.push_back(parse_token(text.substr(i, j - i), dropout_p));
    i = j;
  }
}

}  // namespace

std::vector<LayerSpec> parse_network_string(const std::string& text,
                                            double dropout_p) {
  if (text.empty()) throw ConfigError("network string is empty");
  std::vector<LayerSpec> chain;
  parse_chain_into(text, dropout_p, chain);
  if (chain.empty()) throw ConfigError("network string yields no layers");
  return chain;
}

void check_chain(const std::vector<LayerSpec>& chain,
                 const std::vector<std::size_t>& input_shape,
                 const LifConstants& lif, const SurrogateSpec& surrogate) {
  const auto try_build = [&](std::size_t n) {
    const std::vector<LayerSpec> prefix(chain.begin(), chain.begin() + n);
    RngEngine rng = make_stream(0, "chain-check");
    build_network(prefix, input_shape, lif, surrogate, 1.0, rng);
  };
  try {
    try_build(chain.size());
    return;
  } catch (const Error&) {
    // Locate the first failing boundary for the report below.
  }
  for (std::size_t n = 1; n <= chain.size(); ++n) {
    try {
      try_build(n);
    } catch (const Error& e) {
      throw ConfigError("network invalid at layer " + std::to_string(n) + " (" +
                        layer_kind_name(chain[n - 1].kind) + "): " + e.what());
    }
  }
}

namespace {

struct IniLine {
  std::string section;
  std::string key;
  std::string value;
};

std::string strip(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

void apply_dataset(DatasetConfig& d, const std::string& key,
                   const std::string& value) {
  if (key == "kind") {
    if (value != "synthetic" && value != "idx" && value != "events") {
      throw ConfigError("dataset.kind must be synthetic, idx or events");
    }
    d.kind = value;
  } else if (key == "train_images") d.train_images = value;
  else if (key == "train_labels") d.train_labels = value;
  else if (key == "test_images") d.test_images = value;
  else if (key == "test_labels") d.test_labels = value;
  else if (key == "downsample") d.downsample = to_flag(value, "dataset.downsample");
  else if (key == "n_train") d.n_train = to_count(value, "dataset.n_train");
  else if (key == "n_test") d.n_test = to_count(value, "dataset.n_test");
  else if (key == "height") d.height = to_count(value, "dataset.height");
  else if (key == "width") d.width = to_count(value, "dataset.width");
  else if (key == "data_seed") d.data_seed = to_count(value, "dataset.data_seed");
  else if (key == "events_path") d.events_path = value;
  else if (key == "slicer") {
    if (value != "equal_count" && value != "fixed_duration") {
      throw ConfigError("dataset.slicer must be equal_count or fixed_duration");
    }
    d.slicer = value;
  } else if (key == "slices") d.slices = to_count(value, "dataset.slices");
  else if (key == "slice_ms") d.slice_ms = to_count(value, "dataset.slice_ms");
  else if (key == "total_ms") d.total_ms = to_count(value, "dataset.total_ms");
  else if (key == "encoding") d.encoding = parse_encoding_kind(value);
  else throw ConfigError("unknown key 'dataset." + key + "'");
}

void apply_train(TrainConfig& t, const std::string& key, const std::string& value) {
  if (key == "initial_threshold") t.v_th0 = to_real(value, "train.initial_threshold");
  else if (key == "tau") t.tau = to_real(value, "train.tau");
  else if (key == "dt") t.dt = to_real(value, "train.dt");
  else if (key == "T") t.T = to_count(value, "train.T");
  else if (key == "batch_size") t.batch_size = to_count(value, "train.batch_size");
  else if (key == "epochs") t.epochs = to_count(value, "train.epochs");
  else if (key == "eta0") t.eta0 = to_real(value, "train.eta0");
  else if (key == "gamma") t.gamma = to_real(value, "train.gamma");
  else if (key == "dropout_p") t.dropout_p = to_real(value, "train.dropout_p");
  else if (key == "mode") t.mode = parse_learning_mode(value);
  else if (key == "surrogate") {
    if (value == "arctan") t.surrogate.kind = SurrogateKind::Arctan;
    else if (value == "rectangular") t.surrogate.kind = SurrogateKind::Rectangular;
    else throw ConfigError("train.surrogate must be arctan or rectangular");
  } else if (key == "surrogate_scale") {
    t.surrogate.scale = to_real(value, "train.surrogate_scale");
  } else if (key == "seed") t.seed = to_count(value, "train.seed");
  else if (key == "beta1") t.beta1 = to_real(value, "train.beta1");
  else if (key == "beta2") t.beta2 = to_real(value, "train.beta2");
  else if (key == "adam_eps") t.adam_eps = to_real(value, "train.adam_eps");
  else throw ConfigError("unknown key 'train." + key + "'");
}

void apply_noise(NoiseSpec& n, const std::string& key, const std::string& value) {
  if (key == "kind") {
    if (value == "salt_pepper") n.kind = NoiseKind::SaltPepper;
    else if (value == "uniform") n.kind = NoiseKind::Uniform;
    else throw ConfigError("noise.kind must be salt_pepper or uniform");
  } else if (key == "level") n.nl = to_real(value, "noise.level");
  else if (key == "seed") n.seed = to_count(value, "noise.seed");
  else throw ConfigError("unknown key 'noise." + key + "'");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = strip(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": malformed section header");
      }
      section = strip(line.substr(1, line.size() - 2));
      if (section != "dataset" && section != "network" && section != "train" &&
          section != "output" && section != "jdf" && section != "noise" &&
          section != "track") {
        throw ConfigError("unknown section '" + section + "'");
      }
      if (section == "noise") cfg.has_noise = true;
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (section.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": key outside any section");
    }
    if (section == "dataset") apply_dataset(cfg.dataset, key, value);
    else if (section == "network") {
      if (key == "layers") cfg.network = value;
      else throw ConfigError("unknown key 'network." + key + "'");
    } else if (section == "train") apply_train(cfg.train, key, value);
    else if (section == "output") {
      if (key == "dir") cfg.out_dir = value;
      else throw ConfigError("unknown key 'output." + key + "'");
    } else if (section == "jdf") {
      if (key == "k") cfg.jdf_k = to_count(value, "jdf.k");
      else throw ConfigError("unknown key 'jdf." + key + "'");
    } else if (section == "noise") apply_noise(cfg.noise, key, value);
    else if (section == "track") {
      if (key == "samples") cfg.track_samples = to_count(value, "track.samples");
      else throw ConfigError("unknown key 'track." + key + "'");
    }
  }

  cfg.train.validate();
  if (cfg.has_noise) cfg.noise.validate();
  if (cfg.jdf_k == 0) throw ConfigError("jdf.k must be at least 1");

  // The layer grammar is always checked; shapes are checked when the input
  // geometry is known without touching the filesystem.
  const std::vector<LayerSpec> chain =
      parse_network_string(cfg.network, cfg.train.dropout_p);
  if (cfg.dataset.kind == "synthetic") {
    check_chain(chain, {1, cfg.dataset.height, cfg.dataset.width},
                LifConstants(cfg.train.tau, cfg.train.dt), cfg.train.surrogate);
  }
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

namespace {

std::string real_str(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string emit_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  const DatasetConfig& d = cfg.dataset;
  out << "[dataset]\n";
  out << "kind = " << d.kind << "\n";
  if (!d.train_images.empty()) out << "train_images = " << d.train_images << "\n";
  if (!d.train_labels.empty()) out << "train_labels = " << d.train_labels << "\n";
  if (!d.test_images.empty()) out << "test_images = " << d.test_images << "\n";
  if (!d.test_labels.empty()) out << "test_labels = " << d.test_labels << "\n";
  out << "downsample = " << (d.downsample ? "true" : "false") << "\n";
  out << "n_train = " << d.n_train << "\n";
  out << "n_test = " << d.n_test << "\n";
  out << "height = " << d.height << "\n";
  out << "width = " << d.width << "\n";
  out << "data_seed = " << d.data_seed << "\n";
  if (!d.events_path.empty()) out << "events_path = " << d.events_path << "\n";
  out << "slicer = " << d.slicer << "\n";
  out << "slices = " << d.slices << "\n";
  out << "slice_ms = " << d.slice_ms << "\n";
  out << "total_ms = " << d.total_ms << "\n";
  out << "encoding = " << encoding_kind_name(d.encoding) << "\n";

  out << "\n[network]\n";
  out << "layers = " << cfg.network << "\n";

  const TrainConfig& t = cfg.train;
  out << "\n[train]\n";
  out << "initial_threshold = " << real_str(t.v_th0) << "\n";
  out << "tau = " << real_str(t.tau) << "\n";
  out << "dt = " << real_str(t.dt) << "\n";
  out << "T = " << t.T << "\n";
  out << "batch_size = " << t.batch_size << "\n";
  out << "epochs = " << t.epochs << "\n";
  out << "eta0 = " << real_str(t.eta0) << "\n";
  out << "gamma = " << real_str(t.gamma) << "\n";
  out << "dropout_p = " << real_str(t.dropout_p) << "\n";
  out << "mode = " << learning_mode_name(t.mode) << "\n";
  out << "surrogate = "
      << (t.surrogate.kind == SurrogateKind::Arctan ? "arctan" : "rectangular")
      << "\n";
  out << "surrogate_scale = " << real_str(t.surrogate.scale) << "\n";
  out << "seed = " << t.seed << "\n";
  out << "beta1 = " << real_str(t.beta1) << "\n";
  out << "beta2 = " << real_str(t.beta2) << "\n";
  out << "adam_eps = " << real_str(t.adam_eps) << "\n";

  out << "\n[output]\n";
  out << "dir = " << cfg.out_dir << "\n";

  out << "\n[jdf]\n";
  out << "k = " << cfg.jdf_k << "\n";

  if (cfg.has_noise) {
    out << "\n[noise]\n";
    out << "kind = "
        << (cfg.noise.kind == NoiseKind::SaltPepper ? "salt_pepper" : "uniform")
        << "\n";
    out << "level = " << real_str(cfg.noise.nl) << "\n";
    out << "seed = " << cfg.noise.seed << "\n";
  }

  out << "\n[track]\n";
  out << "samples = " << cfg.track_samples << "\n";
  return out.str();
}

LoadedData load_dataset(const DatasetConfig& cfg) {
  LoadedData out;
  if (cfg.kind == "synthetic") {
    const SyntheticDigits d = make_synthetic_digits(cfg.n_train, cfg.n_test,
                                                    cfg.height, cfg.width,
                                                    cfg.data_seed);
    out.train.inputs = d.train.pixels;
    out.train.labels = d.train.labels;
    out.test.inputs = d.test.pixels;
    out.test.labels = d.test.labels;
  } else if (cfg.kind == "idx") {
    ImageSet train = load_idx(cfg.train_images, cfg.train_labels);
    ImageSet test = load_idx(cfg.test_images, cfg.test_labels);
    if (cfg.downsample) {
      train = downsample2x(train);
      test = downsample2x(test);
    }
    out.train.inputs = train.pixels;
    out.train.labels = train.labels;
    out.test.inputs = test.pixels;
    out.test.labels = test.labels;
  } else {
    throw ConfigError("dataset kind '" + cfg.kind +
                      "' cannot be used for training; use the encode command");
  }
  out.train.encoding = cfg.encoding;
  out.test.encoding = cfg.encoding;
  out.input_shape = out.train.sample_shape();
  out.train.validate();
  out.test.validate();
  return out;
}

}  // namespace stlsnn
