#include "stlsnn/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stlsnn/error.hpp"

namespace stlsnn {

namespace {

std::string real17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string real6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// One declared tensor: header name plus a pointer to the live storage.
struct TensorSlot {
  std::string name;
  Tensor* tensor;
};

// Declaration order is fixed; save and load walk the same list.
std::vector<TensorSlot> tensor_slots(Network& net, OptimizerState& opt) {
  if (opt.stages.size() != net.stages.size()) {
    throw ConsistencyError("optimizer state does not match the network");
  }
  std::vector<TensorSlot> slots;
  const auto add = [&](const std::string& name, Tensor& t) {
    if (!t.empty()) slots.push_back({name, &t});
  };
  for (std::size_t i = 0; i < net.stages.size(); ++i) {
    const std::string p = "s" + std::to_string(i) + ".";
    LayerParams& lp = net.stages[i].params;
    StageMoments& m = opt.stages[i];
    add(p + "W", lp.W);
    add(p + "v_th", lp.v_th);
    add(p + "bn_gamma", lp.bn_gamma);
    add(p + "bn_beta", lp.bn_beta);
    add(p + "bn_rmean", lp.bn_running_mean);
    add(p + "bn_rvar", lp.bn_running_var);
    add(p + "W.m", m.w_m);
    add(p + "W.v", m.w_v);
    add(p + "v_th.m", m.vth_m);
    add(p + "v_th.v", m.vth_v);
    add(p + "bn_gamma.m", m.gamma_m);
    add(p + "bn_gamma.v", m.gamma_v);
    add(p + "bn_beta.m", m.beta_m);
    add(p + "bn_beta.v", m.beta_v);
  }
  return slots;
}

std::string record_line(const MetricsRecord& r, bool full_precision) {
  const auto fmt = full_precision ? real17 : real6;
  std::ostringstream out;
  out << r.epoch << ',' << r.split << ',' << fmt(r.loss) << ',' << fmt(r.top1)
      << ',' << fmt(r.afr) << ',' << fmt(r.lr) << ',' << r.seed << ',' << r.mode;
  return out.str();
}

MetricsRecord parse_record_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  if (fields.size() != 8) {
    throw ParseError("metrics row needs 8 fields, got " +
                     std::to_string(fields.size()));
  }
  MetricsRecord r;
  r.epoch = std::stoull(fields[0]);
  r.split = fields[1];
  r.loss = std::stod(fields[2]);
  r.top1 = std::stod(fields[3]);
  r.afr = std::stod(fields[4]);
  r.lr = std::stod(fields[5]);
  r.seed = std::stoull(fields[6]);
  r.mode = fields[7];
  return r;
}

std::string next_line(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError(path + ": checkpoint header ended early");
  }
  return line;
}

// Parses `key = value`, insisting on the expected key.
std::string expect_kv(std::istream& in, const std::string& key,
                      const std::string& path) {
  const std::string line = next_line(in, path);
  const std::string prefix = key + " = ";
  if (line.rfind(prefix, 0) != 0) {
    throw ParseError(path + ": expected '" + key + " = ...', got '" + line + "'");
  }
  return line.substr(prefix.size());
}

}  // namespace

void atomic_write_file(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " into place: " + ec.message());
}

namespace {

void atomic_write(const std::string& path, const std::string& bytes) {
  atomic_write_file(path, bytes);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  // Slot collection needs mutable references; the checkpoint stays logically
  // const because slots are only read here.
  Checkpoint& c = const_cast<Checkpoint&>(ckpt);
  const std::vector<TensorSlot> slots = tensor_slots(c.net, c.opt);

  std::ostringstream head;
  head << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';

  const std::string config_text = emit_config(ckpt.config);
  std::size_t config_lines = 0;
  for (const char ch : config_text) config_lines += (ch == '\n') ? 1 : 0;
  head << "config_lines = " << config_lines << '\n' << config_text;

  head << "input_shape =";
  for (const std::size_t d : ckpt.input_shape) head << ' ' << d;
  head << '\n';
  head << "epoch = " << ckpt.epoch << '\n';
  head << "opt_step = " << ckpt.opt.step << '\n';
  head << "rng_weights = " << serialize_engine(ckpt.rngs.weights) << '\n';
  head << "rng_dropout = " << serialize_engine(ckpt.rngs.dropout) << '\n';
  head << "rng_encoder = " << serialize_engine(ckpt.rngs.encoder) << '\n';
  head << "rng_noise = " << serialize_engine(ckpt.rngs.noise) << '\n';
  head << "rng_shuffle = " << serialize_engine(ckpt.rngs.shuffle) << '\n';
  head << "rng_batch = " << serialize_engine(ckpt.rngs.batch) << '\n';

  head << "metrics = " << ckpt.history.size() << '\n';
  for (const MetricsRecord& r : ckpt.history) {
    head << record_line(r, /*full_precision=*/true) << '\n';
  }

  head << "tensors = " << slots.size() << '\n';
  std::size_t total = 0;
  for (const TensorSlot& slot : slots) {
    head << slot.name;
    for (std::size_t d : slot.tensor->shape()) head << ' ' << d;
    head << '\n';
    total += slot.tensor->numel();
  }
  head << "payload = " << total << '\n';
  head << "DATA\n";

  std::string bytes = head.str();
  const std::size_t header_size = bytes.size();
  bytes.resize(header_size + total * sizeof(double));
  char* cursor = bytes.data() + header_size;
  for (const TensorSlot& slot : slots) {
    const std::size_t n = slot.tensor->numel() * sizeof(double);
    std::memcpy(cursor, slot.tensor->data(), n);
    cursor += n;
  }
  atomic_write(path, bytes);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);

  const std::string magic_line = next_line(in, path);
  std::istringstream magic(magic_line);
  std::string tag;
  int version = -1;
  magic >> tag >> version;
  if (tag != kCheckpointMagic) {
    throw FormatError(path + ": not a checkpoint file");
  }
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " +
                      std::to_string(version));
  }

  Checkpoint ckpt;

  const std::size_t config_lines =
      std::stoull(expect_kv(in, "config_lines", path));
  std::string config_text;
  for (std::size_t i = 0; i < config_lines; ++i) {
    config_text += next_line(in, path);
    config_text += '\n';
  }
  ckpt.config = parse_config_text(config_text);

  {
    std::istringstream shape(expect_kv(in, "input_shape", path));
    std::size_t d;
    while (shape >> d) ckpt.input_shape.push_back(d);
    if (ckpt.input_shape.empty()) {
      throw ParseError(path + ": empty input shape");
    }
  }
  ckpt.epoch = std::stoull(expect_kv(in, "epoch", path));
  const std::size_t opt_step = std::stoull(expect_kv(in, "opt_step", path));
  ckpt.rngs.weights = deserialize_engine(expect_kv(in, "rng_weights", path));
  ckpt.rngs.dropout = deserialize_engine(expect_kv(in, "rng_dropout", path));
  ckpt.rngs.encoder = deserialize_engine(expect_kv(in, "rng_encoder", path));
  ckpt.rngs.noise = deserialize_engine(expect_kv(in, "rng_noise", path));
  ckpt.rngs.shuffle = deserialize_engine(expect_kv(in, "rng_shuffle", path));
  ckpt.rngs.batch = deserialize_engine(expect_kv(in, "rng_batch", path));

  const std::size_t n_metrics = std::stoull(expect_kv(in, "metrics", path));
  for (std::size_t i = 0; i < n_metrics; ++i) {
    ckpt.history.push_back(parse_record_line(next_line(in, path)));
  }

  // Rebuild the architecture, then overwrite every parameter from payload.
  const std::vector<LayerSpec> chain =
      parse_network_string(ckpt.config.network, ckpt.config.train.dropout_p);
  RngEngine throwaway = make_stream(0, "checkpoint-load");
  ckpt.net = build_network(chain, ckpt.input_shape,
                           LifConstants(ckpt.config.train.tau, ckpt.config.train.dt),
                           ckpt.config.train.surrogate, ckpt.config.train.v_th0,
                           throwaway);
  ckpt.opt = OptimizerState::init(ckpt.net);
  ckpt.opt.step = opt_step;

  const std::vector<TensorSlot> slots = tensor_slots(ckpt.net, ckpt.opt);
  const std::size_t n_tensors = std::stoull(expect_kv(in, "tensors", path));
  if (n_tensors != slots.size()) {
    throw ConsistencyError(path + ": checkpoint declares " +
                           std::to_string(n_tensors) + " tensors but the network has " +
                           std::to_string(slots.size()));
  }
  std::size_t total = 0;
  for (const TensorSlot& slot : slots) {
    std::istringstream decl(next_line(in, path));
    std::string name;
    decl >> name;
    if (name != slot.name) {
      throw ConsistencyError(path + ": expected tensor '" + slot.name +
                             "', found '" + name + "'");
    }
    std::vector<std::size_t> dims;
    std::size_t d;
    while (decl >> d) dims.push_back(d);
    if (dims != slot.tensor->shape()) {
      throw ConsistencyError(path + ": tensor '" + name +
                             "' shape does not match the rebuilt network");
    }
    total += slot.tensor->numel();
  }
  const std::size_t payload = std::stoull(expect_kv(in, "payload", path));
  if (payload != total) {
    throw FormatError(path + ": declared payload " + std::to_string(payload) +
                      " does not match tensor shapes totalling " +
                      std::to_string(total));
  }
  if (next_line(in, path) != "DATA") {
    throw ParseError(path + ": missing DATA marker");
  }

  for (const TensorSlot& slot : slots) {
    const std::streamsize n =
        static_cast<std::streamsize>(slot.tensor->numel() * sizeof(double));
    if (!in.read(reinterpret_cast<char*>(slot.tensor->data()), n)) {
      throw FormatError(path + ": truncated payload at tensor '" + slot.name + "'");
    }
  }
  char extra;
  if (in.read(&extra, 1)) {
    throw FormatError(path + ": trailing bytes after payload");
  }
  return ckpt;
}

std::string metrics_to_csv(const std::vector<MetricsRecord>& records) {
  std::string out = "epoch,split,loss,top1,afr,lr,seed,mode\n";
  for (const MetricsRecord& r : records) {
    out += record_line(r, /*full_precision=*/false);
    out += '\n';
  }
  return out;
}

void write_metrics(const std::string& path,
                   const std::vector<MetricsRecord>& records) {
  atomic_write(path, metrics_to_csv(records));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ostringstream head;
  head << "STLSNN-TENSOR 1\n";
  head << "shape =";
  for (const std::size_t d : t.shape()) head << ' ' << d;
  head << "\nDATA\n";
  std::string bytes = head.str();
  const std::size_t header_size = bytes.size();
  bytes.resize(header_size + t.numel() * sizeof(double));
  std::memcpy(bytes.data() + header_size, t.data(), t.numel() * sizeof(double));
  atomic_write(path, bytes);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor file " + path);
  if (next_line(in, path) != "STLSNN-TENSOR 1") {
    throw FormatError(path + ": not a tensor file of a supported version");
  }
  std::istringstream decl(expect_kv(in, "shape", path));
  std::vector<std::size_t> shape;
  std::size_t d;
  while (decl >> d) shape.push_back(d);
  if (next_line(in, path) != "DATA") {
    throw ParseError(path + ": missing DATA marker");
  }
  Tensor t(shape);
  const std::streamsize n = static_cast<std::streamsize>(t.numel() * sizeof(double));
  if (!in.read(reinterpret_cast<char*>(t.data()), n)) {
    throw FormatError(path + ": truncated tensor payload");
  }
  char extra;
  if (in.read(&extra, 1)) {
    throw FormatError(path + ": trailing bytes after payload");
  }
  return t;
}

}  // namespace stlsnn
