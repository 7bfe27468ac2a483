// Python bindings for the spiking-network trainer.
//
// The module mirrors the command-line surface: config-driven training and
// evaluation through an Engine object, plus the standalone data-preparation
// operations (IDX images, event streams, rate coding, noise injection).
// Tensors cross the boundary as contiguous float64 numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <vector>

#include "stlsnn/checkpoint.hpp"
#include "stlsnn/config.hpp"
#include "stlsnn/data.hpp"
#include "stlsnn/error.hpp"
#include "stlsnn/gradcheck.hpp"
#include "stlsnn/loss.hpp"
#include "stlsnn/network.hpp"
#include "stlsnn/train.hpp"

namespace py = pybind11;
using namespace stlsnn;

namespace {

py::array_t<double> to_numpy(const Tensor& t) {
  py::array_t<double> out(t.shape());
  std::memcpy(out.mutable_data(), t.data(), t.numel() * sizeof(double));
  return out;
}

Tensor from_numpy(const py::array& arr) {
  const py::array_t<double, py::array::c_style | py::array::forcecast> a(arr);
  std::vector<std::size_t> shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) {
    shape[std::size_t(i)] = std::size_t(a.shape(i));
  }
  Tensor t(shape);
  std::memcpy(t.data(), a.data(), t.numel() * sizeof(double));
  return t;
}

py::dict record_to_dict(const MetricsRecord& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["split"] = r.split;
  d["loss"] = r.loss;
  d["top1"] = r.top1;
  d["afr"] = r.afr;
  d["lr"] = r.lr;
  d["seed"] = r.seed;
  d["mode"] = r.mode;
  return d;
}

NoiseSpec make_noise_spec(const std::string& kind, double level,
                          std::uint64_t seed) {
  NoiseSpec spec;
  if (kind == "salt_pepper") {
    spec.kind = NoiseKind::SaltPepper;
  } else if (kind == "uniform") {
    spec.kind = NoiseKind::Uniform;
  } else {
    throw ConfigError("unknown noise kind '" + kind +
                      "' (expected salt_pepper or uniform)");
  }
  spec.nl = level;
  spec.seed = seed;
  spec.validate();
  return spec;
}

// Config-driven training engine: one experiment (dataset + network + training
// schedule) with checkpointable state.
class Engine {
 public:
  explicit Engine(const std::string& config_text) {
    ExperimentConfig cfg = parse_config_text(config_text);
    data_ = load_dataset(cfg.dataset);
    ckpt_.config = cfg;
    ckpt_.input_shape = data_.input_shape;
    ckpt_.rngs = RngBundle::from_seed(cfg.train.seed);
    ckpt_.net = build_network(
        parse_network_string(cfg.network, cfg.train.dropout_p),
        ckpt_.input_shape, LifConstants(cfg.train.tau, cfg.train.dt),
        cfg.train.surrogate, cfg.train.v_th0, ckpt_.rngs.weights);
    ckpt_.opt = OptimizerState::init(ckpt_.net);
  }

  static Engine load(const std::string& path) {
    Engine e(Checkpoint{});
    e.ckpt_ = load_checkpoint(path);
    e.data_ = load_dataset(e.ckpt_.config.dataset);
    return e;
  }

  void save(const std::string& path) const { save_checkpoint(path, ckpt_); }

  py::dict train_epoch_once() {
    const MetricsRecord tr = stlsnn::train_epoch(
        ckpt_.net, data_.train, ckpt_.config.train, ckpt_.epoch, ckpt_.opt,
        ckpt_.rngs);
    const MetricsRecord te =
        stlsnn::evaluate(ckpt_.net, data_.test, ckpt_.config.train, ckpt_.epoch);
    ckpt_.history.push_back(tr);
    ckpt_.history.push_back(te);
    ckpt_.epoch += 1;
    py::dict d;
    d["train"] = record_to_dict(tr);
    d["test"] = record_to_dict(te);
    return d;
  }

  py::list train() {
    py::list out;
    while (ckpt_.epoch < ckpt_.config.train.epochs) {
      out.append(train_epoch_once());
    }
    return out;
  }

  py::dict evaluate_now(const std::string& noise_kind, double noise_level,
                        std::uint64_t noise_seed) {
    SampleSet test = data_.test;
    if (!noise_kind.empty()) {
      const NoiseSpec spec = make_noise_spec(noise_kind, noise_level, noise_seed);
      test.inputs = spec.kind == NoiseKind::SaltPepper
                        ? inject_salt_pepper(test.inputs, spec)
                        : inject_uniform_noise(test.inputs, spec);
    }
    return record_to_dict(
        stlsnn::evaluate(ckpt_.net, test, ckpt_.config.train, ckpt_.epoch));
  }

  // Class spike rates for a batch of analog frames, shape [S, ...input].
  py::array_t<double> rates(const py::array& batch) {
    const Tensor input = from_numpy(batch);
    const ForwardCache cache =
        network_forward(ckpt_.net, input, ckpt_.config.train.T, RunMode::Eval);
    return to_numpy(readout_rates(ckpt_.net, cache));
  }

  py::array_t<std::int64_t> predict(const py::array& batch) {
    const Tensor r = from_numpy(rates(batch));
    const std::size_t S = r.shape()[0];
    const std::size_t C = r.shape()[1];
    py::array_t<std::int64_t> out(S);
    for (std::size_t s = 0; s < S; ++s) {
      Tensor row({C});
      for (std::size_t c = 0; c < C; ++c) row[c] = r[s * C + c];
      out.mutable_at(py::ssize_t(s)) = std::int64_t(predict_class(row));
    }
    return out;
  }

  py::list thresholds() const {
    py::list out;
    for (const Stage& s : ckpt_.net.stages) {
      if (!s.params.v_th.empty()) out.append(to_numpy(s.params.v_th));
    }
    return out;
  }

  void shuffle(std::uint64_t seed) { shuffle_thresholds(ckpt_.net, seed); }

  void set_mode(const std::string& mode) {
    ckpt_.config.train.mode = parse_learning_mode(mode);
  }

  std::string mode() const {
    return learning_mode_name(ckpt_.config.train.mode);
  }

  std::size_t epoch() const { return ckpt_.epoch; }
  std::string network() const { return ckpt_.config.network; }
  std::string config_text() const { return emit_config(ckpt_.config); }
  std::string metrics_csv() const { return stlsnn::metrics_to_csv(ckpt_.history); }

  py::list history() const {
    py::list out;
    for (const MetricsRecord& r : ckpt_.history) out.append(record_to_dict(r));
    return out;
  }

  Checkpoint& checkpoint() { return ckpt_; }

 private:
  explicit Engine(Checkpoint ckpt) : ckpt_(std::move(ckpt)) {}

  Checkpoint ckpt_;
  LoadedData data_;
};

py::dict ensemble_evaluate(std::vector<Engine*> engines) {
  if (engines.empty()) throw EmptyInputError("ensemble_evaluate: no members");
  std::vector<Network> members;
  for (Engine* e : engines) members.push_back(e->checkpoint().net);
  Engine& first = *engines.front();
  const LoadedData data = load_dataset(first.checkpoint().config.dataset);
  return record_to_dict(
      jdf_evaluate(members, data.test, first.checkpoint().config.train));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Spiking-network trainer with jointly learned synaptic weights "
            "and per-neuron spike thresholds";
  m.attr("__version__") = "1.0.0";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  // --- data preparation -----------------------------------------------
  m.def(
      "synthetic_digits",
      [](std::size_t n_train, std::size_t n_test, std::size_t h, std::size_t w,
         std::uint64_t seed) {
        const SyntheticDigits d = make_synthetic_digits(n_train, n_test, h, w, seed);
        return py::make_tuple(to_numpy(d.train.pixels), d.train.labels,
                              to_numpy(d.test.pixels), d.test.labels);
      },
      py::arg("n_train"), py::arg("n_test"), py::arg("height") = 14,
      py::arg("width") = 14, py::arg("seed") = 12345,
      "Procedural labelled digit images; returns (train_x, train_y, test_x, "
      "test_y)");

  m.def(
      "load_idx",
      [](const std::string& images, const std::string& labels) {
        const ImageSet set = load_idx(images, labels);
        return py::make_tuple(to_numpy(set.pixels), set.labels);
      },
      py::arg("images"), py::arg("labels"),
      "Read an IDX image/label pair; pixels scaled to [0,1]");

  m.def(
      "save_idx",
      [](const py::array& pixels, const std::vector<std::size_t>& labels,
         const std::string& images, const std::string& labels_path) {
        ImageSet set;
        set.pixels = from_numpy(pixels);
        set.labels = labels;
        save_idx(set, images, labels_path);
      },
      py::arg("pixels"), py::arg("labels"), py::arg("images_path"),
      py::arg("labels_path"));

  m.def(
      "downsample2x",
      [](const py::array& x) {
        ImageSet set;
        set.pixels = from_numpy(x);
        return to_numpy(downsample2x(set).pixels);
      },
      py::arg("images"),
      "2x2 mean pooling of [N][ch][H][W] images with even H and W");

  m.def(
      "bernoulli_encode",
      [](const py::array& x, std::size_t T, std::uint64_t seed) {
        RngEngine rng = make_stream(seed, "encoder");
        return to_numpy(bernoulli_encode(from_numpy(x), T, rng));
      },
      py::arg("pixels"), py::arg("T"), py::arg("seed") = 0,
      "Rate-code pixels in [0,1] into T binary frames");

  m.def(
      "salt_pepper_noise",
      [](const py::array& x, double level, std::uint64_t seed) {
        return to_numpy(
            inject_salt_pepper(from_numpy(x), make_noise_spec("salt_pepper", level, seed)));
      },
      py::arg("pixels"), py::arg("level"), py::arg("seed") = 0);

  m.def(
      "uniform_noise",
      [](const py::array& x, double level, std::uint64_t seed) {
        return to_numpy(
            inject_uniform_noise(from_numpy(x), make_noise_spec("uniform", level, seed)));
      },
      py::arg("pixels"), py::arg("level"), py::arg("seed") = 0);

  m.def(
      "slice_events_equal",
      [](const std::string& path, std::size_t n) {
        return to_numpy(slice_equal_count(load_events(path), n));
      },
      py::arg("path"), py::arg("slices"),
      "Split an event-stream file into n frames with equal event counts");

  m.def(
      "slice_events_fixed",
      [](const std::string& path, std::uint64_t slice_ms, std::uint64_t total_ms) {
        return to_numpy(slice_fixed_duration(load_events(path), slice_ms, total_ms));
      },
      py::arg("path"), py::arg("slice_ms"), py::arg("total_ms"),
      "Split an event-stream file into fixed-duration frames");

  // --- training mathematics --------------------------------------------
  m.def("lr_schedule", &lr_schedule, py::arg("eta0"), py::arg("gamma"),
        py::arg("epoch"), "Exponentially decayed learning rate");

  m.def(
      "mse_loss",
      [](const py::array& rates, const py::array& targets, std::size_t T,
         std::size_t population) {
        const Tensor r = from_numpy(rates);
        const LossSpec spec{r.shape()[0], r.shape()[1], population, T};
        return mse_loss(r, from_numpy(targets), spec);
      },
      py::arg("rates"), py::arg("targets"), py::arg("T"),
      py::arg("population") = 1,
      "Mean squared error between class spike rates and one-hot targets");

  m.def(
      "grad_check_random",
      [](std::uint64_t seed, double epsilon) {
        GradCheckCase c = make_random_dense_case(seed);
        return grad_check(c.net, c.sample, c.y, c.T, epsilon);
      },
      py::arg("seed"), py::arg("epsilon") = 1e-4,
      "Max relative error of analytic gradients vs central finite differences "
      "on a seeded random net");

  // --- engine ------------------------------------------------------------
  py::class_<Engine>(m, "Engine",
                     "Config-driven trainer holding a network, optimizer "
                     "state, and metrics history")
      .def(py::init<const std::string&>(), py::arg("config_text"))
      .def_static("load", &Engine::load, py::arg("path"),
                  "Restore an engine from a checkpoint file")
      .def("save", &Engine::save, py::arg("path"),
           "Write a checkpoint restoring this exact state")
      .def("train_epoch", &Engine::train_epoch_once,
           "Run one training epoch plus a test evaluation; returns both "
           "records")
      .def("train", &Engine::train,
           "Train until the configured epoch count; returns per-epoch records")
      .def("evaluate", &Engine::evaluate_now, py::arg("noise_kind") = "",
           py::arg("noise_level") = 0.0, py::arg("noise_seed") = 0,
           "Evaluate on the test split, optionally with pixel noise")
      .def("rates", &Engine::rates, py::arg("batch"),
           "Class spike rates for a batch of analog frames [S, ...input]")
      .def("predict", &Engine::predict, py::arg("batch"),
           "Predicted class indices for a batch of analog frames")
      .def("thresholds", &Engine::thresholds,
           "Per-layer firing-threshold vectors")
      .def("shuffle_thresholds", &Engine::shuffle, py::arg("seed"),
           "Permute each layer's thresholds in place")
      .def("set_mode", &Engine::set_mode, py::arg("mode"),
           "Switch the learning mode: 'sl', 'tl', or 'stl'")
      .def("history", &Engine::history, "All recorded metrics")
      .def("metrics_csv", &Engine::metrics_csv,
           "Recorded metrics as CSV text")
      .def("config_text", &Engine::config_text,
           "The engine's configuration in config-file syntax")
      .def_property_readonly("epoch", &Engine::epoch)
      .def_property_readonly("mode", &Engine::mode)
      .def_property_readonly("network", &Engine::network);

  m.def("ensemble_evaluate", &ensemble_evaluate, py::arg("engines"),
        "Joint-decision evaluation: sums members' class spike counts on the "
        "first engine's test split");
}
