#include "stlsnn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "stlsnn/checkpoint.hpp"
#include "stlsnn/config.hpp"
#include "stlsnn/data.hpp"
#include "stlsnn/error.hpp"
#include "stlsnn/gradcheck.hpp"
#include "stlsnn/loss.hpp"
#include "stlsnn/train.hpp"

namespace stlsnn {

namespace {

constexpr double kGradCheckTolerance = 1e-5;

struct CommonFlags {
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string mode;
};

void add_seed_option(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option_function<std::uint64_t>(
         "--seed",
         [&flags](std::uint64_t v) {
           flags.seed = v;
           flags.seed_set = true;
         },
         "Experiment seed (overrides the config)");
}

void apply_overrides(ExperimentConfig& cfg, const CommonFlags& flags) {
  if (flags.seed_set) cfg.train.seed = flags.seed;
  if (!flags.mode.empty()) cfg.train.mode = parse_learning_mode(flags.mode);
  if (!flags.out.empty()) cfg.out_dir = flags.out;
}

Checkpoint fresh_checkpoint(const ExperimentConfig& cfg,
                            const std::vector<std::size_t>& input_shape) {
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.input_shape = input_shape;
  ckpt.rngs = RngBundle::from_seed(cfg.train.seed);
  const std::vector<LayerSpec> chain =
      parse_network_string(cfg.network, cfg.train.dropout_p);
  ckpt.net = build_network(chain, input_shape,
                           LifConstants(cfg.train.tau, cfg.train.dt),
                           cfg.train.surrogate, cfg.train.v_th0,
                           ckpt.rngs.weights);
  ckpt.opt = OptimizerState::init(ckpt.net);
  return ckpt;
}

std::string record_summary(const MetricsRecord& r) {
  std::ostringstream out;
  out << "epoch " << r.epoch << " [" << r.split << "] loss " << r.loss
      << " top1 " << r.top1 << " afr " << r.afr << " lr " << r.lr;
  return out.str();
}

int run_train(const CommonFlags& flags, const std::string& resume_path) {
  Checkpoint ckpt;
  if (!resume_path.empty()) {
    ckpt = load_checkpoint(resume_path);
    apply_overrides(ckpt.config, flags);
  } else {
    ExperimentConfig cfg = parse_config(flags.config_path);
    apply_overrides(cfg, flags);
    const LoadedData probe = load_dataset(cfg.dataset);
    ckpt = fresh_checkpoint(cfg, probe.input_shape);
  }
  const ExperimentConfig& cfg = ckpt.config;
  const LoadedData data = load_dataset(cfg.dataset);

  std::filesystem::create_directories(cfg.out_dir);
  const std::string metrics_path = cfg.out_dir + "/metrics.csv";
  const std::string ckpt_path = cfg.out_dir + "/checkpoint.ckpt";

  for (std::size_t epoch = ckpt.epoch; epoch < cfg.train.epochs; ++epoch) {
    const MetricsRecord tr =
        train_epoch(ckpt.net, data.train, cfg.train, epoch, ckpt.opt, ckpt.rngs);
    const MetricsRecord te = evaluate(ckpt.net, data.test, cfg.train, epoch);
    ckpt.history.push_back(tr);
    ckpt.history.push_back(te);
    ckpt.epoch = epoch + 1;
    write_metrics(metrics_path, ckpt.history);
    save_checkpoint(ckpt_path, ckpt);
    std::cout << record_summary(tr) << '\n' << record_summary(te) << '\n';
  }
  if (ckpt.epoch >= cfg.train.epochs) {
    // Covers epochs == 0: emit the initialization state and an empty log.
    write_metrics(metrics_path, ckpt.history);
    save_checkpoint(ckpt_path, ckpt);
  }
  std::cout << "wrote " << metrics_path << " and " << ckpt_path << '\n';
  return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& noise_kind,
             double noise_level, std::uint64_t noise_seed, bool noise_given,
             const std::string& out) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  LoadedData data = load_dataset(ckpt.config.dataset);

  NoiseSpec spec;
  bool apply = false;
  if (noise_given) {
    spec.kind = noise_kind == "uniform" ? NoiseKind::Uniform : NoiseKind::SaltPepper;
    spec.nl = noise_level;
    spec.seed = noise_seed;
    apply = true;
  } else if (ckpt.config.has_noise) {
    spec = ckpt.config.noise;
    apply = true;
  }
  if (apply) {
    spec.validate();
    data.test.inputs = spec.kind == NoiseKind::SaltPepper
                           ? inject_salt_pepper(data.test.inputs, spec)
                           : inject_uniform_noise(data.test.inputs, spec);
  }

  const MetricsRecord rec =
      evaluate(ckpt.net, data.test, ckpt.config.train, ckpt.epoch);
  std::cout << record_summary(rec) << '\n';
  if (!out.empty()) write_metrics(out, {rec});
  return 0;
}

int run_gradcheck(std::uint64_t seed, std::size_t count, double epsilon,
                  const std::string& config_path) {
  double worst = 0.0;
  if (!config_path.empty()) {
    const ExperimentConfig cfg = parse_config(config_path);
    const LoadedData data = load_dataset(cfg.dataset);
    Checkpoint ckpt = fresh_checkpoint(cfg, data.input_shape);
    std::vector<std::size_t> idx(std::min<std::size_t>(2, data.test.count()));
    std::iota(idx.begin(), idx.end(), 0);
    RngEngine encoder = make_stream(seed, "encoder-eval");
    SampleSet direct = data.test;  // probe with static analog frames
    direct.encoding = EncodingKind::Direct;
    const Tensor sample = assemble_batch(direct, idx, cfg.train.T, &encoder);
    std::vector<std::size_t> labels;
    for (const std::size_t i : idx) labels.push_back(data.test.labels[i]);
    const Tensor y = one_hot(labels, ckpt.net.classes);
    worst = grad_check(ckpt.net, sample, y, cfg.train.T, epsilon);
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      GradCheckCase c = make_random_dense_case(seed + i);
      worst = std::max(worst, grad_check(c.net, c.sample, c.y, c.T, epsilon));
    }
  }
  std::cout << "max relative error = " << worst << '\n';
  return worst < kGradCheckTolerance ? 0 : 2;
}

int run_encode(const CommonFlags& flags, std::size_t limit) {
  const ExperimentConfig cfg = parse_config(flags.config_path);
  const std::uint64_t seed = flags.seed_set ? flags.seed : cfg.train.seed;
  if (flags.out.empty()) throw ConfigError("encode needs --out");

  if (cfg.dataset.kind == "events") {
    const EventStream stream = load_events(cfg.dataset.events_path);
    const Tensor frames =
        cfg.dataset.slicer == "equal_count"
            ? slice_equal_count(stream, cfg.dataset.slices)
            : slice_fixed_duration(stream, cfg.dataset.slice_ms,
                                   cfg.dataset.total_ms);
    save_tensor(flags.out, frames);
    std::cout << "wrote " << frames.dim(0) << " frames to " << flags.out << '\n';
    return 0;
  }

  const LoadedData data = load_dataset(cfg.dataset);
  const std::size_t n = std::min(limit, data.test.count());
  if (n == 0) throw EmptyInputError("no samples to encode");
  RngEngine encoder = make_stream(seed, "encoder");
  const std::vector<std::size_t> shape = data.test.sample_shape();
  std::vector<std::size_t> out_shape{n, cfg.train.T};
  out_shape.insert(out_shape.end(), shape.begin(), shape.end());
  Tensor spikes(out_shape);
  const std::size_t unit = Tensor::numel(shape);
  Tensor image(shape);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(data.test.inputs.data() + i * unit,
              data.test.inputs.data() + (i + 1) * unit, image.data());
    const Tensor train = bernoulli_encode(image, cfg.train.T, encoder);
    std::copy(train.begin(), train.end(),
              spikes.data() + i * cfg.train.T * unit);
  }
  save_tensor(flags.out, spikes);
  std::cout << "wrote " << n << " spike trains to " << flags.out << '\n';
  return 0;
}

int run_noise(const CommonFlags& flags, const std::string& kind_flag,
              double level_flag, bool noise_given) {
  const ExperimentConfig cfg = parse_config(flags.config_path);
  if (flags.out.empty()) throw ConfigError("noise needs --out");

  NoiseSpec spec = cfg.noise;
  if (noise_given) {
    spec.kind = kind_flag == "uniform" ? NoiseKind::Uniform : NoiseKind::SaltPepper;
    spec.nl = level_flag;
  }
  if (flags.seed_set) spec.seed = flags.seed;
  if (!noise_given && !cfg.has_noise) {
    throw ConfigError("no noise specified: add a [noise] section or --level");
  }
  spec.validate();

  const LoadedData data = load_dataset(cfg.dataset);
  ImageSet noisy;
  noisy.pixels = spec.kind == NoiseKind::SaltPepper
                     ? inject_salt_pepper(data.test.inputs, spec)
                     : inject_uniform_noise(data.test.inputs, spec);
  noisy.labels = data.test.labels;
  save_idx(noisy, flags.out + "-images.idx", flags.out + "-labels.idx");
  std::cout << "wrote " << noisy.count() << " noisy samples to " << flags.out
            << "-{images,labels}.idx\n";
  return 0;
}

int run_shuffle(const std::string& ckpt_path, const CommonFlags& flags,
                bool reinit_weights) {
  if (flags.out.empty()) throw ConfigError("shuffle-thresholds needs --out");
  Checkpoint source = load_checkpoint(ckpt_path);
  const std::uint64_t seed = flags.seed_set ? flags.seed : source.config.train.seed;

  shuffle_thresholds(source.net, seed);

  Checkpoint out;
  out.config = source.config;
  out.config.train.seed = seed;
  out.config.train.mode = LearningMode::SL;  // retrain with thresholds frozen
  out.input_shape = source.input_shape;
  out.rngs = RngBundle::from_seed(seed);
  if (reinit_weights) {
    const std::vector<LayerSpec> chain =
        parse_network_string(out.config.network, out.config.train.dropout_p);
    out.net = build_network(chain, out.input_shape,
                            LifConstants(out.config.train.tau, out.config.train.dt),
                            out.config.train.surrogate, out.config.train.v_th0,
                            out.rngs.weights);
    for (std::size_t i = 0; i < out.net.stages.size(); ++i) {
      out.net.stages[i].params.v_th = source.net.stages[i].params.v_th;
    }
  } else {
    out.net = source.net;
  }
  out.opt = OptimizerState::init(out.net);
  out.epoch = 0;
  save_checkpoint(flags.out, out);
  std::cout << "wrote shuffled-threshold initialization to " << flags.out << '\n';
  return 0;
}

int run_jdf_eval(const std::vector<std::string>& ckpt_paths,
                 const std::string& out) {
  std::vector<Checkpoint> ckpts;
  for (const std::string& p : ckpt_paths) ckpts.push_back(load_checkpoint(p));
  std::vector<Network> members;
  for (Checkpoint& c : ckpts) members.push_back(c.net);
  const ExperimentConfig& cfg = ckpts.front().config;
  const LoadedData data = load_dataset(cfg.dataset);
  const MetricsRecord rec = jdf_evaluate(members, data.test, cfg.train);
  std::cout << "ensemble of " << members.size() << ": loss " << rec.loss
            << " top1 " << rec.top1 << " afr " << rec.afr << '\n';
  if (!out.empty()) write_metrics(out, {rec});
  return 0;
}

int run_track(const std::vector<std::string>& ckpt_paths,
              const CommonFlags& flags, std::size_t samples_flag) {
  if (flags.out.empty()) throw ConfigError("track-thresholds needs --out");
  std::vector<Checkpoint> ckpts;
  for (const std::string& p : ckpt_paths) ckpts.push_back(load_checkpoint(p));

  std::size_t samples = samples_flag;
  if (samples == 0) samples = ckpts.front().config.track_samples;
  std::size_t min_units = SIZE_MAX;
  for (const Stage& s : ckpts.front().net.stages) {
    if (!s.params.v_th.empty()) {
      min_units = std::min(min_units, s.params.v_th.numel());
    }
  }
  samples = std::min(samples, min_units);

  // The same seeded unit subset is tracked across every checkpoint.
  const std::uint64_t seed =
      flags.seed_set ? flags.seed : ckpts.front().config.train.seed;
  RngEngine rng = make_stream(seed, "track");
  std::vector<std::size_t> pool(min_units);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < samples; ++i) {
    std::swap(pool[i], pool[i + uniform_index(rng, min_units - i)]);
  }
  const std::vector<std::size_t> indices(pool.begin(), pool.begin() + samples);

  std::ostringstream csv;
  csv << "epoch,stage,units,mean,stddev,lo,hi";
  for (std::size_t i = 0; i < samples; ++i) csv << ",v" << i;
  csv << '\n';
  for (const Checkpoint& c : ckpts) {
    for (const ThresholdSnapshot& snap : track_thresholds(c.net, indices)) {
      csv << c.epoch << ',' << snap.stage << ','
          << c.net.stages[snap.stage].params.v_th.numel() << ',' << snap.mean
          << ',' << snap.stddev << ',' << snap.hist_lo << ',' << snap.hist_hi;
      for (const double v : snap.sampled) csv << ',' << v;
      csv << '\n';
    }
  }
  atomic_write_file(flags.out, csv.str());
  std::cout << "wrote threshold snapshots for " << ckpts.size()
            << " checkpoints to " << flags.out << '\n';
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Spiking-network trainer with jointly learned synaptic weights "
               "and per-neuron spike thresholds"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  std::string resume_path;
  CLI::App* train = app.add_subcommand("train", "Train a network from a config");
  train->add_option("--config", train_flags.config_path, "Experiment config file");
  train->add_option("--resume", resume_path, "Checkpoint to resume from");
  train->add_option("--out", train_flags.out, "Output directory override");
  train->add_option("--mode", train_flags.mode, "Learning mode override")
      ->check(CLI::IsMember({"sl", "tl", "stl"}));
  add_seed_option(train, train_flags);

  std::string eval_ckpt, eval_out, eval_noise_kind = "salt_pepper";
  double eval_noise_level = 0.0;
  std::uint64_t eval_noise_seed = 0;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint to evaluate")->required();
  eval->add_option("--out", eval_out, "Metrics CSV to write");
  CLI::Option* level_opt =
      eval->add_option("--noise-level", eval_noise_level, "Noise fraction [0,1]");
  eval->add_option("--noise-kind", eval_noise_kind, "Noise kind")
      ->check(CLI::IsMember({"salt_pepper", "uniform"}));
  eval->add_option("--noise-seed", eval_noise_seed, "Noise RNG seed");

  CommonFlags gc_flags;
  std::size_t gc_count = 5;
  double gc_epsilon = 1e-4;
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference gradient validation");
  gradcheck->add_option("--config", gc_flags.config_path,
                        "Check the configured network instead of random nets");
  gradcheck->add_option("--count", gc_count, "Number of random nets");
  gradcheck->add_option("--epsilon", gc_epsilon, "Finite-difference step");
  add_seed_option(gradcheck, gc_flags);

  CommonFlags enc_flags;
  std::size_t enc_limit = 16;
  CLI::App* encode =
      app.add_subcommand("encode", "Write encoded spike trains or event frames");
  encode->add_option("--config", enc_flags.config_path, "Experiment config file")
      ->required();
  encode->add_option("--out", enc_flags.out, "Tensor file to write")->required();
  encode->add_option("--limit", enc_limit, "Samples to encode (image datasets)");
  add_seed_option(encode, enc_flags);

  CommonFlags noise_flags;
  std::string noise_kind = "salt_pepper";
  double noise_level = 0.0;
  CLI::App* noise = app.add_subcommand("noise", "Write a noise-corrupted dataset");
  noise->add_option("--config", noise_flags.config_path, "Experiment config file")
      ->required();
  noise->add_option("--out", noise_flags.out, "Output IDX basename")->required();
  CLI::Option* noise_level_opt =
      noise->add_option("--level", noise_level, "Noise fraction [0,1]");
  noise->add_option("--kind", noise_kind, "Noise kind")
      ->check(CLI::IsMember({"salt_pepper", "uniform"}));
  add_seed_option(noise, noise_flags);

  CommonFlags shuf_flags;
  std::string shuf_ckpt;
  bool reinit_weights = true;
  CLI::App* shuffle = app.add_subcommand(
      "shuffle-thresholds", "Permute a checkpoint's thresholds layer-wise");
  shuffle->add_option("--ckpt", shuf_ckpt, "Source checkpoint")->required();
  shuffle->add_option("--out", shuf_flags.out, "Checkpoint to write")->required();
  shuffle->add_flag("--reinit-weights,!--keep-weights", reinit_weights,
                    "Reinitialize weights from the seed (default on)");
  add_seed_option(shuffle, shuf_flags);

  std::vector<std::string> jdf_ckpts;
  std::string jdf_out;
  CLI::App* jdf = app.add_subcommand("jdf-eval", "Joint decision of k checkpoints");
  jdf->add_option("--ckpt", jdf_ckpts, "Member checkpoints (repeatable)")
      ->required()
      ->expected(-1);
  jdf->add_option("--out", jdf_out, "Metrics CSV to write");

  CommonFlags track_flags;
  std::vector<std::string> track_ckpts;
  std::size_t track_samples = 0;
  CLI::App* track = app.add_subcommand(
      "track-thresholds", "Per-layer threshold snapshots of a checkpoint series");
  track->add_option("--ckpt", track_ckpts, "Checkpoints in epoch order")
      ->required()
      ->expected(-1);
  track->add_option("--out", track_flags.out, "CSV to write")->required();
  track->add_option("--samples", track_samples, "Units sampled per layer");
  add_seed_option(track, track_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (train->parsed()) {
      if (train_flags.config_path.empty() && resume_path.empty()) {
        throw ConfigError("train needs --config or --resume");
      }
      return run_train(train_flags, resume_path);
    }
    if (eval->parsed()) {
      return run_eval(eval_ckpt, eval_noise_kind, eval_noise_level,
                      eval_noise_seed, level_opt->count() > 0, eval_out);
    }
    if (gradcheck->parsed()) {
      const std::uint64_t seed = gc_flags.seed_set ? gc_flags.seed : 1;
      return run_gradcheck(seed, gc_count, gc_epsilon, gc_flags.config_path);
    }
    if (encode->parsed()) return run_encode(enc_flags, enc_limit);
    if (noise->parsed()) {
      return run_noise(noise_flags, noise_kind, noise_level,
                       noise_level_opt->count() > 0);
    }
    if (shuffle->parsed()) return run_shuffle(shuf_ckpt, shuf_flags, reinit_weights);
    if (jdf->parsed()) return run_jdf_eval(jdf_ckpts, jdf_out);
    if (track->parsed()) return run_track(track_ckpts, track_flags, track_samples);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace stlsnn
