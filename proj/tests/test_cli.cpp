#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stlsnn/checkpoint.hpp"
#include "stlsnn/cli.hpp"
#include "stlsnn/config.hpp"
#include "stlsnn/data.hpp"
#include "stlsnn/error.hpp"
#include "stlsnn/train.hpp"

using namespace stlsnn;

namespace {

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("stlsnn");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return cli_main(int(argv.size()), argv.data());
}

std::string scratch_dir(const std::string& name) {
  const std::string dir = "/tmp/stlsnn_cli_" + name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// A small synthetic-digit experiment that trains in well under a second.
std::string write_toy_config(const std::string& dir, std::size_t epochs,
                             std::uint64_t seed,
                             const std::string& extra_train_keys = "") {
  std::ostringstream ini;
  ini << "[dataset]\n"
      << "kind = synthetic\n"
      << "n_train = 32\n"
      << "n_test = 16\n"
      << "height = 14\n"
      << "width = 14\n"
      << "data_seed = 3\n"
      << "[network]\n"
      << "layers = FC16-BN-VotingC10P2\n"
      << "[train]\n"
      << "T = 4\n"
      << "batch_size = 16\n"
      << "epochs = " << epochs << "\n"
      << "seed = " << seed << "\n"
      << extra_train_keys;
  const std::string path = dir + "/exp.ini";
  std::ofstream out(path);
  out << ini.str();
  return path;
}

std::vector<std::string> split_csv_row(const std::string& text,
                                       std::size_t row) {
  std::istringstream lines(text);
  std::string line;
  for (std::size_t i = 0; i <= row; ++i) REQUIRE(bool(std::getline(lines, line)));
  std::vector<std::string> fields;
  std::istringstream cells(line);
  std::string cell;
  while (std::getline(cells, cell, ',')) fields.push_back(cell);
  return fields;
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (const char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("command line rejects malformed invocations") {
  const std::string dir = scratch_dir("badargs");
  CHECK(run_cli({}) != 0);
  CHECK(run_cli({"frobnicate"}) != 0);
  CHECK(run_cli({"train", "--bogus-flag"}) != 0);
  // train needs a config or a checkpoint to start from.
  CHECK(run_cli({"train"}) == 1);
  // eval's checkpoint option is required.
  CHECK(run_cli({"eval"}) != 0);
  CHECK(run_cli({"eval", "--ckpt", dir + "/missing.ckpt"}) == 1);
  // Constrained choice values are validated by the parser.
  CHECK(run_cli({"train", "--config", dir + "/x.ini", "--mode", "bogus"}) != 0);
  CHECK(run_cli({"eval", "--ckpt", "x", "--noise-level", "0.1", "--noise-kind",
                 "gaussian"}) != 0);
  // Missing config file surfaces as a runtime error, not a crash.
  CHECK(run_cli({"train", "--config", dir + "/nonexistent.ini"}) == 1);
  CHECK(run_cli({"--help"}) == 0);
}

TEST_CASE("training run writes a metrics log and a checkpoint") {
  const std::string dir = scratch_dir("train");
  const std::string cfg_path = write_toy_config(dir, 2, 5);
  REQUIRE(run_cli({"train", "--config", cfg_path, "--out", dir + "/run"}) == 0);

  const std::string csv = read_file(dir + "/run/metrics.csv");
  CHECK(count_lines(csv) == 5);  // header + 2 epochs x {train,test}
  CHECK(csv.rfind("epoch,split,loss,top1,afr,lr,seed,mode\n", 0) == 0);

  const Checkpoint ckpt = load_checkpoint(dir + "/run/checkpoint.ckpt");
  CHECK(ckpt.epoch == 2);
  CHECK(ckpt.history.size() == 4);
  CHECK(ckpt.history[0].split == "train");
  CHECK(ckpt.history[1].split == "test");
  CHECK(ckpt.config.train.seed == 5);
  // The CSV on disk is exactly the formatted checkpoint history.
  CHECK(csv == metrics_to_csv(ckpt.history));
}

TEST_CASE("zero-epoch training writes the initialization state") {
  const std::string dir = scratch_dir("zeroepoch");
  const std::string cfg_path = write_toy_config(dir, 0, 5);
  REQUIRE(run_cli({"train", "--config", cfg_path, "--out", dir + "/run"}) == 0);

  CHECK(read_file(dir + "/run/metrics.csv") ==
        "epoch,split,loss,top1,afr,lr,seed,mode\n");
  const Checkpoint ckpt = load_checkpoint(dir + "/run/checkpoint.ckpt");
  CHECK(ckpt.epoch == 0);
  CHECK(ckpt.history.empty());
  CHECK(ckpt.opt.step == 0);
  CHECK(ckpt.net.stages.size() == 2);
}

TEST_CASE("repeated training runs produce byte-identical artifacts") {
  const std::string dir = scratch_dir("repro");
  const std::string cfg_path = write_toy_config(dir, 2, 7);
  REQUIRE(run_cli({"train", "--config", cfg_path, "--out", dir + "/a"}) == 0);
  REQUIRE(run_cli({"train", "--config", cfg_path, "--out", dir + "/b"}) == 0);

  CHECK(read_file(dir + "/a/metrics.csv") == read_file(dir + "/b/metrics.csv"));
  // The checkpoints differ only in the embedded output directory name, so
  // compare the loaded state instead of raw bytes.
  const Checkpoint a = load_checkpoint(dir + "/a/checkpoint.ckpt");
  const Checkpoint b = load_checkpoint(dir + "/b/checkpoint.ckpt");
  CHECK(a.epoch == b.epoch);
  CHECK(a.opt.step == b.opt.step);
  REQUIRE(a.net.stages.size() == b.net.stages.size());
  for (std::size_t i = 0; i < a.net.stages.size(); ++i) {
    CHECK(a.net.stages[i].params.W == b.net.stages[i].params.W);
    CHECK(a.net.stages[i].params.v_th == b.net.stages[i].params.v_th);
  }
  CHECK(metrics_to_csv(a.history) == metrics_to_csv(b.history));
}

TEST_CASE("resuming a finished run rewrites the same files") {
  const std::string dir = scratch_dir("resume");
  const std::string cfg_path = write_toy_config(dir, 2, 9);
  REQUIRE(run_cli({"train", "--config", cfg_path, "--out", dir + "/run"}) == 0);
  const std::string csv_before = read_file(dir + "/run/metrics.csv");
  const std::string ckpt_before = read_file(dir + "/run/checkpoint.ckpt");

  // All configured epochs are already done; resume just re-emits the state.
  REQUIRE(run_cli({"train", "--resume", dir + "/run/checkpoint.ckpt"}) == 0);
  CHECK(read_file(dir + "/run/metrics.csv") == csv_before);
  CHECK(read_file(dir + "/run/checkpoint.ckpt") == ckpt_before);
}

TEST_CASE("evaluation recomputes the stored test metrics deterministically") {
  const std::string dir = scratch_dir("eval");
  const std::string cfg_path = write_toy_config(dir, 1, 11);
  REQUIRE(run_cli({"train", "--config", cfg_path, "--out", dir + "/run"}) == 0);
  const std::string ckpt_path = dir + "/run/checkpoint.ckpt";

  REQUIRE(run_cli({"eval", "--ckpt", ckpt_path, "--out", dir + "/a.csv"}) == 0);
  REQUIRE(run_cli({"eval", "--ckpt", ckpt_path, "--out", dir + "/b.csv"}) == 0);
  CHECK(read_file(dir + "/a.csv") == read_file(dir + "/b.csv"));

  // The emitted record matches a direct library evaluation of the checkpoint.
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  const LoadedData data = load_dataset(ckpt.config.dataset);
  const MetricsRecord rec =
      evaluate(ckpt.net, data.test, ckpt.config.train, ckpt.epoch);
  CHECK(read_file(dir + "/a.csv") == metrics_to_csv({rec}));

  // Noise flags perturb the inputs reproducibly for a given seed.
  const std::vector<std::string> noisy = {
      "eval",          "--ckpt", ckpt_path,     "--out",       dir + "/n1.csv",
      "--noise-level", "0.3",    "--noise-kind", "salt_pepper", "--noise-seed",
      "21"};
  std::vector<std::string> noisy2 = noisy;
  noisy2[4] = dir + "/n2.csv";
  REQUIRE(run_cli(noisy) == 0);
  REQUIRE(run_cli(noisy2) == 0);
  CHECK(read_file(dir + "/n1.csv") == read_file(dir + "/n2.csv"));
  CHECK(count_lines(read_file(dir + "/n1.csv")) == 2);
}

TEST_CASE("gradcheck meets the tolerance from both entry points") {
  const std::string dir = scratch_dir("gradcheck");
  CHECK(run_cli({"gradcheck", "--seed", "1", "--count", "2"}) == 0);
  // A freshly initialized net must actually fire for the finite-difference
  // probe to be well conditioned; near-silent nets have true gradients below
  // the 1e-8 denominator floor, where FD round-off noise dominates.
  const std::string cfg_path =
      write_toy_config(dir, 1, 2, "initial_threshold = 0.5\n");
  CHECK(run_cli({"gradcheck", "--config", cfg_path}) == 0);
}

TEST_CASE("ensemble evaluation of duplicated members matches a single net") {
  const std::string dir = scratch_dir("jdf");
  const std::string cfg_path = write_toy_config(dir, 1, 13);
  REQUIRE(run_cli({"train", "--config", cfg_path, "--out", dir + "/run"}) == 0);
  const std::string ckpt_path = dir + "/run/checkpoint.ckpt";

  REQUIRE(run_cli({"eval", "--ckpt", ckpt_path, "--out", dir + "/solo.csv"}) ==
          0);
  REQUIRE(run_cli({"jdf-eval", "--ckpt", ckpt_path, "--ckpt", ckpt_path,
                   "--out", dir + "/duo.csv"}) == 0);

  // Duplicated members double every class count, so loss/top1/afr match the
  // solo evaluation exactly.
  const std::vector<std::string> solo = split_csv_row(read_file(dir + "/solo.csv"), 1);
  const std::vector<std::string> duo = split_csv_row(read_file(dir + "/duo.csv"), 1);
  REQUIRE(solo.size() == 8);
  REQUIRE(duo.size() == 8);
  CHECK(duo[1] == "test");
  CHECK(duo[2] == solo[2]);  // loss
  CHECK(duo[3] == solo[3]);  // top1
  CHECK(duo[4] == solo[4]);  // afr

  CHECK(run_cli({"jdf-eval", "--ckpt", ckpt_path, "--ckpt",
                 dir + "/missing.ckpt"}) == 1);
}

TEST_CASE("threshold shuffling writes a synapse-learning restart") {
  const std::string dir = scratch_dir("shuffle");
  const std::string cfg_path = write_toy_config(dir, 2, 17);
  REQUIRE(run_cli({"train", "--config", cfg_path, "--out", dir + "/run"}) == 0);
  const std::string src_path = dir + "/run/checkpoint.ckpt";
  const Checkpoint src = load_checkpoint(src_path);

  REQUIRE(run_cli({"shuffle-thresholds", "--ckpt", src_path, "--out",
                   dir + "/shuf.ckpt", "--seed", "7"}) == 0);
  const Checkpoint shuf = load_checkpoint(dir + "/shuf.ckpt");

  CHECK(shuf.config.train.mode == LearningMode::SL);
  CHECK(shuf.epoch == 0);
  CHECK(shuf.history.empty());
  CHECK(shuf.opt.step == 0);

  bool any_vth_moved = false;
  bool any_w_differs = false;
  REQUIRE(shuf.net.stages.size() == src.net.stages.size());
  for (std::size_t i = 0; i < src.net.stages.size(); ++i) {
    std::vector<double> a(src.net.stages[i].params.v_th.begin(),
                          src.net.stages[i].params.v_th.end());
    std::vector<double> b(shuf.net.stages[i].params.v_th.begin(),
                          shuf.net.stages[i].params.v_th.end());
    any_vth_moved = any_vth_moved || a != b;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);  // shuffling permutes thresholds without changing values
    if (!(shuf.net.stages[i].params.W == src.net.stages[i].params.W)) {
      any_w_differs = true;
    }
  }
  CHECK(any_vth_moved);
  CHECK(any_w_differs);  // weights reinitialize by default

  REQUIRE(run_cli({"shuffle-thresholds", "--ckpt", src_path, "--out",
                   dir + "/keep.ckpt", "--seed", "7", "--keep-weights"}) == 0);
  const Checkpoint kept = load_checkpoint(dir + "/keep.ckpt");
  for (std::size_t i = 0; i < src.net.stages.size(); ++i) {
    CHECK(kept.net.stages[i].params.W == src.net.stages[i].params.W);
    CHECK(kept.net.stages[i].params.v_th == shuf.net.stages[i].params.v_th);
  }
}

TEST_CASE("encode writes a loadable binary spike tensor") {
  const std::string dir = scratch_dir("encode");
  const std::string cfg_path = write_toy_config(dir, 1, 19);

  REQUIRE(run_cli({"encode", "--config", cfg_path, "--out", dir + "/a.tensor",
                   "--limit", "3", "--seed", "11"}) == 0);
  const Tensor spikes = load_tensor(dir + "/a.tensor");
  REQUIRE(spikes.shape() == std::vector<std::size_t>{3, 4, 1, 14, 14});
  for (const double v : spikes) CHECK((v == 0.0 || v == 1.0));

  REQUIRE(run_cli({"encode", "--config", cfg_path, "--out", dir + "/b.tensor",
                   "--limit", "3", "--seed", "11"}) == 0);
  CHECK(read_file(dir + "/a.tensor") == read_file(dir + "/b.tensor"));

  REQUIRE(run_cli({"encode", "--config", cfg_path, "--out", dir + "/c.tensor",
                   "--limit", "3", "--seed", "12"}) == 0);
  CHECK(read_file(dir + "/a.tensor") != read_file(dir + "/c.tensor"));
}

TEST_CASE("noise writes a perturbed copy of the test split") {
  const std::string dir = scratch_dir("noise");
  const std::string cfg_path = write_toy_config(dir, 1, 23);
  const ExperimentConfig cfg = parse_config(cfg_path);
  const LoadedData data = load_dataset(cfg.dataset);

  REQUIRE(run_cli({"noise", "--config", cfg_path, "--out", dir + "/pert",
                   "--level", "0.25", "--kind", "salt_pepper", "--seed",
                   "3"}) == 0);
  const ImageSet noisy =
      load_idx(dir + "/pert-images.idx", dir + "/pert-labels.idx");
  REQUIRE(noisy.pixels.shape() == data.test.inputs.shape());
  REQUIRE(noisy.labels == data.test.labels);
  for (const double v : noisy.pixels) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  // The noisy pixels survive the 8-bit round trip as exact 0s and 1s, so the
  // saved images cannot all match a clean round trip of the originals.
  ImageSet clean_set;
  clean_set.pixels = data.test.inputs;
  clean_set.labels = data.test.labels;
  save_idx(clean_set, dir + "/clean-images.idx", dir + "/clean-labels.idx");
  const ImageSet clean =
      load_idx(dir + "/clean-images.idx", dir + "/clean-labels.idx");
  CHECK(!(noisy.pixels == clean.pixels));

  REQUIRE(run_cli({"noise", "--config", cfg_path, "--out", dir + "/pert2",
                   "--level", "0.25", "--kind", "salt_pepper", "--seed",
                   "3"}) == 0);
  CHECK(read_file(dir + "/pert-images.idx") ==
        read_file(dir + "/pert2-images.idx"));
}

TEST_CASE("threshold tracking writes one row per stage per checkpoint") {
  const std::string dir = scratch_dir("track");
  const std::string cfg_path = write_toy_config(dir, 1, 29);
  REQUIRE(run_cli({"train", "--config", cfg_path, "--out", dir + "/run"}) == 0);
  const std::string ckpt_path = dir + "/run/checkpoint.ckpt";

  REQUIRE(run_cli({"track-thresholds", "--ckpt", ckpt_path, "--ckpt",
                   ckpt_path, "--out", dir + "/vth.csv", "--samples", "3",
                   "--seed", "2"}) == 0);
  const std::string csv = read_file(dir + "/vth.csv");
  CHECK(csv.rfind("epoch,stage,units,mean,stddev,lo,hi,v0,v1,v2\n", 0) == 0);
  CHECK(count_lines(csv) == 5);  // header + 2 checkpoints x 2 spiking stages

  const std::vector<std::string> row = split_csv_row(csv, 1);
  REQUIRE(row.size() == 10);
  CHECK(row[0] == "1");  // checkpoint epoch
  CHECK(row[1] == "0");  // first spiking stage
  CHECK(row[2] == "16");

  REQUIRE(run_cli({"track-thresholds", "--ckpt", ckpt_path, "--ckpt",
                   ckpt_path, "--out", dir + "/vth2.csv", "--samples", "3",
                   "--seed", "2"}) == 0);
  CHECK(read_file(dir + "/vth2.csv") == csv);
}
