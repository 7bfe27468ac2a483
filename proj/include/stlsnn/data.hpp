#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stlsnn/rng.hpp"
#include "stlsnn/tensor.hpp"

namespace stlsnn {

// Labeled image collection; pixels are [N][ch][H][W] scaled to [0,1].
struct ImageSet {
  Tensor pixels;
  std::vector<std::size_t> labels;

  std::size_t count() const { return labels.size(); }
  void validate() const;  // shape/label consistency, pixel range
};

// IDX binary ingestion (big-endian): image file magic 0x00000803 with dims
// N,H,W and N*H*W unsigned bytes; label file magic 0x00000801 with N and N
// bytes. Pixels are divided by 255 on load.
ImageSet load_idx(const std::string& images_path, const std::string& labels_path);

// Inverse of load_idx for single-channel sets; pixel p is stored as the byte
// round(p*255), so byte-sourced sets round-trip bit-exactly.
void save_idx(const ImageSet& set, const std::string& images_path,
              const std::string& labels_path);

// 2x2 mean pooling of every image; H and W must be even.
ImageSet downsample2x(const ImageSet& set);

// Each (timestep, pixel) entry is independently 1 with probability equal to
// the pixel value. Output is [T][image shape...].
Tensor bernoulli_encode(const Tensor& image, std::size_t T, RngEngine& rng);

// Timestamped polarity events from a (H,W) sensor.
struct Event {
  std::uint64_t t_us = 0;
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint8_t pol = 0;
};

struct EventStream {
  std::vector<Event> events;
  std::size_t h = 0;
  std::size_t w = 0;
};

// Plain-text event format: first line `H,W`, then one `t_us,x,y,pol` line
// per event with nondecreasing timestamps.
EventStream load_events(const std::string& path);
void save_events(const EventStream& stream, const std::string& path);

// Partitions the M events into n slices of near-equal count (slice j covers
// ordinal indices [floor(j*M/n), floor((j+1)*M/n))) and accumulates
// per-pixel per-polarity counts into frames [n][2][H][W].
Tensor slice_equal_count(const EventStream& stream, std::size_t n_slices);

// Fixed-duration slicing: total_ms/slice_ms frames; an event at time t
// (relative to the first event) lands in frame floor(t/slice_ms); events at
// or beyond total_ms are discarded.
Tensor slice_fixed_duration(const EventStream& stream, std::uint64_t slice_ms,
                            std::uint64_t total_ms);

enum class NoiseKind { SaltPepper, Uniform };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::SaltPepper;
  double nl = 0.0;  // noise level: fraction of positions corrupted
  std::uint64_t seed = 0;

  void validate() const;

  bool operator==(const NoiseSpec&) const = default;
};

// Selects exactly floor(nl*numel) positions uniformly at random (seeded) and
// sets each to 1.0 or 0.0 with equal probability; other entries untouched.
Tensor inject_salt_pepper(const Tensor& data, const NoiseSpec& spec);

// Same position selection; selected entries are replaced by independent
// uniform draws on [0,1).
Tensor inject_uniform_noise(const Tensor& data, const NoiseSpec& spec);

// Deterministic synthetic digit corpus: seven-segment style glyphs on an
// h x w canvas with random translation, intensity scaling, segment dropout
// and background speckle. Labels are balanced round-robin over 0..9.
struct SyntheticDigits {
  ImageSet train;
  ImageSet test;
};

SyntheticDigits make_synthetic_digits(std::size_t n_train, std::size_t n_test,
                                      std::size_t h, std::size_t w,
                                      std::uint64_t seed);

}  // namespace stlsnn
