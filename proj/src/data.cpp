#include "stlsnn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "stlsnn/error.hpp"

namespace stlsnn {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError(path + ": truncated header");
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

// Parses one unsigned integer field, advancing past it.
std::uint64_t parse_field(const char*& p, const char* end, std::size_t line_no,
                          const std::string& path) {
  while (p < end && (*p == ' ' || *p == '\t')) ++p;
  std::uint64_t value = 0;
  const auto [next, ec] = std::from_chars(p, end, value);
  if (ec != std::errc()) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": malformed field");
  }
  p = next;
  while (p < end && (*p == ' ' || *p == '\t')) ++p;
  return value;
}

void expect_comma(const char*& p, const char* end, std::size_t line_no,
                  const std::string& path) {
  if (p >= end || *p != ',') {
    throw ParseError(path + ":" + std::to_string(line_no) + ": expected ','");
  }
  ++p;
}

void expect_end(const char* p, const char* end, std::size_t line_no,
                const std::string& path) {
  if (p != end) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": trailing characters");
  }
}

}  // namespace

void ImageSet::validate() const {
  if (pixels.rank() != 4) {
    throw ShapeError("image set pixels must be [N][ch][H][W]");
  }
  if (pixels.dim(0) != labels.size()) {
    throw ConsistencyError("image count " + std::to_string(pixels.dim(0)) +
                           " does not match label count " +
                           std::to_string(labels.size()));
  }
  for (const double p : pixels) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw RangeError("pixel value outside [0,1]");
    }
  }
}

ImageSet load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgf(images_path, std::ios::binary);
  if (!imgf) {
    throw IoError("cannot open " + images_path);
  }
  const std::uint32_t img_magic = read_be32(imgf, images_path);
  if (img_magic != kImageMagic) {
    throw FormatError(images_path + ": bad magic " + std::to_string(img_magic) +
                      ", expected " + std::to_string(kImageMagic));
  }
  const std::uint32_t n = read_be32(imgf, images_path);
  const std::uint32_t h = read_be32(imgf, images_path);
  const std::uint32_t w = read_be32(imgf, images_path);
  const std::size_t count = std::size_t(n) * h * w;
  std::vector<unsigned char> bytes(count);
  if (!imgf.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count))) {
    throw FormatError(images_path + ": truncated pixel payload");
  }

  std::ifstream labf(labels_path, std::ios::binary);
  if (!labf) {
    throw IoError("cannot open " + labels_path);
  }
  const std::uint32_t lab_magic = read_be32(labf, labels_path);
  if (lab_magic != kLabelMagic) {
    throw FormatError(labels_path + ": bad magic " + std::to_string(lab_magic) +
                      ", expected " + std::to_string(kLabelMagic));
  }
  const std::uint32_t ln = read_be32(labf, labels_path);
  if (ln != n) {
    throw ConsistencyError("image file holds " + std::to_string(n) +
                           " samples but label file holds " + std::to_string(ln));
  }
  std::vector<unsigned char> lab_bytes(ln);
  if (!labf.read(reinterpret_cast<char*>(lab_bytes.data()), static_cast<std::streamsize>(ln))) {
    throw FormatError(labels_path + ": truncated label payload");
  }

  ImageSet set;
  set.pixels = Tensor({n, 1, h, w});
  for (std::size_t i = 0; i < count; ++i) {
    set.pixels.data()[i] = bytes[i] / 255.0;
  }
  set.labels.resize(ln);
  for (std::size_t i = 0; i < ln; ++i) {
    set.labels[i] = lab_bytes[i];
  }
  return set;
}

void save_idx(const ImageSet& set, const std::string& images_path,
              const std::string& labels_path) {
  if (set.pixels.rank() != 4 || set.pixels.dim(1) != 1) {
    throw ShapeError("save_idx expects single-channel [N][1][H][W] pixels");
  }
  if (set.pixels.dim(0) != set.labels.size()) {
    throw ConsistencyError("image/label count mismatch");
  }
  std::ofstream imgf(images_path, std::ios::binary | std::ios::trunc);
  if (!imgf) {
    throw IoError("cannot write " + images_path);
  }
  write_be32(imgf, kImageMagic);
  write_be32(imgf, static_cast<std::uint32_t>(set.pixels.dim(0)));
  write_be32(imgf, static_cast<std::uint32_t>(set.pixels.dim(2)));
  write_be32(imgf, static_cast<std::uint32_t>(set.pixels.dim(3)));
  for (const double p : set.pixels) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw RangeError("pixel value outside [0,1]");
    }
    const unsigned char b = static_cast<unsigned char>(std::lround(p * 255.0));
    imgf.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!imgf) {
    throw IoError("failed writing " + images_path);
  }

  std::ofstream labf(labels_path, std::ios::binary | std::ios::trunc);
  if (!labf) {
    throw IoError("cannot write " + labels_path);
  }
  write_be32(labf, kLabelMagic);
  write_be32(labf, static_cast<std::uint32_t>(set.labels.size()));
  for (const std::size_t l : set.labels) {
    if (l > 255) {
      throw RangeError("label does not fit in one byte");
    }
    const unsigned char b = static_cast<unsigned char>(l);
    labf.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!labf) {
    throw IoError("failed writing " + labels_path);
  }
}

ImageSet downsample2x(const ImageSet& set) {
  if (set.pixels.rank() != 4) {
    throw ShapeError("downsample2x expects [N][ch][H][W] pixels");
  }
  const std::size_t n = set.pixels.dim(0);
  const std::size_t ch = set.pixels.dim(1);
  const std::size_t h = set.pixels.dim(2);
  const std::size_t w = set.pixels.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("downsample2x requires even spatial dims");
  }
  ImageSet out;
  out.labels = set.labels;
  out.pixels = Tensor({n, ch, h / 2, w / 2});
  for (std::size_t i = 0; i < n * ch; ++i) {
    const double* src = set.pixels.data() + i * h * w;
    double* dst = out.pixels.data() + i * (h / 2) * (w / 2);
    for (std::size_t y = 0; y < h / 2; ++y) {
      for (std::size_t x = 0; x < w / 2; ++x) {
        dst[y * (w / 2) + x] =
            0.25 * (src[(2 * y) * w + 2 * x] + src[(2 * y) * w + 2 * x + 1] +
                    src[(2 * y + 1) * w + 2 * x] + src[(2 * y + 1) * w + 2 * x + 1]);
      }
    }
  }
  return out;
}

Tensor bernoulli_encode(const Tensor& image, std::size_t T, RngEngine& rng) {
  if (T == 0) {
    throw ConfigError("bernoulli_encode needs T >= 1");
  }
  for (const double p : image) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw RangeError("bernoulli_encode: pixel value outside [0,1]");
    }
  }
  std::vector<std::size_t> shape{T};
  shape.insert(shape.end(), image.shape().begin(), image.shape().end());
  Tensor spikes(shape);
  const std::size_t n = image.numel();
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      spikes.data()[t * n + i] = bernoulli_draw(rng, image.data()[i]) ? 1.0 : 0.0;
    }
  }
  return spikes;
}

EventStream load_events(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  EventStream stream;
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) {
    throw FormatError(path + ": missing H,W header");
  }
  ++line_no;
  {
    const char* p = line.data();
    const char* end = line.data() + line.size();
    const std::uint64_t h = parse_field(p, end, line_no, path);
    expect_comma(p, end, line_no, path);
    const std::uint64_t w = parse_field(p, end, line_no, path);
    expect_end(p, end, line_no, path);
    if (h == 0 || w == 0) {
      throw FormatError(path + ": sensor dims must be positive");
    }
    stream.h = h;
    stream.w = w;
  }

  std::uint64_t last_t = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;  // tolerate a trailing blank line
    }
    const char* p = line.data();
    const char* end = line.data() + line.size();
    Event ev;
    ev.t_us = parse_field(p, end, line_no, path);
    expect_comma(p, end, line_no, path);
    const std::uint64_t x = parse_field(p, end, line_no, path);
    expect_comma(p, end, line_no, path);
    const std::uint64_t y = parse_field(p, end, line_no, path);
    expect_comma(p, end, line_no, path);
    const std::uint64_t pol = parse_field(p, end, line_no, path);
    expect_end(p, end, line_no, path);
    if (pol > 1) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": polarity must be 0 or 1");
    }
    if (x >= stream.w || y >= stream.h) {
      throw RangeError(path + ":" + std::to_string(line_no) + ": event outside sensor");
    }
    if (!first && ev.t_us < last_t) {
      throw OrderError(path + ":" + std::to_string(line_no) +
                       ": decreasing timestamp");
    }
    first = false;
    last_t = ev.t_us;
    ev.x = static_cast<std::uint32_t>(x);
    ev.y = static_cast<std::uint32_t>(y);
    ev.pol = static_cast<std::uint8_t>(pol);
    stream.events.push_back(ev);
  }
  return stream;
}

void save_events(const EventStream& stream, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path);
  }
  out << stream.h << "," << stream.w << "\n";
  for (const Event& ev : stream.events) {
    out << ev.t_us << "," << ev.x << "," << ev.y << ","
        << static_cast<unsigned>(ev.pol) << "\n";
  }
  if (!out) {
    throw IoError("failed writing " + path);
  }
}

Tensor slice_equal_count(const EventStream& stream, std::size_t n_slices) {
  if (n_slices == 0) {
    throw ConfigError("slice_equal_count needs at least one slice");
  }
  if (stream.events.empty()) {
    throw EmptyInputError("slice_equal_count: empty event stream");
  }
  const std::size_t m = stream.events.size();
  Tensor frames = Tensor::zeros({n_slices, 2, stream.h, stream.w});
  const std::size_t plane = stream.h * stream.w;
  for (std::size_t j = 0; j < n_slices; ++j) {
    const std::size_t lo = j * m / n_slices;
    const std::size_t hi = (j + 1) * m / n_slices;
    for (std::size_t i = lo; i < hi; ++i) {
      const Event& ev = stream.events[i];
      frames.data()[(j * 2 + ev.pol) * plane + ev.y * stream.w + ev.x] += 1.0;
    }
  }
  return frames;
}

Tensor slice_fixed_duration(const EventStream& stream, std::uint64_t slice_ms,
                            std::uint64_t total_ms) {
  if (slice_ms == 0) {
    throw ConfigError("slice_fixed_duration needs a positive slice length");
  }
  if (total_ms % slice_ms != 0) {
    throw ConfigError("total duration must be a multiple of the slice length");
  }
  if (stream.events.empty()) {
    throw EmptyInputError("slice_fixed_duration: empty event stream");
  }
  const std::size_t t_slices = total_ms / slice_ms;
  const std::uint64_t slice_us = slice_ms * 1000;
  const std::uint64_t total_us = total_ms * 1000;
  const std::uint64_t t0 = stream.events.front().t_us;
  Tensor frames = Tensor::zeros({t_slices, 2, stream.h, stream.w});
  const std::size_t plane = stream.h * stream.w;
  for (const Event& ev : stream.events) {
    const std::uint64_t rel = ev.t_us - t0;
    if (rel >= total_us) {
      continue;  // beyond the analysis window
    }
    const std::size_t j = rel / slice_us;
    frames.data()[(j * 2 + ev.pol) * plane + ev.y * stream.w + ev.x] += 1.0;
  }
  return frames;
}

void NoiseSpec::validate() const {
  if (!(nl >= 0.0 && nl <= 1.0)) {
    throw ConfigError("noise level must lie in [0,1]");
  }
}

namespace {

// Draws floor(nl*numel) distinct positions by partial Fisher-Yates shuffle.
std::vector<std::size_t> pick_positions(std::size_t numel, double nl, RngEngine& rng) {
  const std::size_t count = static_cast<std::size_t>(nl * static_cast<double>(numel));
  std::vector<std::size_t> idx(numel);
  for (std::size_t i = 0; i < numel; ++i) idx[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + uniform_index(rng, numel - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

}  // namespace

Tensor inject_salt_pepper(const Tensor& data, const NoiseSpec& spec) {
  spec.validate();
  if (spec.kind != NoiseKind::SaltPepper) {
    throw ConfigError("inject_salt_pepper called with a non-salt-pepper spec");
  }
  RngEngine rng = make_stream(spec.seed, "noise");
  Tensor out = data;
  for (const std::size_t i : pick_positions(data.numel(), spec.nl, rng)) {
    out[i] = bernoulli_draw(rng, 0.5) ? 1.0 : 0.0;
  }
  return out;
}

Tensor inject_uniform_noise(const Tensor& data, const NoiseSpec& spec) {
  spec.validate();
  if (spec.kind != NoiseKind::Uniform) {
    throw ConfigError("inject_uniform_noise called with a non-uniform spec");
  }
  RngEngine rng = make_stream(spec.seed, "noise");
  Tensor out = data;
  for (const std::size_t i : pick_positions(data.numel(), spec.nl, rng)) {
    out[i] = uniform_real(rng, 0.0, 1.0);
  }
  return out;
}

namespace {

// Seven-segment glyph table: top, top-left, top-right, middle, bottom-left,
// bottom-right, bottom.
constexpr bool kSegments[10][7] = {
    {1, 1, 1, 0, 1, 1, 1},  // 0
    {0, 0, 1, 0, 0, 1, 0},  // 1
    {1, 0, 1, 1, 1, 0, 1},  // 2
    {1, 0, 1, 1, 0, 1, 1},  // 3
    {0, 1, 1, 1, 0, 1, 0},  // 4
    {1, 1, 0, 1, 0, 1, 1},  // 5
    {1, 1, 0, 1, 1, 1, 1},  // 6
    {1, 0, 1, 0, 0, 1, 0},  // 7
    {1, 1, 1, 1, 1, 1, 1},  // 8
    {1, 1, 1, 1, 0, 1, 1},  // 9
};

void render_digit(double* img, std::size_t h, std::size_t w, std::size_t digit,
                  long dy, long dx, double base, RngEngine& rng) {
  // Glyph box on a 14x14 reference canvas, shifted by (dy,dx).
  const long top = 2 + dy, mid = 7 + dy, bottom = 11 + dy;
  const long left = 4 + dx, right = 9 + dx;
  const auto lit = [&](long y, long x) {
    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return;
    if (bernoulli_draw(rng, 0.08)) return;  // segment dropout speckle
    img[y * static_cast<long>(w) + x] = base * uniform_real(rng, 0.75, 1.0);
  };
  const bool* seg = kSegments[digit];
  if (seg[0]) for (long x = left; x <= right; ++x) lit(top, x);
  if (seg[3]) for (long x = left; x <= right; ++x) lit(mid, x);
  if (seg[6]) for (long x = left; x <= right; ++x) lit(bottom, x);
  if (seg[1]) for (long y = top + 1; y < mid; ++y) lit(y, left);
  if (seg[2]) for (long y = top + 1; y < mid; ++y) lit(y, right);
  if (seg[4]) for (long y = mid + 1; y < bottom; ++y) lit(y, left);
  if (seg[5]) for (long y = mid + 1; y < bottom; ++y) lit(y, right);
}

ImageSet make_split(std::size_t n, std::size_t h, std::size_t w, RngEngine& rng) {
  ImageSet set;
  set.pixels = Tensor::zeros({n, 1, h, w});
  set.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t digit = i % 10;
    set.labels[i] = digit;
    double* img = set.pixels.data() + i * h * w;
    const long dy = static_cast<long>(uniform_index(rng, 5)) - 2;
    const long dx = static_cast<long>(uniform_index(rng, 5)) - 2;
    const double base = uniform_real(rng, 0.7, 1.0);
    render_digit(img, h, w, digit, dy, dx, base, rng);
    for (std::size_t p = 0; p < h * w; ++p) {
      img[p] = std::min(1.0, img[p] + uniform_real(rng, 0.0, 0.10));
    }
  }
  return set;
}

}  // namespace

SyntheticDigits make_synthetic_digits(std::size_t n_train, std::size_t n_test,
                                      std::size_t h, std::size_t w,
                                      std::uint64_t seed) {
  if (n_train == 0 || n_test == 0) {
    throw ConfigError("synthetic digit splits must be non-empty");
  }
  if (h < 14 || w < 14) {
    throw ConfigError("synthetic digits need a canvas of at least 14x14");
  }
  RngEngine rng = make_stream(seed, "synthetic");
  SyntheticDigits d;
  d.train = make_split(n_train, h, w, rng);
  d.test = make_split(n_test, h, w, rng);
  return d;
}

}  // namespace stlsnn
