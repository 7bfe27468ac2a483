#pragma once

#include <cassert>
#include <cstddef>
#include <numeric>
#include <vector>

#include "stlsnn/error.hpp"

namespace stlsnn {

// Dense row-major tensor of doubles with a dynamic shape.
// Small and copyable; all layer math in this project runs on these.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(numel(shape_), 0.0) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel(shape_)) {
      throw ShapeError("tensor data length does not match shape");
    }
  }

  static Tensor zeros(std::vector<std::size_t> shape) {
    return Tensor(std::move(shape));
  }

  static Tensor full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
  }

  static std::size_t numel(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::size_t b) { return a * b; });
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) {
    assert(i < data_.size());
    return data_[i];
  }
  double operator[](std::size_t i) const {
    assert(i < data_.size());
    return data_[i];
  }

  template <class... Ix>
  double& at(Ix... ix) {
    return data_[flat_index(ix...)];
  }
  template <class... Ix>
  double at(Ix... ix) const {
    return data_[flat_index(ix...)];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  Tensor zeros_like() const { return Tensor(shape_); }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  template <class... Ix>
  std::size_t flat_index(Ix... ix) const {
    assert(sizeof...(ix) == shape_.size());
    const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
    std::size_t flat = 0;
    for (std::size_t d = 0; d < sizeof...(ix); ++d) {
      assert(idx[d] < shape_[d]);
      flat = flat * shape_[d] + idx[d];
    }
    return flat;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline void require_shape(const Tensor& t, const std::vector<std::size_t>& shape,
                          const char* what) {
  if (t.shape() != shape) {
    throw ShapeError(std::string(what) + ": unexpected tensor shape");
  }
}

}  // namespace stlsnn
