#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "prefnet/error.hpp"

namespace prefnet {

/// Extents of a 4-D tensor laid out row-major over (n, c, h, w).
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t size() const { return n * c * h * w; }
  /// Elements per batch item.
  constexpr std::size_t sample_size() const { return c * h * w; }
  constexpr bool operator==(const Shape&) const = default;

  std::string str() const;
};

/// Dense owning tensor. `T` is float for training and double for gradient
/// checking; both are instantiated by the layer library.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{}) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }

  std::span<T> sample(std::size_t n) {
    return std::span<T>(data_).subspan(n * shape_.sample_size(), shape_.sample_size());
  }
  std::span<const T> sample(std::size_t n) const {
    return std::span<const T>(data_).subspan(n * shape_.sample_size(), shape_.sample_size());
  }

  /// Reinterprets the extents; the element count must be preserved.
  void reshape(Shape shape) {
    if (shape.size() != data_.size()) {
      throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
    }
    shape_ = shape;
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

/// Converts between element types (used to lift float parameters into the
/// 64-bit verification path).
template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
  std::vector<To> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<To>(src[i]);
  return Tensor<To>(src.shape(), std::move(out));
}

}  // namespace prefnet
