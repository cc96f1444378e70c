#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stegokit/error.hpp"

namespace stegokit::nn {

struct Shape4 {
  int n = 1, c = 1, h = 1, w = 1;

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t per_item() const noexcept { return static_cast<std::size_t>(c) * h * w; }
  std::array<int, 4> dims() const noexcept { return {n, c, h, w}; }
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
  }
  friend bool operator==(const Shape4&, const Shape4&) = default;
};

/// (batch, channels, height, width), row-major.
template <class T>
class Tensor4 {
 public:
  using value_type = T;

  Tensor4() = default;
  explicit Tensor4(Shape4 shape, T fill = T{}) : shape_(shape) {
    detail::require(shape.n >= 1 && shape.c >= 1 && shape.h >= 1 && shape.w >= 1,
                    "tensor dimensions must be >= 1, got " + shape.str());
    data_.assign(shape.count(), fill);
  }
  Tensor4(int n, int c, int h, int w, T fill = T{}) : Tensor4(Shape4{n, c, h, w}, fill) {}

  const Shape4& shape() const noexcept { return shape_; }
  int n() const noexcept { return shape_.n; }
  int c() const noexcept { return shape_.c; }
  int h() const noexcept { return shape_.h; }
  int w() const noexcept { return shape_.w; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(int b, int ch, int i, int j) noexcept { return data_[index(b, ch, i, j)]; }
  const T& operator()(int b, int ch, int i, int j) const noexcept { return data_[index(b, ch, i, j)]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  T* item(int b) noexcept { return data_.data() + static_cast<std::size_t>(b) * shape_.per_item(); }
  const T* item(int b) const noexcept { return data_.data() + static_cast<std::size_t>(b) * shape_.per_item(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  /// Same data viewed with a different shape of equal element count.
  Tensor4 reshaped(Shape4 s) const& {
    detail::require(s.count() == shape_.count(), "reshape changes element count");
    Tensor4 t = *this;
    t.shape_ = s;
    return t;
  }
  Tensor4 reshaped(Shape4 s) && {
    detail::require(s.count() == shape_.count(), "reshape changes element count");
    shape_ = s;
    return std::move(*this);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

 private:
  std::size_t index(int b, int ch, int i, int j) const noexcept {
    return ((static_cast<std::size_t>(b) * shape_.c + ch) * shape_.h + i) * shape_.w + j;
  }

  Shape4 shape_{};
  std::vector<T> data_;
};

template <class To, class From>
Tensor4<To> tensor_cast(const Tensor4<From>& in) {
  Tensor4<To> out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = static_cast<To>(in[i]);
  return out;
}

}  // namespace stegokit::nn
