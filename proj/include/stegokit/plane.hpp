#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stegokit/error.hpp"

namespace stegokit {

/// Dense row-major 2-D array.
template <class T>
class Plane {
 public:
  using value_type = T;

  Plane() = default;
  Plane(int width, int height, T fill = T{}) : width_(width), height_(height) {
    detail::require(width >= 0 && height >= 0, "plane dimensions must be non-negative");
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }
  Plane(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    detail::require(width >= 0 && height >= 0, "plane dimensions must be non-negative");
    detail::require(data_.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
                    "plane data size does not match dimensions");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int row, int col) noexcept {
    return data_[static_cast<std::size_t>(row) * width_ + col];
  }
  const T& operator()(int row, int col) const noexcept {
    return data_[static_cast<std::size_t>(row) * width_ + col];
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool same_shape(const auto& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Real-valued spatial plane. Decoded pixels are kept unrounded and unclamped.
using ImagePlane = Plane<double>;
using GrayImage = Plane<std::uint8_t>;

template <class To, class From>
Plane<To> plane_cast(const Plane<From>& in) {
  std::vector<To> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = static_cast<To>(in.values()[i]);
  return Plane<To>(in.width(), in.height(), std::move(out));
}

inline void require_shape(const auto& a, const auto& b, const std::string& what) {
  detail::require(a.width() == b.width() && a.height() == b.height(), what + ": shape mismatch");
}

}  // namespace stegokit
