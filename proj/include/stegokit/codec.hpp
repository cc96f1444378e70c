#pragma once

// Blockwise 8x8 DCT codec on quantized coefficient planes.
//
// Coefficient planes use the spatial layout: coefficient (u, v) of the
// block at block-row br, block-column bc lives at plane position
// (8*br + u, 8*bc + v). The on-disk container stores the same values in
// block-sequential order (see io.hpp).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include "stegokit/error.hpp"
#include "stegokit/plane.hpp"

namespace stegokit {

inline constexpr int kBlock = 8;
inline constexpr double kLevelShift = 128.0;

/// 8x8 quantization table, row-major.
struct QuantTable {
  std::array<int, 64> q{};

  int operator()(int u, int v) const noexcept { return q[u * kBlock + v]; }
  int& operator()(int u, int v) noexcept { return q[u * kBlock + v]; }

  void validate() const {
    for (int e : q) detail::require(e >= 1 && e <= 255, "quantization table entries must be in [1, 255]");
  }

  friend bool operator==(const QuantTable&, const QuantTable&) = default;
};

/// Standard JPEG luminance table (ITU-T T.81 Annex K).
inline constexpr std::array<int, 64> kLuminanceBase = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

/// IJG quality scaling of the luminance table.
inline QuantTable quant_table_for_quality(int quality) {
  if (quality < 1 || quality > 100)
    throw InvalidArgument("quality factor must be in [1, 100], got " + std::to_string(quality));
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  QuantTable t;
  for (int i = 0; i < 64; ++i) t.q[i] = std::clamp((kLuminanceBase[i] * scale + 50) / 100, 1, 255);
  return t;
}

/// Quantized DCT coefficients of one grayscale JPEG image.
struct DctGrid {
  Plane<std::int16_t> coeffs;
  QuantTable quant;

  int width() const noexcept { return coeffs.width(); }
  int height() const noexcept { return coeffs.height(); }

  void validate() const {
    detail::require(width() > 0 && height() > 0 && width() % kBlock == 0 && height() % kBlock == 0,
                    "coefficient grid dimensions must be positive multiples of 8");
    quant.validate();
  }

  static bool is_dc(int row, int col) noexcept { return row % kBlock == 0 && col % kBlock == 0; }

  std::size_t count_nonzero_ac() const noexcept {
    std::size_t n = 0;
    for (int r = 0; r < height(); ++r)
      for (int c = 0; c < width(); ++c)
        if (!is_dc(r, c) && coeffs(r, c) != 0) ++n;
    return n;
  }

  friend bool operator==(const DctGrid&, const DctGrid&) = default;
};

/// Additive coefficient-domain stego noise, entries in {-1, 0, +1}.
using StegoNoiseGrid = Plane<std::int8_t>;

namespace detail {

/// Orthonormal 8-point DCT-II matrix, D[u][x] = c(u) cos(pi (2x+1) u / 16).
inline const std::array<double, 64>& dct8_matrix() {
  static const std::array<double, 64> m = [] {
    std::array<double, 64> d{};
    for (int u = 0; u < kBlock; ++u) {
      const double c = u == 0 ? std::sqrt(1.0 / kBlock) : std::sqrt(2.0 / kBlock);
      for (int x = 0; x < kBlock; ++x)
        d[u * kBlock + x] = c * std::cos(std::numbers::pi * (2 * x + 1) * u / (2.0 * kBlock));
    }
    return d;
  }();
  return m;
}

inline void require_block_dims(int width, int height, const char* what) {
  if (width <= 0 || height <= 0 || width % kBlock != 0 || height % kBlock != 0)
    throw InvalidArgument(std::string(what) + ": dimensions must be positive multiples of 8, got " +
                          std::to_string(width) + "x" + std::to_string(height));
}

// inverse == false: out = D in D^T; inverse == true: out = D^T in D.
inline void transform_block(const double* in, int in_stride, double* out, int out_stride, bool inverse) {
  const auto& d = dct8_matrix();
  double tmp[64];
  for (int a = 0; a < kBlock; ++a)
    for (int y = 0; y < kBlock; ++y) {
      double s = 0.0;
      for (int x = 0; x < kBlock; ++x) {
        const double k = inverse ? d[x * kBlock + a] : d[a * kBlock + x];
        s += k * in[x * in_stride + y];
      }
      tmp[a * kBlock + y] = s;
    }
  for (int a = 0; a < kBlock; ++a)
    for (int b = 0; b < kBlock; ++b) {
      double s = 0.0;
      for (int y = 0; y < kBlock; ++y) {
        const double k = inverse ? d[y * kBlock + b] : d[b * kBlock + y];
        s += tmp[a * kBlock + y] * k;
      }
      out[a * out_stride + b] = s;
    }
}

inline Plane<double> blockwise(const Plane<double>& in, bool inverse, double offset_in, double offset_out) {
  Plane<double> out(in.width(), in.height());
  double block[64];
  for (int br = 0; br < in.height(); br += kBlock)
    for (int bc = 0; bc < in.width(); bc += kBlock) {
      for (int u = 0; u < kBlock; ++u)
        for (int v = 0; v < kBlock; ++v) block[u * kBlock + v] = in(br + u, bc + v) + offset_in;
      transform_block(block, kBlock, &out(br, bc), in.width(), inverse);
      if (offset_out != 0.0)
        for (int u = 0; u < kBlock; ++u)
          for (int v = 0; v < kBlock; ++v) out(br + u, bc + v) += offset_out;
    }
  return out;
}

}  // namespace detail

/// Level shift by -128 then per-block orthonormal 2-D DCT. No quantization.
inline Plane<double> forward_dct_blocks(const ImagePlane& plane) {
  detail::require_block_dims(plane.width(), plane.height(), "forward_dct_blocks");
  return detail::blockwise(plane, false, -kLevelShift, 0.0);
}

/// Per-block orthonormal inverse DCT, no level shift.
inline ImagePlane inverse_dct_blocks(const Plane<double>& coeffs) {
  detail::require_block_dims(coeffs.width(), coeffs.height(), "inverse_dct_blocks");
  return detail::blockwise(coeffs, true, 0.0, 0.0);
}

/// Multiplies each coefficient by its quantization step.
template <class I>
Plane<double> dequantize(const Plane<I>& coeffs, const QuantTable& quant) {
  Plane<double> out(coeffs.width(), coeffs.height());
  for (int r = 0; r < coeffs.height(); ++r)
    for (int c = 0; c < coeffs.width(); ++c)
      out(r, c) = static_cast<double>(coeffs(r, c)) * quant(r % kBlock, c % kBlock);
  return out;
}

/// Decoded spatial plane: dequantize, inverse DCT, +128. Not rounded or clamped.
inline ImagePlane decompress(const DctGrid& grid) {
  grid.validate();
  return detail::blockwise(dequantize(grid.coeffs, grid.quant), true, 0.0, kLevelShift);
}

/// Spatial-domain image of coefficient noise. Linear, so no level shift.
inline ImagePlane noise_to_spatial(const StegoNoiseGrid& noise, const QuantTable& quant) {
  detail::require_block_dims(noise.width(), noise.height(), "noise_to_spatial");
  return inverse_dct_blocks(dequantize(noise, quant));
}

/// Divides by the quantization steps and rounds half away from zero.
inline Plane<std::int16_t> quantize(const Plane<double>& coeffs, const QuantTable& quant) {
  Plane<std::int16_t> out(coeffs.width(), coeffs.height());
  for (int r = 0; r < coeffs.height(); ++r)
    for (int c = 0; c < coeffs.width(); ++c) {
      const double v = std::round(coeffs(r, c) / quant(r % kBlock, c % kBlock));
      detail::require(v >= std::numeric_limits<std::int16_t>::min() && v <= std::numeric_limits<std::int16_t>::max(),
                      "quantized coefficient exceeds 16-bit range");
      out(r, c) = static_cast<std::int16_t>(v);
    }
  return out;
}

}  // namespace stegokit
