#pragma once

// Fixed front end: DCT basis kernel banks, residual convolution and the
// quantize-and-truncate (Q&T) non-linearity.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stegokit/error.hpp"
#include "stegokit/parallel.hpp"
#include "stegokit/plane.hpp"

namespace stegokit {

/// k*k separable DCT basis patterns, ordered by (k, l) lexicographically.
struct KernelBank {
  int size = 0;
  std::vector<Plane<double>> kernels;
  std::vector<std::pair<int, int>> labels;

  std::size_t count() const noexcept { return kernels.size(); }
};

/// Quantization step q and truncation threshold T.
struct QtSpec {
  int threshold = 4;
  double step = 1.0;

  void validate() const {
    detail::require(threshold >= 1, "Q&T threshold must be >= 1");
    detail::require(step > 0.0 && std::isfinite(step), "Q&T step must be positive");
  }

  friend bool operator==(const QtSpec&, const QtSpec&) = default;
};

inline std::vector<QtSpec> default_qt_specs() { return {{4, 1.0}, {4, 2.0}, {4, 4.0}}; }

/// Parses "T:q[,T:q...]", e.g. "4:1,4:2,4:4".
inline std::vector<QtSpec> parse_qt_specs(const std::string& text) {
  std::vector<QtSpec> specs;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, end - start);
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw InvalidArgument("bad Q&T item '" + item + "', expected T:q");
    QtSpec s;
    try {
      std::size_t used = 0;
      s.threshold = std::stoi(item.substr(0, colon), &used);
      if (used != colon) throw InvalidArgument("");
      const std::string step = item.substr(colon + 1);
      s.step = std::stod(step, &used);
      if (used != step.size()) throw InvalidArgument("");
    } catch (const std::exception&) {
      throw InvalidArgument("bad Q&T item '" + item + "', expected T:q");
    }
    s.validate();
    specs.push_back(s);
    start = end + 1;
  }
  detail::require(!specs.empty(), "empty Q&T list");
  return specs;
}

inline std::string format_qt_specs(const std::vector<QtSpec>& specs) {
  std::string out;
  for (const auto& s : specs) {
    if (!out.empty()) out += ',';
    std::ostringstream step;
    step << s.step;
    out += std::to_string(s.threshold) + ":" + step.str();
  }
  return out;
}

/// DCT basis kernels of side k in {3, 5, 8}.
/// k = 8 uses the DCTR normalization w0 = 1/sqrt(2), wk = 1, divisor 4;
/// k = 3 and 5 use w0 = 1, wk = sqrt(2), divisor k. All kernels have unit
/// Frobenius norm and the bank is orthonormal.
inline KernelBank dct_basis(int k) {
  if (k != 3 && k != 5 && k != 8)
    throw InvalidArgument("unsupported DCT kernel size " + std::to_string(k) + " (expected 3, 5 or 8)");
  const double divisor = k == 8 ? 4.0 : static_cast<double>(k);
  auto weight = [k](int i) {
    if (k == 8) return i == 0 ? 1.0 / std::numbers::sqrt2 : 1.0;
    return i == 0 ? 1.0 : std::numbers::sqrt2;
  };
  KernelBank bank;
  bank.size = k;
  for (int fk = 0; fk < k; ++fk)
    for (int fl = 0; fl < k; ++fl) {
      Plane<double> b(k, k);
      for (int m = 0; m < k; ++m)
        for (int n = 0; n < k; ++n)
          b(m, n) = weight(fk) * weight(fl) / divisor *
                    std::cos(std::numbers::pi * fk * (2 * m + 1) / (2.0 * k)) *
                    std::cos(std::numbers::pi * fl * (2 * n + 1) / (2.0 * k));
      bank.kernels.push_back(std::move(b));
      bank.labels.emplace_back(fk, fl);
    }
  return bank;
}

/// Top/left zero padding for same-size output; the remainder goes right/bottom.
constexpr int same_pad_before(int k) noexcept { return (k - 1) / 2; }

/// Same-padded stride-1 cross-correlation of `plane` with one kernel.
inline Plane<double> correlate_same(const Plane<double>& plane, const Plane<double>& kernel) {
  const int k = kernel.width();
  const int pad = same_pad_before(k);
  const int h = plane.height(), w = plane.width();
  Plane<double> out(w, h);
  for (int i = 0; i < h; ++i)
    for (int m = 0; m < k; ++m) {
      const int r = i + m - pad;
      if (r < 0 || r >= h) continue;
      const double* row = &plane(r, 0);
      double* dst = &out(i, 0);
      for (int n = 0; n < k; ++n) {
        const double kv = kernel(m, n);
        const int lo = std::max(0, pad - n), hi = std::min(w, w + pad - n);
        for (int j = lo; j < hi; ++j) dst[j] += kv * row[j + n - pad];
      }
    }
  return out;
}

/// One residual map per kernel, each the size of the input.
inline std::vector<Plane<double>> convolve_residuals(const ImagePlane& plane, const KernelBank& bank) {
  if (plane.width() < bank.size || plane.height() < bank.size)
    throw InvalidArgument("plane is smaller than the kernel size");
  std::vector<Plane<double>> maps(bank.count());
  parallel_for(bank.count(), [&](std::size_t i) { maps[i] = correlate_same(plane, bank.kernels[i]); });
  return maps;
}

/// Q&T of one value: round(z / q) half away from zero, clipped to [-T, T].
inline int quantize_truncate(double z, const QtSpec& spec) noexcept {
  const double r = std::round(z / spec.step);
  if (r >= spec.threshold) return spec.threshold;
  if (r <= -spec.threshold) return -spec.threshold;
  return static_cast<int>(r);
}

inline Plane<std::int16_t> quantize_truncate(const Plane<double>& map, const QtSpec& spec) {
  spec.validate();
  Plane<std::int16_t> out(map.width(), map.height());
  for (std::size_t i = 0; i < map.size(); ++i)
    out.values()[i] = static_cast<std::int16_t>(quantize_truncate(map.values()[i], spec));
  return out;
}

/// Quantized and truncated residuals, grouped by Q&T spec.
struct ResidualStack {
  int kernel_size = 0;
  std::vector<QtSpec> specs;
  std::vector<std::pair<int, int>> labels;
  // groups[g][m]: map m of group g.
  std::vector<std::vector<Plane<std::int16_t>>> groups;

  std::size_t group_count() const noexcept { return groups.size(); }
  std::size_t maps_per_group() const noexcept { return groups.empty() ? 0 : groups.front().size(); }
  int width() const noexcept { return groups.empty() || groups[0].empty() ? 0 : groups[0][0].width(); }
  int height() const noexcept { return groups.empty() || groups[0].empty() ? 0 : groups[0][0].height(); }
};

/// Residuals for every kernel, then Q&T for every spec (spec-major order).
inline ResidualStack front_stage(const ImagePlane& plane, const KernelBank& bank, const std::vector<QtSpec>& specs) {
  detail::require(!specs.empty(), "front_stage needs at least one Q&T spec");
  for (const auto& s : specs) s.validate();
  const auto maps = convolve_residuals(plane, bank);
  ResidualStack stack;
  stack.kernel_size = bank.size;
  stack.specs = specs;
  stack.labels = bank.labels;
  stack.groups.resize(specs.size());
  for (std::size_t g = 0; g < specs.size(); ++g) {
    stack.groups[g].reserve(maps.size());
    for (const auto& m : maps) stack.groups[g].push_back(quantize_truncate(m, specs[g]));
  }
  return stack;
}

}  // namespace stegokit
