#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "stegokit/codec.hpp"
#include "stegokit/rng.hpp"

namespace stegokit::testing {

inline ImagePlane random_plane(int w, int h, Rng& rng, double lo = 0.0, double hi = 255.0) {
  ImagePlane p(w, h);
  for (double& v : p.storage()) v = rng.uniform(lo, hi);
  return p;
}

inline DctGrid random_grid(int w, int h, Rng& rng, int quality = 75, int spread = 20) {
  DctGrid g{Plane<std::int16_t>(w, h), quant_table_for_quality(quality)};
  for (auto& v : g.coeffs.storage())
    v = static_cast<std::int16_t>(static_cast<int>(rng.below(2 * spread + 1)) - spread);
  return g;
}

inline StegoNoiseGrid random_noise(int w, int h, Rng& rng, double density = 0.3) {
  StegoNoiseGrid n(w, h);
  for (auto& v : n.storage())
    if (rng.uniform() < density) v = rng.coin() ? 1 : -1;
  return n;
}

inline double sum_squares(const auto& plane) {
  double s = 0.0;
  for (auto v : plane.values()) s += static_cast<double>(v) * static_cast<double>(v);
  return s;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("stegokit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace stegokit::testing
