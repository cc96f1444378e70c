#pragma once

// Empirical checks of the two structural claims behind the front end:
// stego noise is tiny next to image content (ratio histogram, energy
// identity, per-patch dominance), and Q&T has zero derivative almost
// everywhere (finite-difference scan).

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stegokit/codec.hpp"
#include "stegokit/error.hpp"
#include "stegokit/residual.hpp"
#include "stegokit/rng.hpp"
#include "stegokit/stego_sim.hpp"

namespace stegokit {

using json = nlohmann::json;

// ---- ratio histogram -------------------------------------------------------

/// Unit-width bins: [0,1) underflow, [1,2), ..., [top-1, top), then [top, inf).
struct RatioHistogram {
  std::vector<double> edges;        // bins + 1 entries, the last one infinite
  std::vector<double> frequencies;  // normalized
  double mean = 0.0;
  std::size_t samples = 0;

  json to_json() const {
    json e = json::array();
    for (double v : edges) e.push_back(std::isinf(v) ? json("inf") : json(v));
    return {{"edges", e}, {"frequencies", frequencies}, {"mean", mean}, {"samples", samples}};
  }
  /// "left_edge frequency" lines for gnuplot.
  std::string to_text() const {
    std::ostringstream out;
    out << "# ratio_left_edge frequency (mean " << mean << ", samples " << samples << ")\n";
    for (std::size_t i = 0; i < frequencies.size(); ++i) out << edges[i] << " " << frequencies[i] << "\n";
    return out.str();
  }
};

inline RatioHistogram empty_ratio_histogram(int top = 512) {
  RatioHistogram h;
  for (int i = 0; i <= top; ++i) h.edges.push_back(i);
  h.edges.push_back(std::numeric_limits<double>::infinity());
  h.frequencies.assign(top + 1, 0.0);
  return h;
}

/// |c| / round(|n|) over every position where round(|n|) >= 1.
inline RatioHistogram ratio_histogram(const ImagePlane& cover, const ImagePlane& noise, int top = 512) {
  require_shape(cover, noise, "ratio_histogram");
  if (top < 1) throw InvalidArgument("histogram top edge must be >= 1");
  RatioHistogram h = empty_ratio_histogram(top);
  double sum = 0.0;
  for (std::size_t i = 0; i < cover.size(); ++i) {
    const double rn = std::round(std::abs(noise.values()[i]));
    if (rn < 1.0) continue;
    const double ratio = std::abs(cover.values()[i]) / rn;
    sum += ratio;
    ++h.samples;
    h.frequencies[static_cast<std::size_t>(std::min<double>(std::floor(ratio), top))] += 1.0;
  }
  if (h.samples == 0) throw EmptyHistogram("no position has a rounded noise magnitude >= 1");
  for (double& f : h.frequencies) f /= static_cast<double>(h.samples);
  h.mean = sum / static_cast<double>(h.samples);
  return h;
}

/// Average of normalized histograms; its mean is the average of the means.
inline RatioHistogram average_histograms(const std::vector<RatioHistogram>& hs) {
  if (hs.empty()) throw EmptyHistogram("no histograms to average");
  RatioHistogram out = hs.front();
  std::fill(out.frequencies.begin(), out.frequencies.end(), 0.0);
  out.mean = 0.0;
  out.samples = 0;
  for (const auto& h : hs) {
    if (h.frequencies.size() != out.frequencies.size()) throw InvalidArgument("histograms have different bins");
    for (std::size_t i = 0; i < h.frequencies.size(); ++i) out.frequencies[i] += h.frequencies[i] / hs.size();
    out.mean += h.mean / hs.size();
    out.samples += h.samples;
  }
  return out;
}

// ---- energy audit ----------------------------------------------------------

struct EnergyAudit {
  double spatial_energy = 0.0, coeff_energy = 0.0, relative_gap = 0.0;

  json to_json() const {
    return {{"spatial_energy", spatial_energy}, {"coeff_energy", coeff_energy}, {"relative_gap", relative_gap}};
  }
};

/// Spatial energy of the decoded noise against sum (q * n)^2 in the
/// coefficient domain.
inline EnergyAudit energy_audit(const StegoNoiseGrid& noise, const QuantTable& table) {
  const auto spatial = noise_to_spatial(noise, table);
  EnergyAudit a;
  for (double v : spatial.values()) a.spatial_energy += v * v;
  for (int r = 0; r < noise.height(); ++r)
    for (int c = 0; c < noise.width(); ++c) {
      const double d = static_cast<double>(table(r % kBlock, c % kBlock)) * noise(r, c);
      a.coeff_energy += d * d;
    }
  a.relative_gap = a.coeff_energy == 0.0 ? 0.0 : std::abs(a.spatial_energy - a.coeff_energy) / a.coeff_energy;
  return a;
}

// ---- gradient dominance ----------------------------------------------------

struct DominanceReport {
  std::size_t patches = 0;
  std::size_t excluded = 0;  // zero noise response
  double median_ratio = std::numeric_limits<double>::infinity();
  double mean_content = 0.0, mean_noise = 0.0;
  std::vector<double> ratios;  // sorted, kept for corpus pooling

  json to_json() const {
    return {{"patches", patches},
            {"excluded", excluded},
            {"median_ratio", std::isinf(median_ratio) ? json("inf") : json(median_ratio)},
            {"mean_content", mean_content},
            {"mean_noise", mean_noise}};
  }
};

inline double median_of_sorted(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::infinity();
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// For every patch fully covered by the kernel: content = |sum W c|,
/// noise = |sum W n|; the median content/noise ratio skips zero-noise patches.
inline DominanceReport gradient_dominance(const ImagePlane& cover, const ImagePlane& noise, const Plane<double>& kernel) {
  require_shape(cover, noise, "gradient_dominance");
  const int kh = kernel.height(), kw = kernel.width();
  if (kh > cover.height() || kw > cover.width()) throw InvalidArgument("kernel does not fit in the plane");
  DominanceReport r;
  for (int i = 0; i + kh <= cover.height(); ++i)
    for (int j = 0; j + kw <= cover.width(); ++j) {
      double sc = 0.0, sn = 0.0;
      for (int u = 0; u < kh; ++u)
        for (int v = 0; v < kw; ++v) {
          sc += kernel(u, v) * cover(i + u, j + v);
          sn += kernel(u, v) * noise(i + u, j + v);
        }
      const double content = std::abs(sc), noise_term = std::abs(sn);
      ++r.patches;
      r.mean_content += content;
      r.mean_noise += noise_term;
      if (noise_term == 0.0) {
        ++r.excluded;
        continue;
      }
      r.ratios.push_back(content / noise_term);
    }
  r.mean_content /= r.patches;
  r.mean_noise /= r.patches;
  std::sort(r.ratios.begin(), r.ratios.end());
  r.median_ratio = median_of_sorted(r.ratios);
  return r;
}

/// k x k kernel with N(0,1) entries scaled to unit Frobenius norm.
inline Plane<double> random_unit_kernel(int k, Rng& rng) {
  Plane<double> w(k, k);
  double ss = 0.0;
  for (double& v : w.storage()) {
    v = rng.normal();
    ss += v * v;
  }
  for (double& v : w.storage()) v /= std::sqrt(ss);
  return w;
}

// ---- Q&T gradient scan -----------------------------------------------------

/// Central difference of quantize_truncate at z.
inline double qt_finite_difference(double z, const QtSpec& spec, double h) {
  return (quantize_truncate(z + h, spec) - quantize_truncate(z - h, spec)) / (2.0 * h);
}

/// Distance from z to the nearest jump of quantize_truncate; the jumps sit at
/// q * (k - 0.5) for k = -T+1 .. T.
inline double distance_to_jump(double z, const QtSpec& spec) {
  double best = std::numeric_limits<double>::infinity();
  for (int k = -spec.threshold + 1; k <= spec.threshold; ++k) best = std::min(best, std::abs(z - spec.step * (k - 0.5)));
  return best;
}

struct ScanReport {
  QtSpec spec;
  std::size_t points = 0, nonzero = 0, rejected = 0;
  double h = 0.0;

  double fraction_nonzero() const { return points ? static_cast<double>(nonzero) / points : 0.0; }
  json to_json() const {
    return {{"T", spec.threshold}, {"q", spec.step},       {"points", points},
            {"nonzero", nonzero},  {"rejected", rejected}, {"h", h},
            {"fraction_nonzero", fraction_nonzero()}};
  }
};

/// Draws uniform z in [-(T+2)q, (T+2)q], discarding draws within 10h of a
/// jump, until n_points remain; counts nonzero central differences.
inline ScanReport qt_gradient_scan(const QtSpec& spec, std::size_t n_points, double h, std::uint64_t seed = 0) {
  spec.validate();
  if (!(h > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  const double span = (spec.threshold + 2) * spec.step;
  if (20.0 * h * 2 * spec.threshold >= 2 * span) throw InvalidArgument("step too large for the scan interval");
  Rng rng(seed);
  ScanReport r{spec, 0, 0, 0, h};
  while (r.points < n_points) {
    const double z = rng.uniform(-span, span);
    if (distance_to_jump(z, spec) < 10.0 * h) {
      ++r.rejected;
      continue;
    }
    ++r.points;
    if (qt_finite_difference(z, spec, h) != 0.0) ++r.nonzero;
  }
  return r;
}

/// "z finite_difference" lines on a regular grid, jumps included, for plotting.
inline std::string qt_profile_text(const QtSpec& spec, double h, double dz) {
  std::ostringstream out;
  out << "# z central_difference (T=" << spec.threshold << ", q=" << spec.step << ", h=" << h << ")\n";
  const double span = (spec.threshold + 2) * spec.step;
  const auto n = static_cast<long>(std::floor(2 * span / dz));
  for (long i = 0; i <= n; ++i) {
    const double z = -span + i * dz;
    out << z << " " << qt_finite_difference(z, spec, h) << "\n";
  }
  return out.str();
}

// ---- corpus-level drivers --------------------------------------------------

struct Prop1Report {
  RatioHistogram histogram;  // average over images
  double max_relative_gap = 0.0;
  double median_ratio = 0.0;  // median over images of per-image median ratios
  std::size_t images = 0, skipped = 0;

  json to_json() const {
    json h = histogram.to_json();
    h.erase("edges");
    return {{"images", images},
            {"skipped_empty", skipped},
            {"mean_ratio", histogram.mean},
            {"max_relative_energy_gap", max_relative_gap},
            {"median_dominance_ratio", median_ratio},
            {"histogram", h}};
  }
};

/// Ratio histogram, energy audit and dominance over cover/stego pairs. The
/// spatial noise is the difference of the decoded stego and cover.
inline Prop1Report verify_prop1(const std::vector<LoadedPair>& pairs, std::uint64_t seed, int kernel_size = 5) {
  if (pairs.empty()) throw InvalidArgument("no pairs to analyse");
  std::vector<RatioHistogram> hists(pairs.size());
  std::vector<double> gaps(pairs.size(), 0.0), medians(pairs.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<char> empty(pairs.size(), 0);
  parallel_for(pairs.size(), [&](std::size_t i) {
    const auto& p = pairs[i];
    const auto cover = decompress(p.cover);
    StegoNoiseGrid noise(p.cover.width(), p.cover.height());
    for (std::size_t k = 0; k < noise.size(); ++k)
      noise.values()[k] = static_cast<std::int8_t>(p.stego.coeffs.values()[k] - p.cover.coeffs.values()[k]);
    const auto spatial = noise_to_spatial(noise, p.cover.quant);
    gaps[i] = energy_audit(noise, p.cover.quant).relative_gap;
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(p.pair_id)));
    medians[i] = gradient_dominance(cover, spatial, random_unit_kernel(kernel_size, rng)).median_ratio;
    try {
      hists[i] = ratio_histogram(cover, spatial);
    } catch (const EmptyHistogram&) {
      empty[i] = 1;
    }
  });
  Prop1Report r;
  std::vector<RatioHistogram> kept;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (empty[i]) ++r.skipped;
    else kept.push_back(std::move(hists[i]));
    r.max_relative_gap = std::max(r.max_relative_gap, gaps[i]);
  }
  r.images = pairs.size();
  r.histogram = average_histograms(kept);
  std::sort(medians.begin(), medians.end());
  r.median_ratio = median_of_sorted(medians);
  return r;
}

}  // namespace stegokit
