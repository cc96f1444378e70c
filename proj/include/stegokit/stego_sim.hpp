#pragma once

// Cover/stego dataset synthesis: JPEG-style cover preparation, +-1
// coefficient embedding, a seeded texture generator for self-contained
// runs, and JSON Lines manifests with leak-free train/test splits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stegokit/codec.hpp"
#include "stegokit/error.hpp"
#include "stegokit/io.hpp"
#include "stegokit/parallel.hpp"
#include "stegokit/rng.hpp"

namespace stegokit {

using json = nlohmann::json;

struct EmbedSpec {
  double rate = 0.2;  // fraction of nonzero AC coefficients changed by +-1
  std::uint64_t seed = 0;

  void validate() const {
    if (!(rate > 0.0 && rate <= 1.0)) throw InvalidArgument("embedding rate must be in (0, 1], got " + std::to_string(rate));
  }
};

enum class CropMode { left_top, center };

inline std::string to_string(CropMode m) { return m == CropMode::center ? "center" : "left-top"; }
inline CropMode parse_crop_mode(const std::string& s) {
  if (s == "left-top") return CropMode::left_top;
  if (s == "center") return CropMode::center;
  throw InvalidArgument("unknown crop mode '" + s + "' (expected left-top or center)");
}

/// size x size window of `img`. size 0 crops to the largest multiple-of-8 box.
inline GrayImage crop(const GrayImage& img, int size, CropMode mode = CropMode::left_top) {
  int w = img.width() / kBlock * kBlock, h = img.height() / kBlock * kBlock;
  if (size > 0) {
    if (size % kBlock != 0) throw InvalidArgument("crop size must be a multiple of 8");
    if (img.width() < size || img.height() < size)
      throw InvalidArgument("image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                            " is smaller than the crop size " + std::to_string(size));
    w = h = size;
  }
  if (w == 0 || h == 0) throw InvalidArgument("image smaller than one 8x8 block");
  const int top = mode == CropMode::center ? (img.height() - h) / 2 : 0;
  const int left = mode == CropMode::center ? (img.width() - w) / 2 : 0;
  GrayImage out(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out(r, c) = img(top + r, left + c);
  return out;
}

/// Blockwise DCT of the image quantized with the table for `qf`.
inline DctGrid prepare_cover(const GrayImage& img, int qf) {
  const auto table = quant_table_for_quality(qf);
  return DctGrid{quantize(forward_dct_blocks(plane_cast<double>(img)), table), table};
}

struct Embedding {
  DctGrid stego;
  StegoNoiseGrid noise;
  std::size_t changes = 0;
};

/// Changes floor(rate * #nonzero AC) distinct nonzero AC coefficients by +-1.
inline Embedding embed(const DctGrid& cover, const EmbedSpec& spec) {
  spec.validate();
  cover.validate();
  std::vector<std::size_t> candidates;
  const auto coeffs = cover.coeffs.values();
  for (int r = 0; r < cover.height(); ++r)
    for (int c = 0; c < cover.width(); ++c)
      if (!DctGrid::is_dc(r, c) && cover.coeffs(r, c) != 0)
        candidates.push_back(static_cast<std::size_t>(r) * cover.width() + c);
  if (candidates.empty()) throw InvalidArgument("cover has no nonzero AC coefficient; refusing to embed");

  // The tiny epsilon keeps products such as 0.29 * 100 from flooring to 28.
  const auto count = static_cast<std::size_t>(std::floor(spec.rate * candidates.size() + 1e-9));
  Rng rng(spec.seed);
  for (std::size_t i = 0; i < count; ++i) std::swap(candidates[i], candidates[i + rng.below(candidates.size() - i)]);

  Embedding e{cover, StegoNoiseGrid(cover.width(), cover.height()), count};
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = candidates[i];
    const int delta = rng.coin() ? 1 : -1;
    const int v = coeffs[at] + delta;
    if (v < INT16_MIN || v > INT16_MAX) throw InvalidArgument("coefficient overflow while embedding");
    e.stego.coeffs.values()[at] = static_cast<std::int16_t>(v);
    e.noise.values()[at] = static_cast<std::int8_t>(delta);
  }
  return e;
}

namespace detail {

// Bilinear upsampling of a (cells+1)^2 lattice of N(0,1) values to size x size.
inline void add_smooth_layer(std::vector<double>& img, int size, int cell, double amplitude, Rng& rng) {
  const int n = size / cell + 2;
  std::vector<double> lattice(static_cast<std::size_t>(n) * n);
  for (auto& v : lattice) v = rng.normal();
  const double off_r = rng.uniform(), off_c = rng.uniform();
  for (int r = 0; r < size; ++r) {
    const double y = r / static_cast<double>(cell) + off_r;
    const int y0 = static_cast<int>(y);
    const double fy = y - y0;
    for (int c = 0; c < size; ++c) {
      const double x = c / static_cast<double>(cell) + off_c;
      const int x0 = static_cast<int>(x);
      const double fx = x - x0;
      auto at = [&](int i, int j) { return lattice[static_cast<std::size_t>(i) * n + j]; };
      const double top = at(y0, x0) * (1 - fx) + at(y0, x0 + 1) * fx;
      const double bot = at(y0 + 1, x0) * (1 - fx) + at(y0 + 1, x0 + 1) * fx;
      img[static_cast<std::size_t>(r) * size + c] += amplitude * (top * (1 - fy) + bot * fy);
    }
  }
}

}  // namespace detail

/// Seeded synthetic texture: multi-scale smoothed noise plus a little sensor
/// grain, with per-image brightness, contrast and roughness.
inline GrayImage synthetic_cover(int size, std::uint64_t seed) {
  if (size < kBlock || size % kBlock != 0) throw InvalidArgument("synthetic cover size must be a positive multiple of 8");
  Rng rng(seed);
  std::vector<double> img(static_cast<std::size_t>(size) * size, 0.0);
  const double roughness = rng.uniform(0.35, 0.85);
  double amplitude = 1.0;
  for (int cell = std::min(32, size / 2); cell >= 2; cell /= 2) {
    detail::add_smooth_layer(img, size, cell, amplitude, rng);
    amplitude *= roughness;
  }
  double mean = 0, sq = 0;
  for (double v : img) mean += v;
  mean /= img.size();
  for (double v : img) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / img.size());
  const double contrast = rng.uniform(12.0, 40.0), brightness = rng.uniform(80.0, 175.0);
  const double grain = rng.uniform(0.5, 2.0);
  GrayImage out(size, size);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = brightness + contrast * (img[i] - mean) / sd + grain * rng.normal();
    out.values()[i] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
  }
  return out;
}

// ---- manifest --------------------------------------------------------------

enum class Split { train, test };

inline std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }
inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw IntegrityError("unknown split '" + s + "'");
}

struct PairRecord {
  int pair_id = 0;
  std::string cover_path, stego_path;  // relative to the manifest directory
  Split split = Split::train;
  std::string cover_hash, stego_hash;
  std::size_t changes = 0;
};

struct DatasetConfig {
  int quality = 75;
  double rate = 0.2;
  std::uint64_t seed = 0;
  int size = 64;
  CropMode crop = CropMode::left_top;
  std::string source = "synthetic";  // "synthetic" or the cover directory
  int count = 0;

  json to_json() const {
    return {{"quality", quality}, {"rate", rate}, {"seed", seed}, {"size", size},
            {"crop", to_string(crop)}, {"source", source}, {"count", count}};
  }
  static DatasetConfig from_json(const json& j) {
    DatasetConfig c;
    c.quality = j.at("quality").get<int>();
    c.rate = j.at("rate").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.size = j.at("size").get<int>();
    c.crop = parse_crop_mode(j.at("crop").get<std::string>());
    c.source = j.at("source").get<std::string>();
    c.count = j.at("count").get<int>();
    return c;
  }
};

struct DatasetManifest {
  DatasetConfig config;
  std::vector<PairRecord> records;

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [s](const auto& r) { return r.split == s; }));
  }
};

/// 64-bit FNV-1a, hex encoded; identifies file contents in the manifest.
inline std::string content_hash(const std::vector<unsigned char>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string manifest_text(const DatasetManifest& m) {
  std::string out = json{{"format", "stegokit-manifest"}, {"version", 1}, {"config", m.config.to_json()}}.dump() + "\n";
  for (const auto& r : m.records)
    out += json{{"pair_id", r.pair_id},       {"cover_path", r.cover_path}, {"stego_path", r.stego_path},
                {"split", to_string(r.split)}, {"cover_hash", r.cover_hash}, {"stego_hash", r.stego_hash},
                {"changes", r.changes}}
               .dump() +
           "\n";
  return out;
}

inline DatasetManifest parse_manifest(const std::string& text, const std::string& what = "manifest") {
  std::istringstream in(text);
  std::string line;
  DatasetManifest m;
  bool header = true;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = json::parse(line);
      if (header) {
        if (j.value("format", "") != "stegokit-manifest") throw IoError(what + ": not a stegokit manifest");
        m.config = DatasetConfig::from_json(j.at("config"));
        header = false;
        continue;
      }
      PairRecord r;
      r.pair_id = j.at("pair_id").get<int>();
      r.cover_path = j.at("cover_path").get<std::string>();
      r.stego_path = j.at("stego_path").get<std::string>();
      r.split = parse_split(j.at("split").get<std::string>());
      r.cover_hash = j.at("cover_hash").get<std::string>();
      r.stego_hash = j.at("stego_hash").get<std::string>();
      r.changes = j.at("changes").get<std::size_t>();
      m.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw IoError(what + ": malformed manifest: " + e.what());
  }
  if (header) throw IoError(what + ": empty manifest");
  return m;
}

inline void write_manifest(const fs::path& path, const DatasetManifest& m) { write_text(path, manifest_text(m)); }
inline DatasetManifest read_manifest(const fs::path& path) { return parse_manifest(read_text(path), path.string()); }

/// Throws IntegrityError on duplicate pair ids or paths, or on any cover
/// (by path or by content) present in both splits.
inline void audit_manifest(const DatasetManifest& m) {
  std::set<int> ids;
  std::set<std::string> paths;
  std::map<std::string, Split> cover_split_by_path, cover_split_by_hash;
  auto check_cross = [](std::map<std::string, Split>& seen, const std::string& key, Split s, const std::string& what) {
    const auto [it, inserted] = seen.emplace(key, s);
    if (!inserted && it->second != s) throw IntegrityError(what + " " + key + " appears in both train and test splits");
  };
  for (const auto& r : m.records) {
    if (!ids.insert(r.pair_id).second) throw IntegrityError("duplicate pair_id " + std::to_string(r.pair_id));
    check_cross(cover_split_by_path, r.cover_path, r.split, "cover");
    if (!r.cover_hash.empty()) check_cross(cover_split_by_hash, r.cover_hash, r.split, "cover content");
    for (const auto* p : {&r.cover_path, &r.stego_path})
      if (!paths.insert(*p).second) throw IntegrityError("duplicate path " + *p);
  }
}

// ---- dataset building ------------------------------------------------------

struct CoverSource {
  std::vector<fs::path> files;  // PGM covers; empty means synthetic
  fs::path dir;
  int synthetic = 0;

  int count() const { return files.empty() ? synthetic : static_cast<int>(files.size()); }

  static CoverSource directory(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("cover directory not found: " + dir.string());
    CoverSource s;
    s.dir = dir;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".pgm") s.files.push_back(e.path());
    std::sort(s.files.begin(), s.files.end());
    return s;
  }
  static CoverSource synthetic_covers(int n) {
    CoverSource s;
    s.synthetic = n;
    return s;
  }
};

namespace detail {
enum : std::uint64_t { kSplitStream = 1, kCoverStream = 2, kEmbedStream = 3 };
}

/// Seeded assignment of pair ids to splits: ceil(n/2) train, floor(n/2) test.
inline std::vector<Split> assign_splits(int n, std::uint64_t seed) {
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, detail::kSplitStream));
  rng.shuffle(std::span<int>(order));
  std::vector<Split> out(n, Split::test);
  for (int i = 0; i < (n + 1) / 2; ++i) out[order[i]] = Split::train;
  return out;
}

/// Writes covers/NNNNNN.jcg, stegos/NNNNNN.jcg and manifest.jsonl under `out`.
inline DatasetManifest build_dataset(const CoverSource& source, DatasetConfig cfg, const fs::path& out) {
  EmbedSpec{cfg.rate, 0}.validate();
  quant_table_for_quality(cfg.quality);
  const int n = source.count();
  if (n < 2) throw InvalidArgument("a dataset needs at least 2 covers, got " + std::to_string(n));
  cfg.count = n;
  cfg.source = source.files.empty() ? "synthetic" : source.dir.generic_string();

  const auto splits = assign_splits(n, cfg.seed);
  std::vector<PairRecord> records(n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const int id = static_cast<int>(i);
    GrayImage img = source.files.empty()
                        ? synthetic_cover(cfg.size, derive_seed(derive_seed(cfg.seed, detail::kCoverStream), i))
                        : crop(read_pgm(source.files[i]), cfg.size, cfg.crop);
    const auto cover = prepare_cover(img, cfg.quality);
    const auto e = embed(cover, {cfg.rate, derive_seed(derive_seed(cfg.seed, detail::kEmbedStream), i)});
    char name[32];
    std::snprintf(name, sizeof name, "%06d.jcg", id);
    PairRecord& r = records[i];
    r.pair_id = id;
    r.cover_path = std::string("covers/") + name;
    r.stego_path = std::string("stegos/") + name;
    r.split = splits[i];
    r.changes = e.changes;
    const auto cover_bytes = encode_jcg(cover), stego_bytes = encode_jcg(e.stego);
    r.cover_hash = content_hash(cover_bytes);
    r.stego_hash = content_hash(stego_bytes);
    write_file(out / r.cover_path, cover_bytes);
    write_file(out / r.stego_path, stego_bytes);
  });
  DatasetManifest m{cfg, std::move(records)};
  audit_manifest(m);
  write_manifest(out / "manifest.jsonl", m);
  return m;
}

// ---- loading ---------------------------------------------------------------

struct LoadedPair {
  int pair_id = 0;
  DctGrid cover, stego;
};

struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<LoadedPair> train, test;

  const std::vector<LoadedPair>& split(Split s) const { return s == Split::train ? train : test; }
};

/// Reads a manifest and its coefficient files, verifying the audit and the
/// recorded content hashes.
inline LoadedDataset load_dataset(const fs::path& manifest_path) {
  LoadedDataset d;
  d.manifest = read_manifest(manifest_path);
  audit_manifest(d.manifest);
  const fs::path root = manifest_path.parent_path();
  const auto& recs = d.manifest.records;
  std::vector<LoadedPair> pairs(recs.size());
  parallel_for(recs.size(), [&](std::size_t i) {
    const auto& r = recs[i];
    const auto cover_bytes = read_file(root / r.cover_path), stego_bytes = read_file(root / r.stego_path);
    if (content_hash(cover_bytes) != r.cover_hash || content_hash(stego_bytes) != r.stego_hash)
      throw IntegrityError("content hash mismatch for pair " + std::to_string(r.pair_id));
    pairs[i] = {r.pair_id, decode_jcg(cover_bytes, r.cover_path), decode_jcg(stego_bytes, r.stego_path)};
    if (!pairs[i].cover.coeffs.same_shape(pairs[i].stego.coeffs) || !(pairs[i].cover.quant == pairs[i].stego.quant))
      throw IntegrityError("cover and stego of pair " + std::to_string(r.pair_id) + " disagree in shape or table");
  });
  for (std::size_t i = 0; i < recs.size(); ++i)
    (recs[i].split == Split::train ? d.train : d.test).push_back(std::move(pairs[i]));
  return d;
}

}  // namespace stegokit
