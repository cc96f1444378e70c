#pragma once

// File formats:
//   JCG1  coefficient container (little-endian): "JCG1", u32 width, u32 height,
//         64 x u16 quantization table (row-major), then height*width i16
//         coefficients as a raster of 8x8 blocks (blocks row-major,
//         coefficients within a block row-major).
//   FPL1  real plane: "FPL1", u32 width, u32 height, width*height f64 (row-major).
//   PGM   binary P5, 8-bit grayscale.

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "stegokit/codec.hpp"
#include "stegokit/error.hpp"
#include "stegokit/plane.hpp"

namespace stegokit {

namespace fs = std::filesystem;

namespace detail {

class ByteWriter {
 public:
  void put_bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <class U>
  void put_le(U v) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void put_f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void put_f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
  std::vector<unsigned char>& bytes() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  void get_bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <class U>
  U get_le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(buf_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  float get_f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw IoError(what_ + ": truncated file");
  }
  const std::vector<unsigned char>& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline void expect_magic(ByteReader& r, const char (&magic)[5], const std::string& what) {
  char got[4];
  r.get_bytes(got, 4);
  if (std::memcmp(got, magic, 4) != 0) throw IoError(what + ": bad magic, expected " + magic);
}

}  // namespace detail

inline std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return data;
}

inline void write_file(const fs::path& path, const std::vector<unsigned char>& data) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::vector<unsigned char>(text.begin(), text.end()));
}

inline std::string read_text(const fs::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

// ---- JCG1 ------------------------------------------------------------------

inline std::vector<unsigned char> encode_jcg(const DctGrid& grid) {
  grid.validate();
  detail::ByteWriter w;
  w.put_bytes("JCG1", 4);
  w.put_le(static_cast<std::uint32_t>(grid.width()));
  w.put_le(static_cast<std::uint32_t>(grid.height()));
  for (int q : grid.quant.q) w.put_le(static_cast<std::uint16_t>(q));
  for (int br = 0; br < grid.height(); br += kBlock)
    for (int bc = 0; bc < grid.width(); bc += kBlock)
      for (int u = 0; u < kBlock; ++u)
        for (int v = 0; v < kBlock; ++v) w.put_le(static_cast<std::uint16_t>(grid.coeffs(br + u, bc + v)));
  return std::move(w.bytes());
}

inline DctGrid decode_jcg(const std::vector<unsigned char>& bytes, const std::string& what = "JCG") {
  detail::ByteReader r(bytes, what);
  detail::expect_magic(r, "JCG1", what);
  const auto width = r.get_le<std::uint32_t>();
  const auto height = r.get_le<std::uint32_t>();
  if (width == 0 || height == 0 || width % kBlock || height % kBlock || width > 65536 || height > 65536)
    throw IoError(what + ": invalid dimensions");
  DctGrid grid;
  for (int& q : grid.quant.q) q = r.get_le<std::uint16_t>();
  try {
    grid.quant.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(what + ": " + e.what());
  }
  if (r.remaining() != static_cast<std::size_t>(width) * height * 2) throw IoError(what + ": coefficient payload size mismatch");
  grid.coeffs = Plane<std::int16_t>(static_cast<int>(width), static_cast<int>(height));
  for (int br = 0; br < grid.height(); br += kBlock)
    for (int bc = 0; bc < grid.width(); bc += kBlock)
      for (int u = 0; u < kBlock; ++u)
        for (int v = 0; v < kBlock; ++v)
          grid.coeffs(br + u, bc + v) = static_cast<std::int16_t>(r.get_le<std::uint16_t>());
  return grid;
}

inline void write_jcg(const fs::path& path, const DctGrid& grid) { write_file(path, encode_jcg(grid)); }
inline DctGrid read_jcg(const fs::path& path) { return decode_jcg(read_file(path), path.string()); }

// ---- FPL1 ------------------------------------------------------------------

inline std::vector<unsigned char> encode_fpl(const ImagePlane& plane) {
  detail::ByteWriter w;
  w.put_bytes("FPL1", 4);
  w.put_le(static_cast<std::uint32_t>(plane.width()));
  w.put_le(static_cast<std::uint32_t>(plane.height()));
  for (double v : plane.values()) w.put_f64(v);
  return std::move(w.bytes());
}

inline ImagePlane decode_fpl(const std::vector<unsigned char>& bytes, const std::string& what = "FPL") {
  detail::ByteReader r(bytes, what);
  detail::expect_magic(r, "FPL1", what);
  const auto width = r.get_le<std::uint32_t>();
  const auto height = r.get_le<std::uint32_t>();
  if (r.remaining() != static_cast<std::size_t>(width) * height * 8) throw IoError(what + ": payload size mismatch");
  ImagePlane plane(static_cast<int>(width), static_cast<int>(height));
  for (double& v : plane.storage()) v = r.get_f64();
  return plane;
}

inline void write_fpl(const fs::path& path, const ImagePlane& plane) { write_file(path, encode_fpl(plane)); }
inline ImagePlane read_fpl(const fs::path& path) { return decode_fpl(read_file(path), path.string()); }

// ---- PGM (P5, maxval <= 255) -------------------------------------------------

inline GrayImage decode_pgm(const std::vector<unsigned char>& bytes, const std::string& what = "PGM") {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw IoError(what + ": malformed PGM header");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1'000'000) throw IoError(what + ": PGM header value too large");
    }
    return static_cast<int>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw IoError(what + ": not a binary PGM (P5)");
  pos = 2;
  const int width = read_int();
  const int height = read_int();
  const int maxval = read_int();
  if (maxval < 1 || maxval > 255) throw IoError(what + ": only 8-bit PGM is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw IoError(what + ": malformed PGM header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (bytes.size() - pos < n) throw IoError(what + ": truncated PGM data");
  return GrayImage(width, height, std::vector<std::uint8_t>(bytes.begin() + pos, bytes.begin() + pos + n));
}

inline std::vector<unsigned char> encode_pgm(const GrayImage& img) {
  const std::string header = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.insert(out.end(), img.values().begin(), img.values().end());
  return out;
}

inline GrayImage read_pgm(const fs::path& path) { return decode_pgm(read_file(path), path.string()); }
inline void write_pgm(const fs::path& path, const GrayImage& img) { write_file(path, encode_pgm(img)); }

}  // namespace stegokit
