#pragma once

// Checkpoint file: "SKCP", u32 header length, JSON header, then one
// little-endian f32 blob per tensor in header order (parameters first, then
// batch-norm running statistics).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "stegokit/error.hpp"
#include "stegokit/io.hpp"
#include "stegokit/model.hpp"

namespace stegokit {

using json = nlohmann::json;

inline constexpr int kCheckpointVersion = 1;

struct CheckpointInfo {
  long iteration = 0;
  json extra = json::object();  // e.g. the resolved training configuration
};

inline std::vector<unsigned char> encode_checkpoint(nn::HybridModel<float>& model, const CheckpointInfo& info) {
  json tensors = json::array();
  auto params = model.params();
  auto buffers = model.buffers();
  for (const auto& p : params) tensors.push_back({{"name", p.name}, {"dims", p.dims}, {"kind", "param"}});
  for (const auto& b : buffers) tensors.push_back({{"name", b.name}, {"dims", b.dims}, {"kind", "buffer"}});
  json qt_order = json::array();
  for (const auto& s : model.config().qt) qt_order.push_back(format_qt_specs({s}));
  const json header{{"format", "stegokit-checkpoint"},
                    {"version", kCheckpointVersion},
                    {"architecture", nn::to_json(model.config())},
                    {"qt_order", qt_order},
                    {"seed", model.seed()},
                    {"iteration", info.iteration},
                    {"tensors", tensors},
                    {"extra", info.extra}};
  const std::string text = header.dump();
  detail::ByteWriter w;
  w.put_bytes("SKCP", 4);
  w.put_le(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text.data(), text.size());
  for (const auto& p : params)
    for (float v : p.value) w.put_f32(v);
  for (const auto& b : buffers)
    for (float v : b.value) w.put_f32(v);
  return std::move(w.bytes());
}

struct LoadedCheckpoint {
  nn::HybridModel<float> model;
  long iteration = 0;
  json header;
};

inline LoadedCheckpoint decode_checkpoint(const std::vector<unsigned char>& bytes, const std::string& what = "checkpoint") {
  detail::ByteReader r(bytes, what);
  detail::expect_magic(r, "SKCP", what);
  const auto len = r.get_le<std::uint32_t>();
  std::string text(len, '\0');
  r.get_bytes(text.data(), len);
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(what + ": malformed header: " + e.what());
  }
  if (header.value("format", "") != "stegokit-checkpoint") throw IoError(what + ": not a stegokit checkpoint");
  if (header.value("version", 0) != kCheckpointVersion)
    throw IoError(what + ": unsupported checkpoint version " + header.value("version", json()).dump());

  LoadedCheckpoint ck{nn::HybridModel<float>(nn::hybrid_config_from_json(header.at("architecture")),
                                             header.at("seed").get<std::uint64_t>()),
                      header.at("iteration").get<long>(), header};
  auto params = ck.model.params();
  auto buffers = ck.model.buffers();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size() + buffers.size()) throw IntegrityError(what + ": tensor list does not match architecture");
  std::size_t t = 0;
  auto read_into = [&](const std::string& name, const std::vector<int>& dims, std::span<float> dst) {
    const auto& entry = tensors[t++];
    if (entry.at("name").get<std::string>() != name || entry.at("dims").get<std::vector<int>>() != dims)
      throw IntegrityError(what + ": tensor " + entry.at("name").get<std::string>() + " does not match " + name);
    for (float& v : dst) v = r.get_f32();
  };
  for (auto& p : params) read_into(p.name, p.dims, p.value);
  for (auto& b : buffers) read_into(b.name, b.dims, b.value);
  if (r.remaining() != 0) throw IoError(what + ": trailing bytes after tensor data");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, nn::HybridModel<float>& model, const CheckpointInfo& info) {
  write_file(path, encode_checkpoint(model, info));
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace stegokit
