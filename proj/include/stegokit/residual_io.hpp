#pragma once

// Debug dump of a ResidualStack: one FPL1 file per map plus stack.json
// listing (T, q, k, l) for every file in stack order.

#include <cstdio>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "stegokit/io.hpp"
#include "stegokit/residual.hpp"

namespace stegokit {

inline void write_residual_stack(const std::filesystem::path& dir, const ResidualStack& stack) {
  nlohmann::json planes = nlohmann::json::array();
  for (std::size_t g = 0; g < stack.groups.size(); ++g)
    for (std::size_t m = 0; m < stack.groups[g].size(); ++m) {
      char name[32];
      std::snprintf(name, sizeof name, "g%02zu_m%03zu.fpl", g, m);
      write_fpl(dir / name, plane_cast<double>(stack.groups[g][m]));
      planes.push_back({{"file", name},
                        {"T", stack.specs[g].threshold},
                        {"q", stack.specs[g].step},
                        {"k", stack.labels[m].first},
                        {"l", stack.labels[m].second}});
    }
  const nlohmann::json sidecar{{"kernel_size", stack.kernel_size}, {"qt", format_qt_specs(stack.specs)}, {"planes", planes}};
  write_text(dir / "stack.json", sidecar.dump(1) + "\n");
}

inline ResidualStack read_residual_stack(const std::filesystem::path& dir) {
  const auto what = (dir / "stack.json").string();
  nlohmann::json sidecar;
  try {
    sidecar = nlohmann::json::parse(read_text(dir / "stack.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(what + ": " + e.what());
  }
  ResidualStack stack;
  try {
    stack.kernel_size = sidecar.at("kernel_size").get<int>();
    stack.specs = parse_qt_specs(sidecar.at("qt").get<std::string>());
    const auto& planes = sidecar.at("planes");
    const std::size_t maps = static_cast<std::size_t>(stack.kernel_size) * stack.kernel_size;
    if (planes.size() != maps * stack.specs.size()) throw IoError(what + ": plane count does not match the stack shape");
    stack.groups.resize(stack.specs.size());
    for (std::size_t i = 0; i < planes.size(); ++i) {
      const auto& p = planes[i];
      const std::size_t g = i / maps;
      if (p.at("T").get<int>() != stack.specs[g].threshold || p.at("q").get<double>() != stack.specs[g].step)
        throw IoError(what + ": plane order does not match the Q&T list");
      if (g == 0) stack.labels.emplace_back(p.at("k").get<int>(), p.at("l").get<int>());
      stack.groups[g].push_back(plane_cast<std::int16_t>(read_fpl(dir / p.at("file").get<std::string>())));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(what + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw IoError(what + ": " + e.what());
  }
  return stack;
}

}  // namespace stegokit
