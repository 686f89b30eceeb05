#pragma once

// Single-file parameter container.
//
//   CLQG-CHECKPOINT v1\n
//   <manifest: one line of JSON, keys sorted>\n
//   then per tensor, in writer order:
//   <name> <d0>x<d1>... <float count>\n<count little-endian float32>\n
//
// Serialization is canonical, so save -> load -> save reproduces the bytes.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "clqg/tensor.hpp"

namespace clqg {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  nlohmann::json manifest = nlohmann::json::object();
  std::vector<CheckpointEntry> entries;

  std::string serialize() const;
  static Checkpoint deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  const CheckpointEntry* find(std::string_view name) const;
};

}  // namespace clqg
