#include "clqg/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "clqg/hashing.hpp"

namespace clqg {
namespace {

constexpr std::string_view kMagic = "CLQG-CHECKPOINT v1";

void append_le32(std::string& out, float value) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<char>((bits >> shift) & 0xff));
}

float read_le32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

class Cursor {
 public:
  explicit Cursor(std::string_view bytes) : bytes_(bytes) {}
  bool done() const { return pos_ >= bytes_.size(); }
  std::string_view line() {
    const auto end = bytes_.find('\n', pos_);
    if (end == std::string_view::npos) throw CheckpointError("checkpoint truncated (missing newline)");
    auto out = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return out;
  }
  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated inside tensor data");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

Shape parse_shape(std::string_view text) {
  Shape shape;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('x', start);
    if (end == std::string_view::npos) end = text.size();
    const auto field = text.substr(start, end - start);
    if (field.empty()) throw CheckpointError("malformed tensor shape '" + std::string(text) + "'");
    shape.push_back(std::stoull(std::string(field)));
    start = end + 1;
  }
  return shape;
}

}  // namespace

std::string Checkpoint::serialize() const {
  std::string out;
  out += kMagic;
  out.push_back('\n');
  out += manifest.dump();
  out.push_back('\n');
  for (const auto& entry : entries) {
    if (shape_numel(entry.shape) != entry.values.size()) {
      throw CheckpointError("tensor '" + entry.name + "' shape disagrees with its value count");
    }
    if (entry.name.find_first_of(" \n") != std::string::npos) {
      throw CheckpointError("tensor name '" + entry.name + "' contains whitespace");
    }
    std::string dims;
    for (std::size_t i = 0; i < entry.shape.size(); ++i) {
      if (i) dims.push_back('x');
      dims += std::to_string(entry.shape[i]);
    }
    out += entry.name + " " + dims + " " + std::to_string(entry.values.size()) + "\n";
    out.reserve(out.size() + 4 * entry.values.size() + 1);
    for (float v : entry.values) append_le32(out, v);
    out.push_back('\n');
  }
  return out;
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
  Cursor cursor(bytes);
  if (cursor.line() != kMagic) throw CheckpointError("not a checkpoint (bad magic line)");
  Checkpoint ckpt;
  try {
    ckpt.manifest = nlohmann::json::parse(cursor.line());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
  while (!cursor.done()) {
    const auto header = cursor.line();
    const auto first = header.find(' ');
    const auto second = header.find(' ', first + 1);
    if (first == std::string_view::npos || second == std::string_view::npos) {
      throw CheckpointError("malformed tensor header '" + std::string(header) + "'");
    }
    CheckpointEntry entry;
    entry.name = std::string(header.substr(0, first));
    entry.shape = parse_shape(header.substr(first + 1, second - first - 1));
    const auto count = std::stoull(std::string(header.substr(second + 1)));
    if (count != shape_numel(entry.shape)) {
      throw CheckpointError("tensor '" + entry.name + "' count disagrees with its shape");
    }
    const auto raw = cursor.take(4 * count);
    entry.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) entry.values[i] = read_le32(raw.data() + 4 * i);
    if (cursor.take(1) != "\n") throw CheckpointError("tensor '" + entry.name + "' not newline-terminated");
    ckpt.entries.push_back(std::move(entry));
  }
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

const CheckpointEntry* Checkpoint::find(std::string_view name) const {
  for (const auto& entry : entries) {
    if (entry.name == name) return &entry;
  }
  return nullptr;
}

}  // namespace clqg
