#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace clqg {

std::string sha1_hex(std::string_view bytes);

/// Hash git assigns to a blob with these contents.
std::string git_blob_hash(std::string_view bytes);
std::string git_blob_hash_file(const std::filesystem::path& path);

/// 64-bit FNV-1a over raw bytes; used for parameter checksums.
std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed = 1469598103934665603ull);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace clqg
