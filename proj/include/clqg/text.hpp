#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace clqg {

/// NFC normalization followed by whitespace collapsing: runs of whitespace
/// become one ASCII space, leading and trailing whitespace is removed.
/// Throws std::invalid_argument on malformed UTF-8.
std::string normalize_text(std::string_view text);

bool is_normalized(std::string_view text);

/// Splits on ASCII space only; intended for already-normalized text.
std::vector<std::string> split_words(std::string_view normalized);

std::string join_words(const std::vector<std::string>& words);

/// Splits valid UTF-8 into one string per code point.
std::vector<std::string> utf8_codepoints(std::string_view text);

}  // namespace clqg
