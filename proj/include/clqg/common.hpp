#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace clqg {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

enum class Lang : std::uint8_t { pri, sec };

inline constexpr std::array<Lang, 2> kLangs{Lang::pri, Lang::sec};

enum class Task : std::uint8_t {
  AE,  // denoising autoencoding
  BT,  // back-translation
  MT,  // supervised translation on a parallel corpus
  QG,  // question generation
};

inline constexpr Lang other(Lang lang) { return lang == Lang::pri ? Lang::sec : Lang::pri; }

inline std::string_view to_string(Lang lang) { return lang == Lang::pri ? "pri" : "sec"; }

inline std::string_view to_string(Task task) {
  switch (task) {
    case Task::AE:
      return "AE";
    case Task::BT:
      return "BT";
    case Task::MT:
      return "MT";
    case Task::QG:
      return "QG";
  }
  return "?";
}

inline Lang parse_lang(std::string_view text) {
  if (text == "pri") return Lang::pri;
  if (text == "sec") return Lang::sec;
  throw std::invalid_argument("unknown language tag '" + std::string(text) +
                              "' (expected pri or sec)");
}

inline Task parse_task(std::string_view text) {
  if (text == "AE") return Task::AE;
  if (text == "BT") return Task::BT;
  if (text == "MT") return Task::MT;
  if (text == "QG") return Task::QG;
  throw std::invalid_argument("unknown task '" + std::string(text) + "'");
}

}  // namespace clqg
