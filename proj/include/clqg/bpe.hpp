#pragma once

// Byte-pair-encoding subword model over Unicode code points.
//
// One joint vocabulary serves both languages. Ids are laid out as
//   [specials][end-of-word marker][base characters, byte-sorted][merges, by rank]
// so that vocab_size() == kNumSpecials + base symbols + merges applied.
// Merging is word-internal: every word is a run of characters followed by the
// end-of-word marker, and no merge crosses a word boundary.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "clqg/common.hpp"

namespace clqg {

namespace special {
inline constexpr TokenId pad = 0;
inline constexpr TokenId bos = 1;
inline constexpr TokenId eos = 2;
inline constexpr TokenId unk = 3;
inline constexpr TokenId lang_pri = 4;
inline constexpr TokenId lang_sec = 5;
}  // namespace special

inline constexpr std::size_t kNumSpecials = 6;
inline constexpr std::string_view kEndOfWord = "</w>";

inline constexpr TokenId lang_tag(Lang lang) {
  return lang == Lang::pri ? special::lang_pri : special::lang_sec;
}

class BpeFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BpeModel {
 public:
  struct Merge {
    std::string left;
    std::string right;
    bool operator==(const Merge&) const = default;
  };

  BpeModel();

  /// Greedy highest-frequency pair merging over the words of every corpus
  /// line. Ties go to the byte-wise smallest (left, right) pair. Stops early
  /// when no pair occurs at least twice, or when the best pair would produce
  /// a token string that already exists. Throws std::invalid_argument when
  /// the corpora hold no words.
  static BpeModel learn(std::span<const std::vector<std::string>> corpora, std::size_t num_merges);

  /// Whitespace-split, per-word greedy merge application in rank order.
  /// A word containing a character unseen in training becomes one UNK.
  TokenIds encode(std::string_view text) const;

  /// Concatenates subwords, turning end-of-word markers into spaces and
  /// dropping special ids. Throws std::out_of_range for ids outside vocab.
  std::string decode(std::span<const TokenId> ids) const;

  std::size_t vocab_size() const { return tokens_.size(); }
  std::size_t num_merges() const { return merges_.size(); }
  std::size_t num_base_symbols() const { return num_base_; }
  const std::vector<Merge>& merges() const { return merges_; }
  const std::string& token(TokenId id) const;
  /// -1 when absent.
  TokenId id_of(std::string_view token) const;
  bool is_special(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < kNumSpecials; }
  bool ends_word(TokenId id) const;

  /// Plain-text model file: header, merges ("left right" in rank order),
  /// then "token<TAB>id" vocabulary lines.
  std::string serialize() const;
  static BpeModel deserialize(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static BpeModel load(const std::filesystem::path& path);

  bool operator==(const BpeModel& other) const { return tokens_ == other.tokens_ && merges_ == other.merges_; }

 private:
  struct PairHash {
    std::size_t operator()(const std::pair<TokenId, TokenId>& p) const noexcept {
      return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(static_cast<std::uint32_t>(p.first)) << 32) |
                                        static_cast<std::uint32_t>(p.second));
    }
  };
  struct MergeRule {
    std::size_t rank;
    TokenId result;
  };

  TokenId add_token(std::string text, std::string surface, bool ends_word);
  void add_merge(TokenId left, TokenId right);
  void encode_word(std::string_view word, TokenIds& out) const;

  std::vector<std::string> tokens_;
  std::vector<std::string> surfaces_;  // printable text, marker removed
  std::vector<bool> ends_word_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<Merge> merges_;
  std::unordered_map<std::pair<TokenId, TokenId>, MergeRule, PairHash> rules_;
  std::size_t num_base_ = 0;
};

}  // namespace clqg
