#include "clqg/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "clqg/text.hpp"

namespace clqg {
namespace {

constexpr std::string_view kHeaderTag = "#clqg-bpe";
constexpr int kFormatVersion = 1;

const std::array<std::string_view, kNumSpecials> kSpecialTokens{"<pad>", "<s>",   "</s>",
                                                                "<unk>", "<pri>", "<sec>"};

void merge_pair_in_place(TokenIds& symbols, TokenId left, TokenId right, TokenId result) {
  std::size_t out = 0;
  for (std::size_t i = 0; i < symbols.size();) {
    if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
      symbols[out++] = result;
      i += 2;
    } else {
      symbols[out++] = symbols[i++];
    }
  }
  symbols.resize(out);
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

std::size_t parse_count(std::string_view header, std::string_view key) {
  const std::string needle = " " + std::string(key) + "=";
  const auto at = header.find(needle);
  if (at == std::string_view::npos) {
    throw BpeFormatError("BPE header lacks '" + std::string(key) + "'");
  }
  std::size_t value = 0;
  std::size_t i = at + needle.size();
  if (i >= header.size() || header[i] < '0' || header[i] > '9') {
    throw BpeFormatError("BPE header field '" + std::string(key) + "' is not a number");
  }
  for (; i < header.size() && header[i] >= '0' && header[i] <= '9'; ++i) {
    value = value * 10 + static_cast<std::size_t>(header[i] - '0');
  }
  return value;
}

}  // namespace

BpeModel::BpeModel() {
  for (auto special : kSpecialTokens) add_token(std::string(special), "", false);
  add_token(std::string(kEndOfWord), "", true);
  num_base_ = 1;
}

TokenId BpeModel::add_token(std::string text, std::string surface, bool ends_word) {
  const auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(text, id);
  tokens_.push_back(std::move(text));
  surfaces_.push_back(std::move(surface));
  ends_word_.push_back(ends_word);
  return id;
}

void BpeModel::add_merge(TokenId left, TokenId right) {
  const TokenId result = add_token(tokens_[left] + tokens_[right], surfaces_[left] + surfaces_[right],
                                   ends_word_[right]);
  rules_.emplace(std::make_pair(left, right), MergeRule{merges_.size(), result});
  merges_.push_back({tokens_[left], tokens_[right]});
}

const std::string& BpeModel::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenId BpeModel::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

bool BpeModel::ends_word(TokenId id) const {
  token(id);  // range check
  return ends_word_[static_cast<std::size_t>(id)];
}

BpeModel BpeModel::learn(std::span<const std::vector<std::string>> corpora, std::size_t num_merges) {
  std::map<std::string, std::uint64_t> word_counts;
  for (const auto& corpus : corpora) {
    for (const auto& line : corpus) {
      for (auto& word : split_words(normalize_text(line))) ++word_counts[word];
    }
  }
  if (word_counts.empty()) throw std::invalid_argument("learn_bpe: corpora contain no words");

  std::set<std::string> characters;
  for (const auto& [word, count] : word_counts) {
    for (auto& c : utf8_codepoints(word)) characters.insert(std::move(c));
  }

  BpeModel model;
  for (const auto& c : characters) model.add_token(c, c, false);
  model.num_base_ = 1 + characters.size();
  const TokenId marker = static_cast<TokenId>(kNumSpecials);

  std::vector<std::pair<TokenIds, std::uint64_t>> words;
  words.reserve(word_counts.size());
  for (const auto& [word, count] : word_counts) {
    TokenIds symbols;
    for (const auto& c : utf8_codepoints(word)) symbols.push_back(model.index_.at(c));
    symbols.push_back(marker);
    words.emplace_back(std::move(symbols), count);
  }

  std::set<std::pair<TokenId, TokenId>> blocked;
  while (model.merges_.size() < num_merges) {
    std::map<std::pair<TokenId, TokenId>, std::uint64_t> pair_counts;
    for (const auto& [symbols, count] : words) {
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        pair_counts[{symbols[i], symbols[i + 1]}] += count;
      }
    }
    const std::pair<TokenId, TokenId>* best = nullptr;
    std::uint64_t best_count = 0;
    for (const auto& [pair, count] : pair_counts) {
      if (blocked.contains(pair)) continue;
      if (best != nullptr) {
        if (count < best_count) continue;
        if (count == best_count) {
          const auto& bl = model.tokens_[best->first];
          const auto& br = model.tokens_[best->second];
          const auto& pl = model.tokens_[pair.first];
          const auto& pr = model.tokens_[pair.second];
          if (std::tie(pl, pr) >= std::tie(bl, br)) continue;
        }
      }
      best = &pair;
      best_count = count;
    }
    if (best == nullptr || best_count < 2) break;
    const auto [left, right] = *best;
    if (model.index_.contains(model.tokens_[left] + model.tokens_[right])) {
      blocked.insert(*best);
      continue;
    }
    model.add_merge(left, right);
    const TokenId result = static_cast<TokenId>(model.tokens_.size() - 1);
    for (auto& [symbols, count] : words) merge_pair_in_place(symbols, left, right, result);
  }
  return model;
}

void BpeModel::encode_word(std::string_view word, TokenIds& out) const {
  TokenIds symbols;
  for (const auto& c : utf8_codepoints(word)) {
    auto it = index_.find(c);
    // Only base characters (ids below the first merge) are valid letters.
    if (it == index_.end() || static_cast<std::size_t>(it->second) >= kNumSpecials + num_base_ ||
        static_cast<std::size_t>(it->second) <= kNumSpecials) {
      out.push_back(special::unk);
      return;
    }
    symbols.push_back(it->second);
  }
  symbols.push_back(static_cast<TokenId>(kNumSpecials));

  while (symbols.size() > 1) {
    const MergeRule* best = nullptr;
    std::pair<TokenId, TokenId> best_pair{};
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = rules_.find({symbols[i], symbols[i + 1]});
      if (it != rules_.end() && (best == nullptr || it->second.rank < best->rank)) {
        best = &it->second;
        best_pair = it->first;
      }
    }
    if (best == nullptr) break;
    merge_pair_in_place(symbols, best_pair.first, best_pair.second, best->result);
  }
  out.insert(out.end(), symbols.begin(), symbols.end());
}

TokenIds BpeModel::encode(std::string_view text) const {
  TokenIds out;
  for (const auto& word : split_words(normalize_text(text))) encode_word(word, out);
  return out;
}

std::string BpeModel::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    token(id);  // range check
    if (is_special(id)) continue;
    const auto at = static_cast<std::size_t>(id);
    out += surfaces_[at];
    if (ends_word_[at]) out.push_back(' ');
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string BpeModel::serialize() const {
  std::ostringstream out;
  out << kHeaderTag << " v" << kFormatVersion << " specials=" << kNumSpecials
      << " base=" << num_base_ << " merges=" << merges_.size() << " vocab=" << tokens_.size()
      << '\n';
  for (const auto& merge : merges_) out << merge.left << ' ' << merge.right << '\n';
  for (std::size_t id = 0; id < tokens_.size(); ++id) out << tokens_[id] << '\t' << id << '\n';
  return out.str();
}

BpeModel BpeModel::deserialize(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || !lines[0].starts_with(kHeaderTag)) {
    throw BpeFormatError("not a BPE model file (missing header)");
  }
  const std::string_view header = lines[0];
  if (header.find(" v" + std::to_string(kFormatVersion) + " ") == std::string_view::npos) {
    throw BpeFormatError("unsupported BPE model version in header '" + std::string(header) + "'");
  }
  const std::size_t specials = parse_count(header, "specials");
  const std::size_t base = parse_count(header, "base");
  const std::size_t merges = parse_count(header, "merges");
  const std::size_t vocab = parse_count(header, "vocab");
  if (specials != kNumSpecials || base < 1 || vocab != specials + base + merges) {
    throw BpeFormatError("inconsistent BPE header counts");
  }
  if (lines.size() != 1 + merges + vocab) {
    throw BpeFormatError("BPE model file has " + std::to_string(lines.size()) +
                         " lines, header implies " + std::to_string(1 + merges + vocab));
  }

  std::vector<std::string> vocab_tokens;
  for (std::size_t i = 0; i < vocab; ++i) {
    const auto line = lines[1 + merges + i];
    const auto tab = line.rfind('\t');
    if (tab == std::string_view::npos || line.substr(tab + 1) != std::to_string(i)) {
      throw BpeFormatError("vocabulary line " + std::to_string(2 + merges + i) +
                           " must read 'token<TAB>" + std::to_string(i) + "'");
    }
    vocab_tokens.emplace_back(line.substr(0, tab));
  }

  BpeModel model;
  for (std::size_t i = 0; i <= kNumSpecials; ++i) {
    if (vocab_tokens[i] != model.tokens_[i]) {
      throw BpeFormatError("reserved id " + std::to_string(i) + " must be '" + model.tokens_[i] + "'");
    }
  }
  for (std::size_t i = kNumSpecials + 1; i < kNumSpecials + base; ++i) {
    if (utf8_codepoints(vocab_tokens[i]).size() != 1 || model.index_.contains(vocab_tokens[i])) {
      throw BpeFormatError("base symbol '" + vocab_tokens[i] + "' is not a unique single character");
    }
    model.add_token(vocab_tokens[i], vocab_tokens[i], false);
  }
  model.num_base_ = base;
  for (std::size_t r = 0; r < merges; ++r) {
    const auto line = lines[1 + r];
    const auto space = line.find(' ');
    if (space == std::string_view::npos || line.find(' ', space + 1) != std::string_view::npos) {
      throw BpeFormatError("merge line " + std::to_string(2 + r) + " must read 'left right'");
    }
    const TokenId left = model.id_of(line.substr(0, space));
    const TokenId right = model.id_of(line.substr(space + 1));
    if (left < 0 || right < 0) {
      throw BpeFormatError("merge line " + std::to_string(2 + r) + " uses an unknown symbol");
    }
    const std::string merged = model.tokens_[left] + model.tokens_[right];
    if (model.index_.contains(merged) || vocab_tokens[model.tokens_.size()] != merged) {
      throw BpeFormatError("merge line " + std::to_string(2 + r) +
                           " disagrees with the vocabulary");
    }
    model.add_merge(left, right);
  }
  return model;
}

void BpeModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write BPE model to " + path.string());
  const std::string text = serialize();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("failed writing BPE model to " + path.string());
}

BpeModel BpeModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read BPE model from " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize(buffer.str());
}

}  // namespace clqg
