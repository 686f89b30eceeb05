#pragma once

// Corpus files, splitting, and the synthetic toy language pair.
//
// All corpus files are UTF-8, one JSON object per line:
//   mono      {"text": ...}
//   qg        {"sentence": ..., "question": ...}
//   parallel  {"src": <primary>, "tgt": <secondary>}

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "clqg/common.hpp"
#include "clqg/rng.hpp"

namespace clqg {

enum class CorpusKind : std::uint8_t { mono, qg, parallel };

std::string_view to_string(CorpusKind kind);
CorpusKind parse_corpus_kind(std::string_view text);

/// Load failure. bad_lines holds the first (at most five) offending 1-based
/// line numbers; it is empty for I/O errors and empty files.
class CorpusError : public std::runtime_error {
 public:
  CorpusError(const std::string& message, std::vector<std::size_t> bad_lines = {})
      : std::runtime_error(message), bad_lines(std::move(bad_lines)) {}
  std::vector<std::size_t> bad_lines;
};

/// Inclusive word-count bounds applied to every text field on load.
struct LengthBounds {
  std::size_t min_words = 1;
  std::size_t max_words = 1000;
};

struct MonoCorpus {
  std::vector<std::string> lines;
  std::size_t size() const { return lines.size(); }
};

struct QGPair {
  std::string sentence;
  std::string question;
  bool operator==(const QGPair&) const = default;
  auto operator<=>(const QGPair&) const = default;
};

struct QGCorpus {
  std::vector<QGPair> pairs;
  std::size_t size() const { return pairs.size(); }
};

struct ParallelPair {
  std::string pri;
  std::string sec;
  bool operator==(const ParallelPair&) const = default;
  auto operator<=>(const ParallelPair&) const = default;
};

struct ParallelCorpus {
  std::vector<ParallelPair> pairs;
  std::size_t size() const { return pairs.size(); }
};

MonoCorpus load_mono(const std::filesystem::path& path, LengthBounds bounds = {});
QGCorpus load_qg(const std::filesystem::path& path, LengthBounds bounds = {});
ParallelCorpus load_parallel(const std::filesystem::path& path, LengthBounds bounds = {});

MonoCorpus parse_mono(std::string_view bytes, LengthBounds bounds = {});
QGCorpus parse_qg(std::string_view bytes, LengthBounds bounds = {});
ParallelCorpus parse_parallel(std::string_view bytes, LengthBounds bounds = {});

std::string serialize(const MonoCorpus& corpus);
std::string serialize(const QGCorpus& corpus);
std::string serialize(const ParallelCorpus& corpus);

void save_corpus(const std::filesystem::path& path, const MonoCorpus& corpus);
void save_corpus(const std::filesystem::path& path, const QGCorpus& corpus);
void save_corpus(const std::filesystem::path& path, const ParallelCorpus& corpus);

/// Line-by-line schema check that never holds the whole file in memory.
struct ValidationReport {
  CorpusKind kind = CorpusKind::mono;
  std::size_t lines = 0;
  std::size_t valid = 0;
  std::vector<std::size_t> bad_lines;  // first five
  std::vector<std::string> problems;   // one per entry of bad_lines
  bool ok() const { return lines > 0 && valid == lines; }
};

ValidationReport validate_corpus_file(const std::filesystem::path& path, CorpusKind kind,
                                      LengthBounds bounds = {});

template <typename T>
struct Splits {
  std::vector<T> train;
  std::vector<T> dev;
  std::vector<T> test;
};

/// Sizes of a three-way split of n items: the first two are rounded to the
/// nearest integer, the test split takes the remainder.
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions);

/// Seeded shuffle followed by a cut at split_sizes(). Throws
/// std::invalid_argument when the fractions do not sum to 1 (within 1e-9)
/// or a split would be empty.
template <typename T>
Splits<T> split_corpus(const std::vector<T>& items, const std::array<double, 3>& fractions,
                       std::uint64_t seed) {
  const auto sizes = split_sizes(items.size(), fractions);
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  Splits<T> out;
  std::size_t at = 0;
  for (std::size_t i = 0; i < sizes[0]; ++i) out.train.push_back(items[order[at++]]);
  for (std::size_t i = 0; i < sizes[1]; ++i) out.dev.push_back(items[order[at++]]);
  for (std::size_t i = 0; i < sizes[2]; ++i) out.test.push_back(items[order[at++]]);
  return out;
}

// ---------------------------------------------------------------------------
// Toy languages
//
// The secondary language draws Latin-script words; the primary language is a
// word-for-word relabeling into Devanagari-script words with the word order
// reversed. A question is the first K content words of the sentence (function
// words skipped) inside a per-language interrogative template:
//   secondary: "what is w1 .. wK ?"    primary: "w1 .. wK क्या है ?"

enum class ToyRelation : std::uint8_t {
  relabel_reverse,  // distinct scripts, reversed order
  copy,             // both languages identical
};

struct ToyConfig {
  std::size_t n_pairs = 1000;     // size of every generated corpus unless overridden below
  std::size_t vocab_size = 64;    // content words per language
  std::uint64_t seed = 1;
  std::size_t min_words = 4;
  std::size_t max_words = 9;
  std::size_t function_words = 4;
  double function_rate = 0.2;     // chance a slot holds a function word
  double zipf_exponent = 1.0;
  std::size_t question_words = 3;  // K
  ToyRelation relation = ToyRelation::relabel_reverse;
  // Overrides; zero means n_pairs.
  std::size_t n_mono = 0;
  std::size_t n_parallel = 0;
  std::size_t n_qg_pri = 0;
  std::size_t n_qg_sec = 0;
};

/// The ground-truth relation between the two toy languages.
class ToyLexicon {
 public:
  ToyLexicon() = default;
  ToyLexicon(std::vector<std::string> sec_words, std::vector<std::string> pri_words,
             std::size_t function_words, ToyRelation relation);

  const std::vector<std::string>& sec_words() const { return sec_; }
  const std::vector<std::string>& pri_words() const { return pri_; }
  std::size_t function_words() const { return function_words_; }
  ToyRelation relation() const { return relation_; }

  bool is_function_word(std::string_view word, Lang lang) const;
  std::string translate(std::string_view sentence, Lang from) const;
  std::string question(std::string_view sentence, Lang lang, std::size_t k) const;

 private:
  std::vector<std::string> sec_;
  std::vector<std::string> pri_;
  std::size_t function_words_ = 0;
  ToyRelation relation_ = ToyRelation::relabel_reverse;
  std::map<std::string, std::size_t, std::less<>> sec_index_;
  std::map<std::string, std::size_t, std::less<>> pri_index_;
};

struct ToyCorpora {
  MonoCorpus mono_pri;
  MonoCorpus mono_sec;
  ParallelCorpus parallel;
  QGCorpus qg_pri;
  QGCorpus qg_sec;
  ToyLexicon lexicon;
};

/// Pure function of the config. Throws std::invalid_argument when
/// vocab_size < 8 or the length bounds are inconsistent.
ToyCorpora gen_toy_languages(const ToyConfig& config);

/// Random secondary-language sentence of the configured shape.
std::string toy_sentence(const ToyConfig& config, const ToyLexicon& lexicon, Rng& rng);

}  // namespace clqg
