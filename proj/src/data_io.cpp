#include "clqg/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "clqg/hashing.hpp"
#include "clqg/text.hpp"

namespace clqg {
namespace {

constexpr std::size_t kMaxReported = 5;

std::vector<std::string_view> fields_of(CorpusKind kind) {
  switch (kind) {
    case CorpusKind::mono:
      return {"text"};
    case CorpusKind::qg:
      return {"sentence", "question"};
    case CorpusKind::parallel:
      return {"src", "tgt"};
  }
  return {};
}

// Parses and normalizes one line; returns an empty problem string on success.
std::string parse_line(std::string_view line, CorpusKind kind, LengthBounds bounds,
                       std::vector<std::string>& values) {
  values.clear();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    return "not valid JSON";
  }
  if (!j.is_object()) return "not a JSON object";
  for (auto field : fields_of(kind)) {
    auto it = j.find(std::string(field));
    if (it == j.end()) return "missing field '" + std::string(field) + "'";
    if (!it->is_string()) return "field '" + std::string(field) + "' is not a string";
    std::string text;
    try {
      text = normalize_text(it->get<std::string>());
    } catch (const std::invalid_argument&) {
      return "field '" + std::string(field) + "' is not valid UTF-8";
    }
    if (text.empty()) return "field '" + std::string(field) + "' is empty";
    const auto words = split_words(text).size();
    if (words < bounds.min_words || words > bounds.max_words) {
      return "field '" + std::string(field) + "' has " + std::to_string(words) + " words, outside [" +
             std::to_string(bounds.min_words) + ", " + std::to_string(bounds.max_words) + "]";
    }
    values.push_back(std::move(text));
  }
  return {};
}

template <typename Emit>
void parse_lines(std::string_view bytes, CorpusKind kind, LengthBounds bounds, Emit emit) {
  std::vector<std::size_t> bad;
  std::string first_problem;
  std::vector<std::string> values;
  std::size_t lineno = 0;
  std::size_t start = 0;
  std::size_t records = 0;
  while (start < bytes.size()) {
    auto end = bytes.find('\n', start);
    if (end == std::string_view::npos) end = bytes.size();
    const auto line = bytes.substr(start, end - start);
    start = end + 1;
    ++lineno;
    ++records;
    auto problem = parse_line(line, kind, bounds, values);
    if (!problem.empty()) {
      if (bad.size() < kMaxReported) bad.push_back(lineno);
      if (first_problem.empty()) first_problem = problem;
      continue;
    }
    emit(values);
  }
  if (records == 0) throw CorpusError(std::string(to_string(kind)) + " corpus is empty");
  if (!bad.empty()) {
    std::string list;
    for (auto n : bad) list += (list.empty() ? "" : ", ") + std::to_string(n);
    throw CorpusError("malformed " + std::string(to_string(kind)) + " corpus lines: " + list +
                          " (first problem: " + first_problem + ")",
                      bad);
  }
}

std::string read_corpus_file(const std::filesystem::path& path) {
  try {
    return read_file(path);
  } catch (const std::runtime_error& e) {
    throw CorpusError(e.what());
  }
}

template <typename Corpus>
Corpus with_context(const std::filesystem::path& path, Corpus (*parse)(std::string_view, LengthBounds),
                    LengthBounds bounds) {
  const auto bytes = read_corpus_file(path);
  try {
    return parse(bytes, bounds);
  } catch (const CorpusError& e) {
    throw CorpusError(path.string() + ": " + e.what(), e.bad_lines);
  }
}

std::string dump_line(const nlohmann::json& j) { return j.dump() + "\n"; }

}  // namespace

std::string_view to_string(CorpusKind kind) {
  switch (kind) {
    case CorpusKind::mono:
      return "mono";
    case CorpusKind::qg:
      return "qg";
    case CorpusKind::parallel:
      return "parallel";
  }
  return "?";
}

CorpusKind parse_corpus_kind(std::string_view text) {
  if (text == "mono") return CorpusKind::mono;
  if (text == "qg") return CorpusKind::qg;
  if (text == "parallel") return CorpusKind::parallel;
  throw std::invalid_argument("unknown corpus kind '" + std::string(text) +
                              "' (expected mono, qg or parallel)");
}

MonoCorpus parse_mono(std::string_view bytes, LengthBounds bounds) {
  MonoCorpus corpus;
  parse_lines(bytes, CorpusKind::mono, bounds,
              [&](std::vector<std::string>& v) { corpus.lines.push_back(std::move(v[0])); });
  return corpus;
}

QGCorpus parse_qg(std::string_view bytes, LengthBounds bounds) {
  QGCorpus corpus;
  parse_lines(bytes, CorpusKind::qg, bounds, [&](std::vector<std::string>& v) {
    corpus.pairs.push_back({std::move(v[0]), std::move(v[1])});
  });
  return corpus;
}

ParallelCorpus parse_parallel(std::string_view bytes, LengthBounds bounds) {
  ParallelCorpus corpus;
  parse_lines(bytes, CorpusKind::parallel, bounds, [&](std::vector<std::string>& v) {
    corpus.pairs.push_back({std::move(v[0]), std::move(v[1])});
  });
  return corpus;
}

MonoCorpus load_mono(const std::filesystem::path& path, LengthBounds bounds) {
  return with_context(path, &parse_mono, bounds);
}

QGCorpus load_qg(const std::filesystem::path& path, LengthBounds bounds) {
  return with_context(path, &parse_qg, bounds);
}

ParallelCorpus load_parallel(const std::filesystem::path& path, LengthBounds bounds) {
  return with_context(path, &parse_parallel, bounds);
}

std::string serialize(const MonoCorpus& corpus) {
  std::string out;
  for (const auto& line : corpus.lines) out += dump_line({{"text", line}});
  return out;
}

std::string serialize(const QGCorpus& corpus) {
  std::string out;
  for (const auto& p : corpus.pairs) out += dump_line({{"sentence", p.sentence}, {"question", p.question}});
  return out;
}

std::string serialize(const ParallelCorpus& corpus) {
  std::string out;
  for (const auto& p : corpus.pairs) out += dump_line({{"src", p.pri}, {"tgt", p.sec}});
  return out;
}

void save_corpus(const std::filesystem::path& path, const MonoCorpus& corpus) {
  write_file(path, serialize(corpus));
}
void save_corpus(const std::filesystem::path& path, const QGCorpus& corpus) {
  write_file(path, serialize(corpus));
}
void save_corpus(const std::filesystem::path& path, const ParallelCorpus& corpus) {
  write_file(path, serialize(corpus));
}

ValidationReport validate_corpus_file(const std::filesystem::path& path, CorpusKind kind,
                                      LengthBounds bounds) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path.string());
  ValidationReport report;
  report.kind = kind;
  std::string line;
  std::vector<std::string> values;
  while (std::getline(in, line)) {
    ++report.lines;
    auto problem = parse_line(line, kind, bounds, values);
    if (problem.empty()) {
      ++report.valid;
    } else if (report.bad_lines.size() < kMaxReported) {
      report.bad_lines.push_back(report.lines);
      report.problems.push_back(std::move(problem));
    }
  }
  return report;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw std::invalid_argument("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions sum to " + std::to_string(total) + ", expected 1");
  }
  std::array<std::size_t, 3> sizes{};
  std::size_t used = 0;
  for (std::size_t i = 0; i < 2; ++i) {
    sizes[i] = std::min(n - used, static_cast<std::size_t>(std::llround(fractions[i] * static_cast<double>(n))));
    used += sizes[i];
  }
  sizes[2] = n - used;
  for (auto s : sizes) {
    if (s == 0) throw std::invalid_argument("split of " + std::to_string(n) + " items leaves a split empty");
  }
  return sizes;
}

// ---------------------------------------------------------------------------
// Toy languages

namespace {

const std::string kSecWhat = "what";
const std::string kSecIs = "is";
const std::string kPriWhat = "क्या";
const std::string kPriIs = "है";
const std::string kQuestionMark = "?";

std::string latin_word(Rng& rng) {
  static constexpr std::string_view kLetters = "abcdefghijklmnopqrstuvwxyz";
  const auto len = 2 + rng.below(4);
  std::string w;
  for (std::size_t i = 0; i < len; ++i) w.push_back(kLetters[rng.below(kLetters.size())]);
  return w;
}

void append_utf8(std::string& out, char32_t cp) {
  // Devanagari code points are all three-byte sequences.
  out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
  out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
  out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
}

std::string devanagari_word(Rng& rng) {
  static const std::vector<char32_t> kConsonants = [] {
    std::vector<char32_t> c;
    for (char32_t cp = 0x0915; cp <= 0x0939; ++cp) {
      if (cp != 0x0929 && cp != 0x0931 && cp != 0x0934) c.push_back(cp);
    }
    return c;
  }();
  static const std::vector<char32_t> kSigns = {0x093E, 0x093F, 0x0940, 0x0941, 0x0942,
                                               0x0947, 0x0948, 0x094B, 0x094C};
  const auto syllables = 1 + rng.below(3);
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) {
    append_utf8(w, kConsonants[rng.below(kConsonants.size())]);
    if (rng.below(2) == 0) append_utf8(w, kSigns[rng.below(kSigns.size())]);
  }
  return w;
}

template <typename Make>
std::vector<std::string> distinct_words(std::size_t n, Rng& rng, Make make,
                                        const std::set<std::string>& reserved) {
  std::set<std::string> seen = reserved;
  std::vector<std::string> out;
  while (out.size() < n) {
    auto w = make(rng);
    if (seen.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

// Cumulative Zipf weights over ranks 1..n.
std::vector<double> zipf_cdf(std::size_t n, double exponent) {
  std::vector<double> cdf(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += 1.0 / std::pow(static_cast<double>(i + 1), exponent);
    cdf[i] = acc;
  }
  for (auto& c : cdf) c /= acc;
  return cdf;
}

std::size_t draw(const std::vector<double>& cdf, Rng& rng) {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

}  // namespace

ToyLexicon::ToyLexicon(std::vector<std::string> sec_words, std::vector<std::string> pri_words,
                       std::size_t function_words, ToyRelation relation)
    : sec_(std::move(sec_words)), pri_(std::move(pri_words)), function_words_(function_words), relation_(relation) {
  if (sec_.size() != pri_.size()) throw std::invalid_argument("toy lexicon sides differ in size");
  for (std::size_t i = 0; i < sec_.size(); ++i) {
    sec_index_.emplace(sec_[i], i);
    pri_index_.emplace(pri_[i], i);
  }
}

bool ToyLexicon::is_function_word(std::string_view word, Lang lang) const {
  const auto& index = lang == Lang::sec ? sec_index_ : pri_index_;
  auto it = index.find(word);
  return it != index.end() && it->second < function_words_;
}

std::string ToyLexicon::translate(std::string_view sentence, Lang from) const {
  auto words = split_words(sentence);
  const auto& index = from == Lang::sec ? sec_index_ : pri_index_;
  const auto& target = from == Lang::sec ? pri_ : sec_;
  for (auto& w : words) {
    auto it = index.find(w);
    if (it == index.end()) throw std::invalid_argument("word '" + w + "' is not in the toy lexicon");
    w = target[it->second];
  }
  if (relation_ == ToyRelation::relabel_reverse) std::reverse(words.begin(), words.end());
  return join_words(words);
}

std::string ToyLexicon::question(std::string_view sentence, Lang lang, std::size_t k) const {
  std::vector<std::string> content;
  for (auto& w : split_words(sentence)) {
    if (content.size() == k) break;
    if (!is_function_word(w, lang)) content.push_back(std::move(w));
  }
  std::vector<std::string> q;
  if (lang == Lang::pri && relation_ == ToyRelation::relabel_reverse) {
    q = content;
    q.push_back(kPriWhat);
    q.push_back(kPriIs);
  } else {
    q = {kSecWhat, kSecIs};
    q.insert(q.end(), content.begin(), content.end());
  }
  q.push_back(kQuestionMark);
  return join_words(q);
}

std::string toy_sentence(const ToyConfig& config, const ToyLexicon& lexicon, Rng& rng) {
  const auto cdf = zipf_cdf(config.vocab_size, config.zipf_exponent);
  const auto& words = lexicon.sec_words();
  const auto n = config.min_words + rng.below(config.max_words - config.min_words + 1);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (config.function_words > 0 && rng.uniform() < config.function_rate) {
      out.push_back(words[rng.below(config.function_words)]);
    } else {
      out.push_back(words[config.function_words + draw(cdf, rng)]);
    }
  }
  return join_words(out);
}

ToyCorpora gen_toy_languages(const ToyConfig& config) {
  if (config.vocab_size < 8) throw std::invalid_argument("toy vocab_size must be at least 8");
  if (config.min_words < 1 || config.min_words > config.max_words) {
    throw std::invalid_argument("toy sentence length bounds are inconsistent");
  }
  Rng lex_rng(derive_seed(config.seed, "toy.lexicon"));
  const std::size_t n_words = config.function_words + config.vocab_size;
  auto sec = distinct_words(n_words, lex_rng, latin_word, {kSecWhat, kSecIs, kQuestionMark});
  auto pri = config.relation == ToyRelation::copy
                 ? sec
                 : distinct_words(n_words, lex_rng, devanagari_word, {kPriWhat, kPriIs, kQuestionMark});
  ToyCorpora out;
  out.lexicon = ToyLexicon(std::move(sec), std::move(pri), config.function_words, config.relation);
  const auto& lex = out.lexicon;
  auto count = [&](std::size_t n) { return n == 0 ? config.n_pairs : n; };

  Rng rng(derive_seed(config.seed, "toy.mono.sec"));
  for (std::size_t i = 0; i < count(config.n_mono); ++i) out.mono_sec.lines.push_back(toy_sentence(config, lex, rng));
  rng = Rng(derive_seed(config.seed, "toy.mono.pri"));
  for (std::size_t i = 0; i < count(config.n_mono); ++i) {
    out.mono_pri.lines.push_back(lex.translate(toy_sentence(config, lex, rng), Lang::sec));
  }
  rng = Rng(derive_seed(config.seed, "toy.parallel"));
  for (std::size_t i = 0; i < count(config.n_parallel); ++i) {
    auto s = toy_sentence(config, lex, rng);
    out.parallel.pairs.push_back({lex.translate(s, Lang::sec), s});
  }
  rng = Rng(derive_seed(config.seed, "toy.qg.pri"));
  for (std::size_t i = 0; i < count(config.n_qg_pri); ++i) {
    auto s = lex.translate(toy_sentence(config, lex, rng), Lang::sec);
    auto q = lex.question(s, Lang::pri, config.question_words);
    out.qg_pri.pairs.push_back({std::move(s), std::move(q)});
  }
  rng = Rng(derive_seed(config.seed, "toy.qg.sec"));
  for (std::size_t i = 0; i < count(config.n_qg_sec); ++i) {
    auto s = toy_sentence(config, lex, rng);
    auto q = lex.question(s, Lang::sec, config.question_words);
    out.qg_sec.pairs.push_back({std::move(s), std::move(q)});
  }
  return out;
}

}  // namespace clqg
