#include "clqg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "clqg/text.hpp"

namespace clqg {
namespace {

void require_corpus(std::span<const Words> hyps, std::span<const Words> refs) {
  if (hyps.empty()) throw std::invalid_argument("metrics need a nonempty corpus");
  if (hyps.size() != refs.size()) {
    throw std::invalid_argument("metrics need one reference per hypothesis (" + std::to_string(hyps.size()) +
                                " hypotheses, " + std::to_string(refs.size()) + " references)");
  }
}

using NgramCounts = std::map<std::span<const std::string>, std::size_t,
                             decltype([](std::span<const std::string> a, std::span<const std::string> b) {
                               return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
                             })>;

NgramCounts count_ngrams(const Words& words, std::size_t n) {
  NgramCounts counts;
  if (words.size() < n) return counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) ++counts[std::span<const std::string>(words).subspan(i, n)];
  return counts;
}

struct Search {
  std::span<const std::string> hyp;
  std::span<const std::string> ref;
  std::vector<int> word_of_hyp, word_of_ref;  // interned ids
  std::vector<int> hyp_left;                  // per word, unprocessed hyp tokens
  std::vector<int> ref_free;                  // per word, unused ref tokens
  std::vector<char> used;
  std::size_t target = 0;
  std::size_t best = 0;
  std::size_t budget = 0;
  std::size_t nodes = 0;

  std::size_t achievable() const {
    std::size_t n = 0;
    for (std::size_t w = 0; w < hyp_left.size(); ++w) n += static_cast<std::size_t>(std::min(hyp_left[w], ref_free[w]));
    return n;
  }

  void run(std::size_t i, std::ptrdiff_t prev, std::size_t matches, std::size_t chunks) {
    if (chunks >= best || nodes >= budget) return;
    ++nodes;
    if (i == hyp.size()) {
      if (matches == target) best = chunks;
      return;
    }
    const int w = word_of_hyp[i];
    --hyp_left[w];
    // Continuing the current chunk first finds good alignments early.
    const auto next = prev + 1;
    if (prev >= 0 && static_cast<std::size_t>(next) < ref.size() && !used[next] && word_of_ref[next] == w) {
      take(i, next, matches, chunks);
    }
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (static_cast<std::ptrdiff_t>(j) == next && prev >= 0) continue;
      if (!used[j] && word_of_ref[j] == w) take(i, static_cast<std::ptrdiff_t>(j), matches, chunks + 1);
    }
    if (matches + achievable() >= target) run(i + 1, -1, matches, chunks);
    ++hyp_left[w];
  }

  void take(std::size_t i, std::ptrdiff_t j, std::size_t matches, std::size_t chunks) {
    const int w = word_of_hyp[i];
    used[j] = 1;
    --ref_free[w];
    run(i + 1, j, matches + 1, chunks);
    ++ref_free[w];
    used[j] = 0;
  }
};

}  // namespace

Words metric_tokens(std::string_view text) { return split_words(normalize_text(text)); }

double bleu(std::span<const Words> hyps, std::span<const Words> refs, std::size_t max_n) {
  require_corpus(hyps, refs);
  if (max_n < 1 || max_n > 4) throw std::invalid_argument("BLEU order must be within 1..4");
  std::size_t hyp_len = 0, ref_len = 0;
  std::vector<std::size_t> matched(max_n, 0), total(max_n, 0);
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    hyp_len += hyps[s].size();
    ref_len += refs[s].size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto h = count_ngrams(hyps[s], n);
      const auto r = count_ngrams(refs[s], n);
      for (const auto& [gram, count] : h) {
        total[n - 1] += count;
        auto it = r.find(gram);
        if (it != r.end()) matched[n - 1] += std::min(count, it->second);
      }
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    if (matched[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
  }
  const double c = static_cast<double>(hyp_len), r = static_cast<double>(ref_len);
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * bp * std::exp(log_sum / static_cast<double>(max_n));
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> row(b.size() + 1, 0), prev(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      row[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], row[j - 1]);
    }
    std::swap(row, prev);
  }
  return prev[b.size()];
}

double rouge_l(std::span<const Words> hyps, std::span<const Words> refs) {
  require_corpus(hyps, refs);
  constexpr double kBeta2 = 1.2 * 1.2;
  double total = 0.0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const auto lcs = lcs_length(hyps[s], refs[s]);
    if (lcs == 0) continue;
    const double p = static_cast<double>(lcs) / static_cast<double>(hyps[s].size());
    const double r = static_cast<double>(lcs) / static_cast<double>(refs[s].size());
    total += (1.0 + kBeta2) * p * r / (r + kBeta2 * p);
  }
  return 100.0 * total / static_cast<double>(hyps.size());
}

MeteorAlignment meteor_align(std::span<const std::string> hyp, std::span<const std::string> ref,
                             std::size_t node_budget) {
  Search s;
  s.hyp = hyp;
  s.ref = ref;
  std::map<std::string_view, int> ids;
  auto intern = [&](const std::string& w) { return ids.try_emplace(w, static_cast<int>(ids.size())).first->second; };
  for (const auto& w : hyp) s.word_of_hyp.push_back(intern(w));
  for (const auto& w : ref) s.word_of_ref.push_back(intern(w));
  s.hyp_left.assign(ids.size(), 0);
  s.ref_free.assign(ids.size(), 0);
  for (int w : s.word_of_hyp) ++s.hyp_left[w];
  for (int w : s.word_of_ref) ++s.ref_free[w];
  s.target = s.achievable();
  if (s.target == 0) return {};
  s.used.assign(ref.size(), 0);
  s.best = s.target + 1;
  s.budget = node_budget;
  s.run(0, -1, 0, 0);
  if (s.best > s.target) {
    // Budget ran out before any complete alignment; each match its own chunk.
    s.best = s.target;
  }
  return {s.target, s.best};
}

double meteor_sentence(std::span<const std::string> hyp, std::span<const std::string> ref) {
  const auto a = meteor_align(hyp, ref);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(hyp.size());
  const double r = m / static_cast<double>(ref.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(a.chunks) / m;
  return fmean * (1.0 - 0.5 * frag * frag * frag);
}

double meteor_simplified(std::span<const Words> hyps, std::span<const Words> refs) {
  require_corpus(hyps, refs);
  double total = 0.0;
  for (std::size_t s = 0; s < hyps.size(); ++s) total += meteor_sentence(hyps[s], refs[s]);
  return total / static_cast<double>(hyps.size());
}

nlohmann::json EvalReport::to_json() const {
  return {{"bleu1", bleu1},         {"bleu2", bleu2},         {"bleu3", bleu3},
          {"bleu4", bleu4},         {"meteor", meteor},       {"rouge_l", rouge_l},
          {"sentences", sentences}, {"hyp_tokens", hyp_tokens}, {"ref_tokens", ref_tokens}};
}

std::string EvalReport::table() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%-10s %8s\n%-10s %8.3f\n%-10s %8.3f\n%-10s %8.3f\n%-10s %8.3f\n%-10s %8.4f\n%-10s %8.3f\n"
                "%-10s %8zu\n%-10s %8zu\n%-10s %8zu\n",
                "metric", "score", "BLEU-1", bleu1, "BLEU-2", bleu2, "BLEU-3", bleu3, "BLEU-4", bleu4, "METEOR",
                meteor, "ROUGE-L", rouge_l, "sentences", sentences, "hyp_tok", hyp_tokens, "ref_tok", ref_tokens);
  return buf;
}

EvalReport evaluate_corpus(std::span<const Words> hyps, std::span<const Words> refs) {
  require_corpus(hyps, refs);
  EvalReport r;
  r.bleu1 = bleu(hyps, refs, 1);
  r.bleu2 = bleu(hyps, refs, 2);
  r.bleu3 = bleu(hyps, refs, 3);
  r.bleu4 = bleu(hyps, refs, 4);
  r.meteor = meteor_simplified(hyps, refs);
  r.rouge_l = rouge_l(hyps, refs);
  r.sentences = hyps.size();
  for (const auto& h : hyps) r.hyp_tokens += h.size();
  for (const auto& t : refs) r.ref_tokens += t.size();
  return r;
}

EvalReport evaluate_texts(std::span<const std::string> hyps, std::span<const std::string> refs) {
  std::vector<Words> h, r;
  for (const auto& s : hyps) h.push_back(metric_tokens(s));
  for (const auto& s : refs) r.push_back(metric_tokens(s));
  return evaluate_corpus(h, r);
}

}  // namespace clqg
