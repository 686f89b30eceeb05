#pragma once

// Corpus BLEU-1..4, ROUGE-L and an exact-match METEOR variant.
// Single reference per hypothesis; tokens are whitespace-split words of
// normalized text.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace clqg {

using Words = std::vector<std::string>;

/// Normalizes and whitespace-splits a line.
Words metric_tokens(std::string_view text);

/// Corpus-level BLEU on a 0..100 scale: geometric mean of clipped n-gram
/// precisions for n = 1..max_n times the brevity penalty exp(1 - r/c) when
/// c < r. Any zero precision yields 0 (no smoothing). Throws
/// std::invalid_argument on an empty corpus, mismatched sizes, or max_n
/// outside 1..4.
double bleu(std::span<const Words> hyps, std::span<const Words> refs, std::size_t max_n = 4);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// Mean per-sentence LCS F-measure with beta = 1.2, on a 0..100 scale.
double rouge_l(std::span<const Words> hyps, std::span<const Words> refs);

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

/// Maximum-cardinality exact unigram alignment with the fewest chunks.
/// The search is exhaustive up to node_budget expansions, after which the
/// best alignment found so far is returned.
MeteorAlignment meteor_align(std::span<const std::string> hyp, std::span<const std::string> ref,
                             std::size_t node_budget = 200000);

/// Fmean * (1 - 0.5 (chunks/matches)^3) with Fmean = 10PR / (R + 9P);
/// zero when nothing matches.
double meteor_sentence(std::span<const std::string> hyp, std::span<const std::string> ref);

/// Mean of meteor_sentence over the corpus, in 0..1.
double meteor_simplified(std::span<const Words> hyps, std::span<const Words> refs);

struct EvalReport {
  double bleu1 = 0, bleu2 = 0, bleu3 = 0, bleu4 = 0;
  double meteor = 0;
  double rouge_l = 0;
  std::size_t sentences = 0;
  std::size_t hyp_tokens = 0;
  std::size_t ref_tokens = 0;

  nlohmann::json to_json() const;
  std::string table() const;
};

EvalReport evaluate_corpus(std::span<const Words> hyps, std::span<const Words> refs);
EvalReport evaluate_texts(std::span<const std::string> hyps, std::span<const std::string> refs);

}  // namespace clqg
