#pragma once

// Greedy factorized decoding: at each step the most probable next subword
// given the source and everything generated so far, ties to the lowest id.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "clqg/bpe.hpp"
#include "clqg/common.hpp"
#include "clqg/xmodel.hpp"

namespace clqg {

inline constexpr std::size_t kDefaultMaxDecodeLen = 50;

enum class Termination : std::uint8_t { eos, max_len };

std::string_view to_string(Termination t);

struct DecodeResult {
  /// Generated ids without BOS; ends with EOS when terminated == eos.
  TokenIds tokens;
  /// Rendering of tokens with specials dropped.
  std::string text;
  /// log P(token_t | source, tokens_<t) for every entry of tokens.
  std::vector<double> per_step_logprob;
  Termination terminated = Termination::max_len;
  /// Nonempty when this input could not be decoded.
  std::string error;

  double logprob_sum() const;
  bool ok() const { return error.empty(); }
};

/// Decodes a batch of framed sources (<lang_in> ... </s>) into lang_out.
/// Every result equals decoding that source alone. max_len >= 1 and
/// max_len < dims().max_len (the BOS occupies one position).
std::vector<DecodeResult> greedy_decode_ids(const XModel& model, std::span<const TokenIds> sources, Lang lang_in,
                                            Lang lang_out, std::size_t max_len);

/// Normalizes and BPE-encodes the sentence, then decodes within one
/// language. Throws std::invalid_argument on empty normalized input or
/// out-of-range lengths.
DecodeResult greedy_decode(const XModel& model, const BpeModel& bpe, std::string_view sentence, Lang lang,
                           std::size_t max_len = kDefaultMaxDecodeLen);

/// Order-preserving batched greedy_decode. Lines that cannot be decoded get
/// a result with error set instead of aborting the batch. Throws
/// std::invalid_argument when the corpus is empty.
std::vector<DecodeResult> batch_generate(const XModel& model, const BpeModel& bpe,
                                         std::span<const std::string> corpus, Lang lang,
                                         std::size_t max_len = kDefaultMaxDecodeLen, std::size_t batch_size = 32);

/// One {input, prediction, logprob_sum, terminated} object per line.
std::string generation_jsonl(std::span<const std::string> inputs, std::span<const DecodeResult> results);

}  // namespace clqg
