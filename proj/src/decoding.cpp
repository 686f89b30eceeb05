#include "clqg/decoding.hpp"

#include <algorithm>
#include <stdexcept>

#include "clqg/text.hpp"

namespace clqg {
namespace {

struct Active {
  std::size_t index;  // into the caller's batch
  TokenIds prefix;    // BOS + generated so far
};

// Rows of memory belonging to the selected sequences, repacked.
std::pair<Tensor<float>, PackedSequences> select_memory(const Tensor<float>& memory, const PackedSequences& sources,
                                                        std::span<const std::size_t> keep) {
  const std::size_t d = memory.cols();
  std::vector<TokenIds> seqs;
  std::vector<float> rows;
  for (auto s : keep) {
    const auto off = sources.offsets[s], len = sources.lengths[s];
    seqs.emplace_back(sources.ids.begin() + static_cast<std::ptrdiff_t>(off),
                      sources.ids.begin() + static_cast<std::ptrdiff_t>(off + len));
    const auto data = memory.data().subspan(off * d, len * d);
    rows.insert(rows.end(), data.begin(), data.end());
  }
  auto packed = PackedSequences::pack(seqs);
  return {Tensor<float>::from_data({packed.total(), d}, std::move(rows)), std::move(packed)};
}

}  // namespace

std::string_view to_string(Termination t) { return t == Termination::eos ? "eos" : "max_len"; }

double DecodeResult::logprob_sum() const {
  double s = 0.0;
  for (double v : per_step_logprob) s += v;
  return s;
}

std::vector<DecodeResult> greedy_decode_ids(const XModel& model, std::span<const TokenIds> sources, Lang lang_in,
                                            Lang lang_out, std::size_t max_len) {
  if (max_len < 1) throw std::invalid_argument("max_len must be at least 1");
  if (max_len >= model.dims().max_len) {
    throw std::invalid_argument("max_len " + std::to_string(max_len) + " needs " + std::to_string(max_len + 1) +
                                " positions; the model has " + std::to_string(model.dims().max_len));
  }
  std::vector<DecodeResult> results(sources.size());
  if (sources.empty()) return results;
  NoGradGuard no_grad;
  const ForwardOptions eval;
  const auto packed = PackedSequences::pack(sources);
  const Tensor<float> memory_all = model.encode(packed, lang_in, eval);
  const std::size_t vocab = model.dims().vocab_size;

  std::vector<Active> active;
  for (std::size_t i = 0; i < sources.size(); ++i) active.push_back({i, {special::bos}});
  std::vector<std::size_t> keep(sources.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
  auto [memory, mem_seqs] = select_memory(memory_all, packed, keep);

  for (std::size_t step = 0; step < max_len && !active.empty(); ++step) {
    std::vector<TokenIds> prefixes;
    for (const auto& a : active) prefixes.push_back(a.prefix);
    const auto packed_prefixes = PackedSequences::pack(prefixes);
    const Tensor<float> logits = model.decode(memory, mem_seqs, packed_prefixes, lang_out, eval);
    const auto data = logits.data();

    std::vector<Active> still;
    std::vector<std::size_t> still_rows;
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t row = packed_prefixes.offsets[a] + packed_prefixes.lengths[a] - 1;
      const auto logit_row = data.subspan(row * vocab, vocab);
      std::vector<double> wide(logit_row.begin(), logit_row.end());
      const auto logp = log_softmax_row<double>(wide);
      // First maximum wins, so ties go to the lowest id.
      const auto best = static_cast<TokenId>(std::max_element(logit_row.begin(), logit_row.end()) - logit_row.begin());
      auto& r = results[active[a].index];
      r.tokens.push_back(best);
      r.per_step_logprob.push_back(logp[static_cast<std::size_t>(best)]);
      if (best == special::eos) {
        r.terminated = Termination::eos;
        continue;
      }
      active[a].prefix.push_back(best);
      still.push_back(std::move(active[a]));
      still_rows.push_back(a);
    }
    if (still.size() != active.size() && !still.empty()) {
      std::tie(memory, mem_seqs) = select_memory(memory, mem_seqs, still_rows);
    }
    active = std::move(still);
  }
  return results;
}

DecodeResult greedy_decode(const XModel& model, const BpeModel& bpe, std::string_view sentence, Lang lang,
                           std::size_t max_len) {
  const std::string text(sentence);
  auto results = batch_generate(model, bpe, std::span<const std::string>(&text, 1), lang, max_len, 1);
  if (!results[0].ok()) throw std::invalid_argument(results[0].error);
  return std::move(results[0]);
}

std::vector<DecodeResult> batch_generate(const XModel& model, const BpeModel& bpe,
                                         std::span<const std::string> corpus, Lang lang, std::size_t max_len,
                                         std::size_t batch_size) {
  if (corpus.empty()) throw std::invalid_argument("batch_generate needs a nonempty corpus");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  std::vector<DecodeResult> results(corpus.size());
  std::vector<std::size_t> ok_lines;
  std::vector<TokenIds> ok_sources;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    try {
      const auto norm = normalize_text(corpus[i]);
      if (norm.empty()) throw std::invalid_argument("input is empty after normalization");
      auto src = frame_source(bpe.encode(norm), lang);
      if (src.size() > model.dims().max_len) {
        throw std::invalid_argument("input has " + std::to_string(src.size()) +
                                    " framed subwords; the model accepts at most " +
                                    std::to_string(model.dims().max_len));
      }
      ok_lines.push_back(i);
      ok_sources.push_back(std::move(src));
    } catch (const std::invalid_argument& e) {
      results[i].error = e.what();
    }
  }
  for (std::size_t start = 0; start < ok_sources.size(); start += batch_size) {
    const auto n = std::min(batch_size, ok_sources.size() - start);
    auto batch = greedy_decode_ids(model, std::span<const TokenIds>(ok_sources).subspan(start, n), lang, lang, max_len);
    for (std::size_t k = 0; k < n; ++k) {
      auto& r = results[ok_lines[start + k]];
      r = std::move(batch[k]);
      r.text = bpe.decode(r.tokens);
    }
  }
  return results;
}

std::string generation_jsonl(std::span<const std::string> inputs, std::span<const DecodeResult> results) {
  if (inputs.size() != results.size()) throw std::invalid_argument("generation_jsonl: size mismatch");
  std::string out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    nlohmann::json j = {{"input", inputs[i]},
                        {"prediction", results[i].text},
                        {"logprob_sum", results[i].logprob_sum()},
                        {"terminated", to_string(results[i].terminated)}};
    if (!results[i].ok()) j["error"] = results[i].error;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace clqg
