// Acceptance run: one PASS/FAIL line per criterion, thresholds pinned below.
//
//   acceptance [--only 2,3,...] [--seeds N] [--report FILE]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "clqg/bpe.hpp"
#include "clqg/data_io.hpp"
#include "clqg/decoding.hpp"
#include "clqg/hashing.hpp"
#include "clqg/metrics.hpp"
#include "clqg/pipeline.hpp"
#include "clqg/text.hpp"
#include "clqg/training.hpp"
#include "clqg/transformer.hpp"
#include "clqg/xmodel.hpp"
#include "metric_oracles.hpp"
#include "support.hpp"

using namespace clqg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---- pinned thresholds ------------------------------------------------------
constexpr double kGradTol = 1e-5;
constexpr double kGradStep = 1e-4;
constexpr int kGradInstances = 20;
constexpr double kGradSeconds = 60.0;
constexpr std::size_t kMaskMaxN = 16;
constexpr std::size_t kPePositions = 512;
constexpr std::size_t kPeDim = 300;
constexpr double kPeTol = 1e-6;
constexpr int kMixedSteps = 100;
constexpr std::size_t kBpeLines = 10000;
constexpr int kMetricCorpora = 100;
constexpr double kMetricTol = 1e-9;
constexpr std::size_t kMemoPairs = 32;
constexpr std::size_t kMemoMaxSteps = 2000;
constexpr double kMemoLr = 1e-3;
constexpr double kMemoLoss = 0.1;
constexpr std::size_t kMemoExact = 30;
constexpr std::size_t kAblationPairs = 500;
constexpr double kAblationMargin = 5.0;
constexpr double kSuiteHours = 2.0;
constexpr double kSecondaryMaxDrop = 1.0;
const std::vector<std::size_t> kSweep{125, 250, 500, 1000};

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream out;
  out.precision(precision);
  out << std::fixed << v;
  return out.str();
}

std::string sci(double v) {
  std::ostringstream out;
  out.precision(2);
  out << std::scientific << v;
  return out.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i], 2);
  return s + "]";
}

std::string canonical(const std::string& text) { return join_words(split_words(normalize_text(text))); }

// ---- 2 ----------------------------------------------------------------------

Tensor<double> away_from_zero(Shape shape, Rng& rng) {
  auto t = test::random_tensor(std::move(shape), rng);
  for (auto& v : t.data()) v = v < 0 ? v - 0.05 : v + 0.05;
  return t;
}

Outcome gradients() {
  using test::gradient_check;
  using test::random_tensor;
  using test::weighted_sum;
  const auto t0 = std::chrono::steady_clock::now();
  std::map<std::string, double> worst;
  std::map<std::string, int> count;
  auto record = [&](const std::string& op, double err) {
    worst[op] = std::max(worst[op], err);
    ++count[op];
  };
  Rng rng(2);
  const MaskKind kinds[] = {MaskKind::none, MaskKind::forward, MaskKind::backward, MaskKind::causal};
  for (int trial = 0; trial < kGradInstances; ++trial) {
    const std::size_t r = 1 + rng.below(4), c = 1 + rng.below(5), k = 1 + rng.below(4);
    auto a = random_tensor({r, c}, rng);
    auto b = random_tensor({r, c}, rng);
    auto w = random_tensor({r, c}, rng, -1, 1, false);
    auto bias = random_tensor({c}, rng);
    const double factor = rng.uniform(-2, 2);
    record("add", gradient_check([&] { return weighted_sum(add(a, b), w); }, {a, b}, kGradStep));
    record("mul", gradient_check([&] { return weighted_sum(mul(a, b), w); }, {a, b}, kGradStep));
    record("scale", gradient_check([&] { return weighted_sum(scale(a, factor), w); }, {a}, kGradStep));
    record("add_bias", gradient_check([&] { return weighted_sum(add_bias(a, bias), w); }, {a, bias}, kGradStep));
    auto z = away_from_zero({r, c}, rng);
    record("relu", gradient_check([&] { return weighted_sum(relu(z), w); }, {z}, kGradStep));
    record("sum", gradient_check([&] { return mul(sum(a), sum(b)); }, {a, b}, kGradStep));
    record("mean", gradient_check([&] { return mul(mean(a), mean(b)); }, {a, b}, kGradStep));
    const std::uint64_t mask_seed = rng.next_u64();
    record("dropout", gradient_check(
                          [&] {
                            Rng fixed(mask_seed);
                            return weighted_sum(dropout(a, 0.3, true, fixed), w);
                          },
                          {a}, kGradStep));
    auto table = random_tensor({6, c}, rng, -1, 1, false);
    std::vector<std::size_t> rows(r);
    for (auto& row : rows) row = rng.below(6);
    record("add_rows", gradient_check([&] { return weighted_sum(add_rows(a, table, rows), w); }, {a}, kGradStep));

    auto m1 = random_tensor({r, k}, rng);
    auto m2 = random_tensor({k, c}, rng);
    record("matmul", gradient_check([&] { return weighted_sum(matmul(m1, m2), w); }, {m1, m2}, kGradStep));
    auto x = random_tensor({r, c + 1}, rng, -3, 3);
    auto wx = random_tensor({r, c + 1}, rng, -1, 1, false);
    record("softmax", gradient_check([&] { return weighted_sum(softmax(x, 1), wx); }, {x}, kGradStep));
    record("softmax", gradient_check([&] { return weighted_sum(softmax(x, 0), wx); }, {x}, kGradStep));
    const std::size_t d = 2 + rng.below(5);
    auto y = random_tensor({r, d}, rng, -2, 2);
    auto gain = random_tensor({d}, rng, 0.5, 1.5);
    auto shift = random_tensor({d}, rng);
    auto wy = random_tensor({r, d}, rng, -1, 1, false);
    record("layer_norm",
           gradient_check([&] { return weighted_sum(layer_norm(y, gain, shift), wy); }, {y, gain, shift}, kGradStep));

    const std::size_t vocab = 3 + rng.below(5), n = 1 + rng.below(5);
    auto emb = random_tensor({vocab, d}, rng);
    TokenIds ids(n);
    for (auto& id : ids) id = static_cast<TokenId>(rng.below(vocab));
    auto we = random_tensor({n, d}, rng, -1, 1, false);
    record("embedding", gradient_check([&] { return weighted_sum(embedding(emb, ids), we); }, {emb}, kGradStep));
    auto logits = random_tensor({n, vocab}, rng, -3, 3);
    TokenIds targets(n);
    for (auto& t : targets) t = static_cast<TokenId>(rng.below(vocab));
    targets[0] = static_cast<TokenId>(1 + rng.below(vocab - 1));
    record("cross_entropy",
           gradient_check([&] { return cross_entropy(logits, targets, TokenId{0}); }, {logits}, kGradStep));

    const std::size_t heads = 1 + rng.below(3), head_dim = 1 + rng.below(3), width = heads * head_dim;
    AttentionSpec spec;
    spec.heads = heads;
    spec.diagonal = rng.below(2) ? MaskDiagonal::strict : MaskDiagonal::permit_self;
    const bool self = rng.below(2) == 0;
    for (std::size_t h = 0; h < heads; ++h) spec.head_masks.push_back(self ? kinds[rng.below(4)] : MaskKind::none);
    std::size_t nq = 0, nk = 0;
    for (std::size_t s = 0, segs = 1 + rng.below(3); s < segs; ++s) {
      const std::size_t q_len = 1 + rng.below(4), k_len = self ? q_len : 1 + rng.below(4);
      spec.segments.push_back({nq, q_len, nk, k_len});
      nq += q_len;
      nk += k_len;
    }
    auto q = random_tensor({nq, width}, rng);
    auto kk = random_tensor({nk, width}, rng);
    auto v = random_tensor({nk, width}, rng);
    auto wa = random_tensor({nq, width}, rng, -1, 1, false);
    record("attention", gradient_check([&] { return weighted_sum(attention(q, kk, v, spec), wa); }, {q, kk, v}, kGradStep));
  }
  const double elapsed = seconds_since(t0);
  double max_err = 0;
  std::string worst_op;
  int min_count = std::numeric_limits<int>::max();
  for (const auto& [op, err] : worst) {
    if (err >= max_err) max_err = err, worst_op = op;
    min_count = std::min(min_count, count[op]);
  }
  const bool pass = max_err < kGradTol && min_count >= kGradInstances && elapsed < kGradSeconds;
  return {pass, std::to_string(worst.size()) + " ops x >= " + std::to_string(min_count) + " instances, max rel err " +
                    sci(max_err) + " (" + worst_op + "), " + fmt(elapsed, 2) + " s"};
}

// ---- 3 ----------------------------------------------------------------------

Outcome masks() {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::size_t checked = 0, wrong = 0;
  for (std::size_t n = 1; n <= kMaskMaxN; ++n) {
    const auto mf = directional_mask(n, MaskKind::forward);
    const auto mb = directional_mask(n, MaskKind::backward);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        wrong += mf.at(i, j) != (i < j ? 0.0 : -kInf);
        wrong += mb.at(i, j) != (i > j ? 0.0 : -kInf);
        checked += 2;
      }
    }
  }
  // Attention probabilities at masked positions.
  Rng rng(3);
  std::size_t masked = 0, leaked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(kMaskMaxN), heads = 4, d = 8;
    AttentionSpec spec;
    spec.heads = heads;
    spec.head_masks = {MaskKind::forward, MaskKind::backward, MaskKind::causal, MaskKind::forward};
    spec.diagonal = trial % 2 ? MaskDiagonal::permit_self : MaskDiagonal::strict;
    spec.segments = {{0, n, 0, n}};
    const auto q = test::random_tensor({n, d}, rng, -4, 4, false);
    const auto k = test::random_tensor({n, d}, rng, -4, 4, false);
    for (std::size_t h = 0; h < heads; ++h) {
      const auto w = attention_weights(q, k, spec, 0, h);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (mask_allows(spec.head_masks[h], spec.diagonal, i, j)) continue;
          ++masked;
          leaked += w[i * n + j] != 0.0;
        }
      }
    }
  }
  return {wrong == 0 && leaked == 0, std::to_string(checked) + " mask entries, " + std::to_string(wrong) +
                                         " wrong; " + std::to_string(masked) + " masked weights, " +
                                         std::to_string(leaked) + " nonzero"};
}

// ---- 4 ----------------------------------------------------------------------

Outcome positional() {
  const auto pe = positional_encoding<double>(kPePositions, kPeDim, 10000.0);
  const auto pf = positional_encoding<float>(kPePositions, kPeDim, 10000.0);
  double worst = 0;
  for (std::size_t pos = 0; pos < kPePositions; ++pos) {
    for (std::size_t i = 0; 2 * i < kPeDim; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * i / kPeDim);
      for (const double got : {pe.at(pos, 2 * i), static_cast<double>(pf.at(pos, 2 * i))})
        worst = std::max(worst, std::abs(got - std::sin(angle)));
      for (const double got : {pe.at(pos, 2 * i + 1), static_cast<double>(pf.at(pos, 2 * i + 1))})
        worst = std::max(worst, std::abs(got - std::cos(angle)));
    }
  }
  bool alternating = true;
  for (std::size_t c = 0; c < kPeDim; ++c) {
    const double want = c % 2 ? 1.0 : 0.0;
    alternating = alternating && pe.at(0, c) == want && pf.at(0, c) == static_cast<float>(want);
  }
  return {worst < kPeTol && alternating,
          "max abs err " + sci(worst) + " (double and float), PE(0) alternating " + (alternating ? "yes" : "no")};
}

// ---- 5 ----------------------------------------------------------------------

std::map<Group, std::uint64_t> checksums(const XModel& m) {
  std::map<Group, std::uint64_t> sums;
  for (auto g : kAllGroups) sums[g] = m.checksum(g);
  return sums;
}

Outcome routing() {
  using G = Group;
  struct Case {
    Task task;
    Lang in, out;
    std::set<Group> want;
  };
  const std::vector<Case> cases{
      {Task::AE, Lang::pri, Lang::pri, {G::enc_pri, G::enc_shared, G::dec_shared, G::dec_pri}},
      {Task::AE, Lang::sec, Lang::sec, {G::enc_sec, G::enc_shared, G::dec_shared, G::dec_sec}},
      {Task::BT, Lang::sec, Lang::pri, {G::enc_sec, G::enc_shared, G::dec_shared, G::dec_pri}},
      {Task::BT, Lang::pri, Lang::sec, {G::enc_pri, G::enc_shared, G::dec_shared, G::dec_sec}},
      {Task::QG, Lang::sec, Lang::sec, {G::enc_sec, G::enc_shared, G::dec_shared, G::dec_sec}},
      {Task::QG, Lang::pri, Lang::pri, {G::enc_pri, G::enc_shared, G::dec_shared, G::dec_pri}},
  };
  std::size_t route_errors = 0;
  for (const auto& c : cases) route_errors += route(c.task, c.in, c.out).trainable_groups != c.want;

  ToyConfig toy;
  toy.seed = 5;
  toy.vocab_size = 40;
  toy.n_pairs = 200;
  const auto corpora = gen_toy_languages(toy);
  const std::vector<std::vector<std::string>> text{corpora.mono_pri.lines, corpora.mono_sec.lines};
  const auto bpe = BpeModel::learn(text, 200);
  auto config = TrainConfig::toy();
  config.d_model = 16;
  config.heads = 2;
  config.batch_size = 4;
  XModel model(config.model_dims(bpe.vocab_size()), 5);
  Trainer trainer(model, bpe, config);
  const auto pri = encode_lines(bpe, corpora.mono_pri.lines, config.max_len);
  const auto sec = encode_lines(bpe, corpora.mono_sec.lines, config.max_len);
  const auto qg_pri = encode_pairs(bpe, std::span<const QGPair>(corpora.qg_pri.pairs), config.max_len);
  const auto qg_sec = encode_pairs(bpe, std::span<const QGPair>(corpora.qg_sec.pairs), config.max_len);
  const auto par = encode_pairs(bpe, std::span<const ParallelPair>(corpora.parallel.pairs), config.max_len);

  Rng rng(5);
  std::size_t violations = 0;
  std::map<std::string, int> seen;
  for (int step = 0; step < kMixedSteps; ++step) {
    const Task task = std::array{Task::AE, Task::BT, Task::QG, Task::MT}[rng.below(4)];
    const Lang lang = rng.below(2) ? Lang::pri : Lang::sec;
    const auto& mono = lang == Lang::pri ? pri : sec;
    std::vector<TokenIds> bodies;
    std::vector<TrainingExample> batch;
    Lang in = lang, out = lang;
    for (int i = 0; i < 4; ++i) {
      const auto pick = rng.below(mono.size());
      bodies.push_back(mono[pick]);
      if (task == Task::QG) {
        const auto& p = (lang == Lang::pri ? qg_pri : qg_sec)[pick % qg_pri.size()];
        batch.push_back({frame_source(p.src, lang), frame_target(p.tgt), lang, lang, Task::QG});
      } else if (task == Task::MT) {
        const auto& p = par[pick % par.size()];
        in = lang, out = other(lang);
        const auto& s = lang == Lang::pri ? p.src : p.tgt;
        const auto& t = lang == Lang::pri ? p.tgt : p.src;
        batch.push_back({frame_source(s, in), frame_target(t), in, out, Task::MT});
      }
    }
    const auto before = checksums(model);
    if (task == Task::AE) {
      trainer.denoise_step(bodies, lang, "acceptance");
    } else if (task == Task::BT) {
      trainer.backtranslate_step(bodies, lang, "acceptance");
      in = other(lang);
      out = lang;
    } else {
      trainer.train_batch(batch, "acceptance");
    }
    const auto after = checksums(model);
    const auto updated = route(task, in, out).updated_groups();
    for (auto g : kAllGroups) {
      const bool routed = std::find(updated.begin(), updated.end(), g) != updated.end();
      violations += (before.at(g) != after.at(g)) != routed;
    }
    ++seen[std::string(to_string(task))];
  }
  std::string mix;
  for (const auto& [t, n] : seen) mix += " " + t + "=" + std::to_string(n);
  return {route_errors == 0 && violations == 0,
          std::to_string(cases.size() - route_errors) + "/" + std::to_string(cases.size()) + " route sets exact; " +
              std::to_string(kMixedSteps) + " steps (" + mix.substr(1) + "), " + std::to_string(violations) +
              " checksum violations"};
}

// ---- 6 ----------------------------------------------------------------------

Outcome bpe_roundtrip(const fs::path& scratch) {
  ToyConfig toy;
  toy.seed = 6;
  toy.vocab_size = 600;
  toy.n_mono = kBpeLines / 2;
  const auto corpora = gen_toy_languages(toy);
  std::vector<std::string> lines = corpora.mono_pri.lines;
  lines.insert(lines.end(), corpora.mono_sec.lines.begin(), corpora.mono_sec.lines.end());
  const std::vector<std::vector<std::string>> text{lines};
  const auto bpe = BpeModel::learn(text, 1000);

  std::size_t mismatches = 0;
  for (const auto& line : lines) mismatches += bpe.decode(bpe.encode(line)) != canonical(line);

  std::set<std::string> chars;
  for (const auto& line : lines)
    for (const auto& w : split_words(normalize_text(line)))
      for (auto& cp : utf8_codepoints(w)) chars.insert(cp);
  const std::size_t base = chars.size() + 1;  // plus the end-of-word marker
  const bool equation = bpe.num_base_symbols() == base && bpe.vocab_size() == kNumSpecials + base + bpe.num_merges();

  const auto first = scratch / "bpe_a.txt", second = scratch / "bpe_b.txt";
  bpe.save(first);
  BpeModel::load(first).save(second);
  const bool identical = read_file(first) == read_file(second) && BpeModel::load(first) == bpe;
  return {lines.size() >= kBpeLines && mismatches == 0 && equation && identical,
          std::to_string(lines.size()) + " lines, " + std::to_string(mismatches) + " round-trip mismatches; vocab " +
              std::to_string(bpe.vocab_size()) + " = " + std::to_string(kNumSpecials) + " + " + std::to_string(base) +
              " + " + std::to_string(bpe.num_merges()) + (equation ? "" : " (VIOLATED)") + "; save/load " +
              (identical ? "byte-identical" : "differs")};
}

// ---- 7 ----------------------------------------------------------------------

Outcome metrics() {
  Rng rng(7);
  double worst = 0;
  for (int trial = 0; trial < kMetricCorpora; ++trial) {
    std::vector<Words> h, r;
    for (std::size_t s = 0, n = 1 + rng.below(4); s < n; ++s) {
      h.push_back(test::random_sentence(rng, 7, 4));
      r.push_back(test::random_sentence(rng, 7, 4));
    }
    for (std::size_t k = 1; k <= 4; ++k) worst = std::max(worst, std::abs(bleu(h, r, k) - test::bleu_oracle(h, r, k)));
    worst = std::max(worst, std::abs(rouge_l(h, r) - test::rouge_oracle(h, r)));
    worst = std::max(worst, std::abs(meteor_simplified(h, r) - test::meteor_oracle(h, r)));
  }
  ToyConfig toy;
  toy.seed = 7;
  toy.n_pairs = 50;
  std::vector<Words> questions;
  for (const auto& p : gen_toy_languages(toy).qg_pri.pairs) questions.push_back(metric_tokens(p.question));
  const double b = bleu(questions, questions), rl = rouge_l(questions, questions), m = meteor_simplified(questions, questions);
  const bool identical = std::abs(b - 100) < kMetricTol && std::abs(rl - 100) < kMetricTol && m > 0.99 && m <= 1.0;
  std::vector<Words> upper, lower;
  for (int s = 0; s < 10; ++s) {
    upper.push_back(test::random_sentence(rng, 7, 4));
    Words w = test::random_sentence(rng, 7, 4);
    for (auto& t : w) t = std::string(1, static_cast<char>(t[0] - 'a' + 'p'));
    lower.push_back(w);
  }
  bool disjoint = rouge_l(upper, lower) == 0.0 && meteor_simplified(upper, lower) == 0.0;
  for (std::size_t k = 1; k <= 4; ++k) disjoint = disjoint && bleu(upper, lower, k) == 0.0;
  return {worst < kMetricTol && identical && disjoint,
          std::to_string(kMetricCorpora) + " corpora, max |metric - oracle| " + sci(worst) +
              "; identical " + fmt(b, 1) + "/" + fmt(rl, 1) + "/" + fmt(m, 4) + "; disjoint " + (disjoint ? "0" : "nonzero")};
}

// ---- 8 ----------------------------------------------------------------------

double teacher_forced_loss(const XModel& model, std::span<const TrainingExample> examples) {
  NoGradGuard guard;
  std::vector<TokenIds> src, prefix;
  TokenIds gold;
  for (const auto& e : examples) {
    src.push_back(e.src_ids);
    prefix.emplace_back(e.tgt_ids.begin(), e.tgt_ids.end() - 1);
    gold.insert(gold.end(), e.tgt_ids.begin() + 1, e.tgt_ids.end());
  }
  const auto logits =
      model.forward(PackedSequences::pack(src), Lang::pri, Lang::pri, PackedSequences::pack(prefix), {});
  return cross_entropy(logits, gold, special::pad).item();
}

Outcome memorization() {
  ToyConfig toy;
  toy.seed = 8;
  toy.vocab_size = 64;
  toy.n_pairs = kMemoPairs;
  const auto corpora = gen_toy_languages(toy);
  std::vector<std::string> text;
  for (const auto& p : corpora.qg_pri.pairs) text.push_back(p.sentence), text.push_back(p.question);
  const std::vector<std::vector<std::string>> bpe_text{text};
  const auto bpe = BpeModel::learn(bpe_text, 300);
  auto config = TrainConfig::toy();
  config.lr = kMemoLr;
  config.batch_size = 8;
  const auto pairs = encode_pairs(bpe, std::span<const QGPair>(corpora.qg_pri.pairs), config.max_len);
  XModel model(config.model_dims(bpe.vocab_size()), 8);
  Trainer trainer(model, bpe, config);
  std::vector<TrainingExample> all;
  for (const auto& p : pairs) all.push_back({frame_source(p.src, Lang::pri), frame_target(p.tgt), Lang::pri, Lang::pri, Task::QG});

  Rng rng(8);
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t steps = 0;
  double loss = teacher_forced_loss(model, all);
  while (steps < kMemoMaxSteps && loss >= kMemoLoss) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t at = 0; at < order.size() && steps < kMemoMaxSteps; at += config.batch_size, ++steps) {
      std::vector<TrainingExample> batch;
      for (std::size_t i = at; i < std::min(order.size(), at + config.batch_size); ++i) batch.push_back(all[order[i]]);
      trainer.train_batch(batch, "memorize");
    }
    loss = teacher_forced_loss(model, all);
  }
  std::vector<std::string> sentences;
  for (const auto& p : corpora.qg_pri.pairs) sentences.push_back(p.sentence);
  const auto results = batch_generate(model, bpe, sentences, Lang::pri, config.decode_max_len);
  std::size_t exact = 0;
  for (std::size_t i = 0; i < results.size(); ++i) exact += results[i].text == canonical(corpora.qg_pri.pairs[i].question);
  return {pairs.size() == kMemoPairs && loss < kMemoLoss && steps <= kMemoMaxSteps && exact >= kMemoExact,
          "loss " + fmt(loss, 4) + " after " + std::to_string(steps) + " steps (lr " + fmt(kMemoLr, 4) + "), " +
              std::to_string(exact) + "/" + std::to_string(pairs.size()) + " exact"};
}

// ---- 9, 10, 11 ----------------------------------------------------------------

struct ToyResults {
  std::map<std::string, std::vector<double>> bleu;  // keyed by configuration
  double seconds = 0;
  json runs = json::array();
};

ToyResults toy_suite(std::size_t seeds) {
  ToyResults out;
  const auto t0 = std::chrono::steady_clock::now();
  const auto suite = build_toy_suite(ToySuiteConfig::standard());
  std::cerr << "toy suite: vocabulary " << suite.bpe.vocab_size() << ", " << suite.train_pool.size()
            << " primary training pairs, " << suite.dev_pri.size() << " dev pairs\n";
  auto keep = [&](const std::string& key, const ToyRun& run) {
    out.bleu[key].push_back(run.dev_bleu4);
    auto j = run.to_json();
    j["key"] = key;
    out.runs.push_back(j);
    std::cerr << "  " << key << " seed " << run.seed << ": dev BLEU-4 " << fmt(run.dev_bleu4, 2) << " ("
              << fmt(run.seconds, 0) << " s)\n";
  };
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    keep("transformer", run_toy(suite, Variant::transformer, seed, kAblationPairs));
    keep("transformer+pretraining", run_toy(suite, Variant::transformer_pretraining, seed, kAblationPairs));
    ToyRun prepared;
    const auto pretrained = prepare_toy_model(suite, Variant::clqg, seed, nullptr, &prepared);
    for (const std::size_t n : kSweep) {
      auto model = pretrained.clone();
      keep(n == kAblationPairs ? "clqg" : "clqg@" + std::to_string(n),
           finish_toy_run(suite, Variant::clqg, seed, model, n, true, nullptr, prepared));
    }
    auto model = pretrained.clone();
    keep("clqg-no-secondary", finish_toy_run(suite, Variant::clqg, seed, model, kAblationPairs, false, nullptr, prepared));
  }
  out.seconds = seconds_since(t0);
  return out;
}

Outcome ablation(const ToyResults& r) {
  const double t = median(r.bleu.at("transformer")), tp = median(r.bleu.at("transformer+pretraining")),
               c = median(r.bleu.at("clqg"));
  const bool pass = c >= tp && tp >= t && c - t >= kAblationMargin && r.seconds < kSuiteHours * 3600;
  return {pass, "median dev BLEU-4 clqg " + fmt(c, 2) + " >= transformer+pretraining " + fmt(tp, 2) +
                    " >= transformer " + fmt(t, 2) + ", margin " + fmt(c - t, 2) + "; seeds clqg " +
                    list(r.bleu.at("clqg")) + " tp " + list(r.bleu.at("transformer+pretraining")) + " t " +
                    list(r.bleu.at("transformer")) + "; suite " + fmt(r.seconds / 60, 1) + " min"};
}

Outcome secondary(const ToyResults& r) {
  const auto& with = r.bleu.at("clqg");
  const auto& without = r.bleu.at("clqg-no-secondary");
  std::vector<double> gain;
  for (std::size_t i = 0; i < with.size(); ++i) gain.push_back(with[i] - without[i]);
  const double worst = *std::min_element(gain.begin(), gain.end());
  const bool pass = worst >= -kSecondaryMaxDrop && median(with) > median(without);
  return {pass, "with secondary " + list(with) + " median " + fmt(median(with), 2) + "; without " + list(without) +
                    " median " + fmt(median(without), 2) + "; per-seed change " + list(gain)};
}

Outcome sweep(const ToyResults& r) {
  std::vector<double> medians;
  std::string detail;
  for (const std::size_t n : kSweep) {
    const auto key = n == kAblationPairs ? std::string("clqg") : "clqg@" + std::to_string(n);
    medians.push_back(median(r.bleu.at(key)));
    detail += (detail.empty() ? "" : ", ") + std::to_string(n) + ": " + fmt(medians.back(), 2);
  }
  return {std::is_sorted(medians.begin(), medians.end()), "median dev BLEU-4 " + detail};
}

// ---- 12 ---------------------------------------------------------------------

struct PipelineTrace {
  std::string log_hash, checkpoint_hash;
  double bleu = 0;
};

PipelineTrace pipeline_once(const fs::path& dir, std::uint64_t seed) {
  auto config = ToySuiteConfig::standard();
  config.toy.vocab_size = 120;
  config.toy.n_pairs = 300;
  config.toy.n_mono = 600;
  config.toy.n_qg_pri = 300;
  config.toy.n_qg_sec = 300;
  config.bpe_merges = 300;
  config.dev_pairs = 60;
  config.train.pretrain_epochs = 2;
  config.train.finetune_epochs = 1;
  config.train.epochs = 4;
  const auto suite = build_toy_suite(config);
  TrainingLog log;
  XModel model = prepare_toy_model(suite, Variant::clqg_parallel, seed, &log);
  const auto run = finish_toy_run(suite, Variant::clqg_parallel, seed, model, suite.train_pool.size(), true, &log);
  fs::create_directories(dir);
  model.save(dir / "final.ckpt", sha1_hex(suite.bpe.serialize()));
  return {sha1_hex(log.jsonl()), git_blob_hash_file(dir / "final.ckpt"), run.dev_bleu4};
}

Outcome determinism(const fs::path& scratch) {
  const auto a = pipeline_once(scratch / "run_a", 12);
  const auto b = pipeline_once(scratch / "run_b", 12);
  const auto c = pipeline_once(scratch / "run_c", 13);
  const bool same = a.log_hash == b.log_hash && a.checkpoint_hash == b.checkpoint_hash && a.bleu == b.bleu;
  const bool seed_matters = a.checkpoint_hash != c.checkpoint_hash;
  return {same && seed_matters, "log sha1 " + a.log_hash.substr(0, 12) + (a.log_hash == b.log_hash ? " == " : " != ") +
                                    b.log_hash.substr(0, 12) + ", checkpoint " + a.checkpoint_hash.substr(0, 12) +
                                    (a.checkpoint_hash == b.checkpoint_hash ? " == " : " != ") +
                                    b.checkpoint_hash.substr(0, 12) + ", dev BLEU-4 " + fmt(a.bleu, 4) +
                                    "; another seed gives a different checkpoint: " + (seed_matters ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::size_t seeds = 3;
  std::string report_path;
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--seeds", seeds, "Seeds for the toy-suite criteria")->capture_default_str();
  app.add_option("--report", report_path, "Write results as JSON");
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  const auto scratch = fs::temp_directory_path() / ("clqg_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(scratch);

  const std::map<int, std::string> titles{
      {1, "desk-scale substitution"}, {2, "gradient correctness"}, {3, "mask fidelity"},
      {4, "positional encodings"},    {5, "routing fidelity"},     {6, "BPE"},
      {7, "metric oracles"},          {8, "memorization"},         {9, "toy ablation ordering"},
      {10, "secondary-data ablation"}, {11, "data-size sweep"},    {12, "determinism"}};
  std::map<int, Outcome> results;
  auto run = [&](int c, const std::function<Outcome()>& f) {
    if (!wanted(c)) return;
    const auto t0 = std::chrono::steady_clock::now();
    std::cerr << "criterion " << c << " (" << titles.at(c) << ") ...\n";
    try {
      results[c] = f();
    } catch (const std::exception& e) {
      results[c] = {false, std::string("exception: ") + e.what()};
    }
    results[c].detail += " [" + fmt(seconds_since(t0), 2) + " s]";
  };
  run(2, gradients);
  run(3, masks);
  run(4, positional);
  run(5, routing);
  run(6, [&] { return bpe_roundtrip(scratch); });
  run(7, metrics);
  run(8, memorization);
  run(12, [&] { return determinism(scratch); });
  json toy_runs = json::array();
  if (wanted(9) || wanted(10) || wanted(11)) {
    ToyResults toy;
    std::string failure;
    try {
      toy = toy_suite(seeds);
      toy_runs = toy.runs;
    } catch (const std::exception& e) {
      failure = std::string("exception: ") + e.what();
    }
    const std::vector<std::pair<int, std::function<Outcome(const ToyResults&)>>> toy_criteria{
        {9, ablation}, {10, secondary}, {11, sweep}};
    for (const auto& [c, f] : toy_criteria) {
      if (wanted(c)) results[c] = failure.empty() ? f(toy) : Outcome{false, failure};
    }
  }
  if (wanted(1)) {
    // Full-scale numbers are out of reach; the criterion holds when the
    // desk-scale substitutes (2-12) all hold.
    bool substitutes = true;
    for (int c = 2; c <= 12; ++c) substitutes = substitutes && results.contains(c) && results[c].pass;
    results[1] = {substitutes, substitutes ? "full-scale BLEU not attempted; criteria 2-12 pass at desk scale"
                                           : "full-scale BLEU not attempted; some of criteria 2-12 did not pass or did not run"};
  }

  bool all = true;
  json report = json::array();
  for (const auto& [c, outcome] : results) {
    std::cout << (outcome.pass ? "PASS" : "FAIL") << "  " << (c < 10 ? " " : "") << c << "  " << titles.at(c) << ": "
              << outcome.detail << "\n";
    all = all && outcome.pass;
    report.push_back({{"criterion", c}, {"title", titles.at(c)}, {"pass", outcome.pass}, {"detail", outcome.detail}});
  }
  if (!report_path.empty()) write_file(report_path, json{{"criteria", report}, {"toy_runs", toy_runs}}.dump(2) + "\n");
  fs::remove_all(scratch);
  return all ? 0 : 1;
}
