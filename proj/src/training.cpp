#include "clqg/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "clqg/decoding.hpp"
#include "clqg/metrics.hpp"
#include "clqg/ops.hpp"
#include "clqg/text.hpp"

namespace clqg {
namespace {

std::string direction(Lang in, Lang out) { return std::string(to_string(in)) + "->" + std::string(to_string(out)); }

// Order of n items after bounded-displacement noise.
std::vector<std::size_t> noisy_order(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (k == 0 || n < 2) return order;
  if (k == std::numeric_limits<std::size_t>::max()) {
    rng.shuffle(std::span<std::size_t>(order));
    return order;
  }
  std::vector<double> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = static_cast<double>(i) + rng.uniform() * static_cast<double>(k + 1);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  return order;
}

bool is_frame_start(TokenId id) { return id == special::bos || id == special::lang_pri || id == special::lang_sec; }

// [begin, end) of the payload between optional framing tokens.
std::pair<std::size_t, std::size_t> payload(const TokenIds& ids) {
  std::size_t begin = 0, end = ids.size();
  if (end > 0 && is_frame_start(ids[0])) begin = 1;
  if (end > begin && ids[end - 1] == special::eos) --end;
  return {begin, end};
}

std::size_t total_targets(std::span<const TrainingExample> batch) {
  std::size_t n = 0;
  for (const auto& ex : batch) n += ex.tgt_ids.size() - 1;
  return n;
}

}  // namespace

TrainConfig TrainConfig::full_scale() { return TrainConfig{}; }

TrainConfig TrainConfig::toy() {
  TrainConfig c;
  c.d_model = 48;
  c.heads = 6;
  c.dropout = 0.1;
  c.lr = 1e-3;
  c.batch_size = 16;
  c.max_len = 48;
  c.pretrain_epochs = 4;
  c.finetune_epochs = 3;
  c.epochs = 40;
  c.eval_every = 2;
  c.qg_patience = 4;
  c.decode_max_len = 24;
  return c;
}

void TrainConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  positive(d_model, "d_model");
  positive(heads, "heads");
  positive(private_layers, "private_layers");
  positive(shared_layers, "shared_layers");
  positive(batch_size, "batch_size");
  positive(max_len, "max_len");
  positive(eval_every, "eval_every");
  positive(decode_max_len, "decode_max_len");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (max_len < 4) throw std::invalid_argument("max_len must be at least 4");
  model_dims(1).validate();
}

ModelDims TrainConfig::model_dims(std::size_t vocab_size) const {
  ModelDims d;
  d.d_model = d_model;
  d.heads = heads;
  d.ff_dim = ff_dim == 0 ? 4 * d_model : ff_dim;
  d.private_layers = private_layers;
  d.shared_layers = shared_layers;
  d.vocab_size = vocab_size;
  d.max_len = max_len;
  d.mask_diagonal = mask_diagonal;
  return d;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"d_model", d_model},
          {"heads", heads},
          {"private_layers", private_layers},
          {"shared_layers", shared_layers},
          {"ff_dim", ff_dim},
          {"dropout", dropout},
          {"lr", lr},
          {"batch_size", batch_size},
          {"noise_k", noise_k},
          {"noise_full_shuffle", noise_full_shuffle},
          {"max_len", max_len},
          {"mask_diagonal", mask_diagonal == MaskDiagonal::strict ? "strict" : "permit_self"},
          {"pretrain_epochs", pretrain_epochs},
          {"finetune_epochs", finetune_epochs},
          {"epochs", epochs},
          {"patience", patience},
          {"min_delta", min_delta},
          {"eval_every", eval_every},
          {"qg_patience", qg_patience},
          {"decode_max_len", decode_max_len},
          {"max_steps", max_steps},
          {"carry_adam_moments", carry_adam_moments},
          {"isolation_check_every", isolation_check_every},
          {"seed", seed}};
}

void TrainConfig::update_from_json(const nlohmann::json& j) {
  const auto known = to_json();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) throw std::invalid_argument("unknown training setting '" + it.key() + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("d_model", d_model);
  get("heads", heads);
  get("private_layers", private_layers);
  get("shared_layers", shared_layers);
  get("ff_dim", ff_dim);
  get("dropout", dropout);
  get("lr", lr);
  get("batch_size", batch_size);
  get("noise_k", noise_k);
  get("noise_full_shuffle", noise_full_shuffle);
  get("max_len", max_len);
  if (j.contains("mask_diagonal")) {
    const auto v = j.at("mask_diagonal").get<std::string>();
    if (v == "strict") {
      mask_diagonal = MaskDiagonal::strict;
    } else if (v == "permit_self") {
      mask_diagonal = MaskDiagonal::permit_self;
    } else {
      throw std::invalid_argument("mask_diagonal must be strict or permit_self");
    }
  }
  get("pretrain_epochs", pretrain_epochs);
  get("finetune_epochs", finetune_epochs);
  get("epochs", epochs);
  get("patience", patience);
  get("min_delta", min_delta);
  get("eval_every", eval_every);
  get("qg_patience", qg_patience);
  get("decode_max_len", decode_max_len);
  get("max_steps", max_steps);
  get("carry_adam_moments", carry_adam_moments);
  get("isolation_check_every", isolation_check_every);
  get("seed", seed);
}

void TrainingExample::validate() const {
  if (src_ids.empty()) throw std::invalid_argument("training example has an empty source");
  if (tgt_ids.size() < 2 || tgt_ids.front() != special::bos || tgt_ids.back() != special::eos) {
    throw std::invalid_argument("training target must be framed as <s> ... </s>");
  }
}

TokenIds permute_noise(const TokenIds& ids, std::size_t k, Rng& rng) {
  const auto [begin, end] = payload(ids);
  const auto order = noisy_order(end - begin, k, rng);
  TokenIds out(ids);
  for (std::size_t i = 0; i < order.size(); ++i) out[begin + i] = ids[begin + order[i]];
  return out;
}

TokenIds permute_words(const TokenIds& ids, std::size_t k, Rng& rng, const BpeModel& bpe) {
  const auto [begin, end] = payload(ids);
  std::vector<std::pair<std::size_t, std::size_t>> words;  // [start, stop)
  std::size_t start = begin;
  for (std::size_t i = begin; i < end; ++i) {
    if (bpe.is_special(ids[i]) || bpe.ends_word(ids[i])) {
      words.emplace_back(start, i + 1);
      start = i + 1;
    }
  }
  if (start < end) words.emplace_back(start, end);
  const auto order = noisy_order(words.size(), k, rng);
  TokenIds out(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(begin));
  for (auto w : order) {
    out.insert(out.end(), ids.begin() + static_cast<std::ptrdiff_t>(words[w].first),
               ids.begin() + static_cast<std::ptrdiff_t>(words[w].second));
  }
  out.insert(out.end(), ids.begin() + static_cast<std::ptrdiff_t>(end), ids.end());
  return out;
}

void TrainingLog::attach(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  file_.emplace(path, std::ios::binary | std::ios::trunc);
  if (!*file_) throw std::runtime_error("cannot write training log " + path.string());
  for (const auto& r : records_) *file_ << r.dump() << '\n';
}

void TrainingLog::add(nlohmann::json record) {
  if (file_) {
    *file_ << record.dump() << '\n';
    file_->flush();
  }
  records_.push_back(std::move(record));
}

std::string TrainingLog::jsonl() const {
  std::string out;
  for (const auto& r : records_) out += r.dump() + "\n";
  return out;
}

std::vector<TokenIds> encode_lines(const BpeModel& bpe, std::span<const std::string> lines, std::size_t max_len,
                                   std::size_t* dropped) {
  std::vector<TokenIds> out;
  std::size_t skipped = 0;
  for (const auto& line : lines) {
    auto ids = bpe.encode(line);
    if (ids.empty() || ids.size() + 2 > max_len) {
      ++skipped;
      continue;
    }
    out.push_back(std::move(ids));
  }
  if (dropped) *dropped = skipped;
  return out;
}

namespace {

template <typename Pair, typename First, typename Second>
std::vector<TokenizedPair> encode_pairs_impl(const BpeModel& bpe, std::span<const Pair> pairs, std::size_t max_len,
                                             std::size_t* dropped, First first, Second second) {
  std::vector<TokenizedPair> out;
  std::size_t skipped = 0;
  for (const auto& p : pairs) {
    TokenizedPair t{bpe.encode(first(p)), bpe.encode(second(p))};
    if (t.src.empty() || t.tgt.empty() || t.src.size() + 2 > max_len || t.tgt.size() + 2 > max_len) {
      ++skipped;
      continue;
    }
    out.push_back(std::move(t));
  }
  if (dropped) *dropped = skipped;
  return out;
}

}  // namespace

std::vector<TokenizedPair> encode_pairs(const BpeModel& bpe, std::span<const QGPair> pairs, std::size_t max_len,
                                        std::size_t* dropped) {
  return encode_pairs_impl(
      bpe, pairs, max_len, dropped, [](const QGPair& p) { return p.sentence; },
      [](const QGPair& p) { return p.question; });
}

std::vector<TokenizedPair> encode_pairs(const BpeModel& bpe, std::span<const ParallelPair> pairs,
                                        std::size_t max_len, std::size_t* dropped) {
  return encode_pairs_impl(
      bpe, pairs, max_len, dropped, [](const ParallelPair& p) { return p.pri; },
      [](const ParallelPair& p) { return p.sec; });
}

Trainer::Trainer(XModel& model, const BpeModel& bpe, TrainConfig config, TrainingLog* log)
    : model_(model), bpe_(bpe), config_(std::move(config)), log_(log) {
  config_.validate();
  if (model_.dims().vocab_size != bpe_.vocab_size()) {
    throw std::invalid_argument("model vocabulary (" + std::to_string(model_.dims().vocab_size) +
                                ") does not match the BPE model (" + std::to_string(bpe_.vocab_size()) + ")");
  }
}

void Trainer::begin_phase(const std::string& phase) {
  if (!config_.carry_adam_moments) optimizer_.reset();
  order_rng_ = Rng(derive_seed(config_.seed, phase + ".order"));
  noise_rng_ = Rng(derive_seed(config_.seed, phase + ".noise"));
  dropout_rng_ = Rng(derive_seed(config_.seed, phase + ".dropout"));
}

std::vector<std::vector<std::size_t>> Trainer::epoch_batches(std::size_t n, Rng& rng) const {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += config_.batch_size) {
    const auto stop = std::min(n, start + config_.batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return batches;
}

TokenIds Trainer::noise(const TokenIds& body, Rng& rng) const {
  const auto k = config_.noise_full_shuffle ? std::numeric_limits<std::size_t>::max() : config_.noise_k;
  return permute_words(body, k, rng, bpe_);
}

double Trainer::train_batch(std::span<const TrainingExample> batch, const std::string& phase,
                            const nlohmann::json& extra) {
  if (batch.empty()) throw std::invalid_argument("train_batch needs a nonempty batch");
  const auto& first = batch.front();
  for (const auto& ex : batch) {
    ex.validate();
    if (ex.task != first.task || ex.lang_in != first.lang_in || ex.lang_out != first.lang_out) {
      throw std::invalid_argument("a batch must share one task and direction");
    }
  }
  const TaskRoute r = route(first.task, first.lang_in, first.lang_out);
  const auto updated = r.updated_groups();

  const bool check = config_.isolation_check_every > 0 && global_step_ % config_.isolation_check_every == 0;
  std::map<Group, std::uint64_t> frozen;
  if (check) {
    for (Group g : kAllGroups) {
      if (std::find(updated.begin(), updated.end(), g) == updated.end()) frozen[g] = model_.checksum(g);
    }
  }

  std::vector<TokenIds> src, in, out;
  for (const auto& ex : batch) {
    src.push_back(ex.src_ids);
    in.emplace_back(ex.tgt_ids.begin(), ex.tgt_ids.end() - 1);
    out.emplace_back(ex.tgt_ids.begin() + 1, ex.tgt_ids.end());
  }
  const auto ps = PackedSequences::pack(src);
  const auto pi = PackedSequences::pack(in);
  const auto po = PackedSequences::pack(out);
  const ForwardOptions opts{true, config_.dropout, &dropout_rng_};
  const Tensor<float> logits = model_.forward(ps, first.lang_in, first.lang_out, pi, opts);
  const Tensor<float> loss = cross_entropy(logits, po.ids, special::pad);
  const double value = loss.item();
  if (!std::isfinite(value)) throw std::runtime_error(phase + ": non-finite loss at step " + std::to_string(global_step_ + 1));
  backward(loss);
  for (Group g : updated) {
    auto params = model_.parameters(g);
    optimizer_.step(std::string(group_name(g)), params, config_.lr);
  }
  model_.zero_grad();
  ++global_step_;

  for (const auto& [g, sum] : frozen) {
    if (model_.checksum(g) != sum) {
      throw std::logic_error(std::string(group_name(g)) + " changed during a " + std::string(to_string(first.task)) +
                             " " + direction(first.lang_in, first.lang_out) + " step");
    }
  }
  if (log_) {
    nlohmann::json rec = {{"phase", phase},
                          {"task", to_string(first.task)},
                          {"direction", direction(first.lang_in, first.lang_out)},
                          {"loss", value},
                          {"lr", config_.lr},
                          {"step", global_step_}};
    if (extra.is_object()) rec.update(extra);
    log_->add(std::move(rec));
  }
  return value;
}

double Trainer::denoise_step(std::span<const TokenIds> bodies, Lang lang, const std::string& phase) {
  if (bodies.empty()) throw std::invalid_argument("denoise_step needs a nonempty batch");
  std::vector<TrainingExample> batch;
  for (const auto& body : bodies) {
    batch.push_back({frame_source(noise(body, noise_rng_), lang), frame_target(body), lang, lang, Task::AE});
  }
  return train_batch(batch, phase);
}

double Trainer::backtranslate_step(std::span<const TokenIds> bodies, Lang target_lang, const std::string& phase) {
  if (bodies.empty()) throw std::invalid_argument("backtranslate_step needs a nonempty batch");
  const Lang source_lang = other(target_lang);
  std::vector<TokenIds> framed;
  std::size_t longest = 0;
  for (const auto& body : bodies) {
    framed.push_back(frame_source(body, target_lang));
    longest = std::max(longest, body.size());
  }
  const std::size_t max_len = std::min(longest + 4, model_.dims().max_len - 2);
  const auto translations = greedy_decode_ids(model_, framed, target_lang, source_lang, max_len);
  last_pseudo_.clear();
  std::size_t empty = 0;
  std::vector<TrainingExample> batch;
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    TokenIds pseudo = translations[i].tokens;
    if (!pseudo.empty() && pseudo.back() == special::eos) pseudo.pop_back();
    if (pseudo.empty()) {
      pseudo = {special::unk};
      ++empty;
    }
    last_pseudo_.push_back(pseudo);
    batch.push_back({frame_source(pseudo, source_lang), frame_target(bodies[i]), source_lang, target_lang, Task::BT});
  }
  empty_translations_ += empty;
  return train_batch(batch, phase, {{"empty_translations", empty}});
}

double Trainer::eval_loss(std::span<const TrainingExample> examples) const {
  NoGradGuard no_grad;
  double total = 0.0;
  std::size_t tokens = 0;
  for (std::size_t start = 0; start < examples.size(); start += config_.batch_size) {
    const auto chunk = examples.subspan(start, std::min(config_.batch_size, examples.size() - start));
    std::vector<TokenIds> src, in, out;
    for (const auto& ex : chunk) {
      src.push_back(ex.src_ids);
      in.emplace_back(ex.tgt_ids.begin(), ex.tgt_ids.end() - 1);
      out.emplace_back(ex.tgt_ids.begin() + 1, ex.tgt_ids.end());
    }
    const auto po = PackedSequences::pack(out);
    const auto logits = model_.forward(PackedSequences::pack(src), chunk.front().lang_in, chunk.front().lang_out,
                                       PackedSequences::pack(in), ForwardOptions{});
    const auto n = total_targets(chunk);
    total += cross_entropy(logits, po.ids, special::pad).item() * static_cast<double>(n);
    tokens += n;
  }
  return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

double Trainer::dev_ae_loss(std::span<const TokenIds> bodies, Lang lang) const {
  Rng rng(derive_seed(config_.seed, "dev.noise"));
  std::vector<TrainingExample> examples;
  for (const auto& body : bodies) {
    examples.push_back({frame_source(noise(body, rng), lang), frame_target(body), lang, lang, Task::AE});
  }
  return eval_loss(examples);
}

double Trainer::dev_mt_loss(std::span<const TokenizedPair> pairs) const {
  std::vector<TrainingExample> forward, reverse;
  for (const auto& p : pairs) {
    forward.push_back({frame_source(p.src, Lang::pri), frame_target(p.tgt), Lang::pri, Lang::sec, Task::MT});
    reverse.push_back({frame_source(p.tgt, Lang::sec), frame_target(p.src), Lang::sec, Lang::pri, Task::MT});
  }
  return 0.5 * (eval_loss(forward) + eval_loss(reverse));
}

double Trainer::dev_bleu4(std::span<const QGPair> dev, Lang lang) const {
  if (dev.empty()) throw std::invalid_argument("dev_bleu4 needs dev pairs");
  std::vector<std::string> sentences;
  for (const auto& p : dev) sentences.push_back(p.sentence);
  const auto max_len = std::min(config_.decode_max_len, model_.dims().max_len - 1);
  const auto results = batch_generate(model_, bpe_, sentences, lang, max_len, 64);
  std::vector<Words> hyps, refs;
  for (std::size_t i = 0; i < dev.size(); ++i) {
    hyps.push_back(results[i].ok() ? metric_tokens(results[i].text) : Words{});
    refs.push_back(metric_tokens(dev[i].question));
  }
  return bleu(hyps, refs, 4);
}

bool Trainer::step_budget_left(std::size_t steps) const { return config_.max_steps == 0 || steps < config_.max_steps; }

PhaseSummary Trainer::pretrain(std::span<const TokenIds> mono_pri, std::span<const TokenIds> mono_sec,
                               PretrainOptions options, std::span<const TokenIds> dev_pri,
                               std::span<const TokenIds> dev_sec) {
  if (mono_pri.empty()) throw std::invalid_argument("pretraining needs primary monolingual sentences");
  if (options.back_translation && !options.secondary) {
    throw std::invalid_argument("back-translation needs the secondary language");
  }
  if (options.secondary && mono_sec.empty()) {
    throw std::invalid_argument("pretraining needs secondary monolingual sentences");
  }
  const std::string phase = "pretrain";
  begin_phase(phase);
  PhaseSummary summary{phase};
  const std::size_t n_sec = options.secondary ? mono_sec.size() : 0;
  const std::size_t iterations =
      (std::max(mono_pri.size(), n_sec) + config_.batch_size - 1) / config_.batch_size;
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  auto gather = [](std::span<const TokenIds> corpus, const std::vector<std::size_t>& idx) {
    std::vector<TokenIds> out;
    for (auto i : idx) out.push_back(corpus[i]);
    return out;
  };
  for (std::size_t epoch = 1; epoch <= config_.pretrain_epochs && step_budget_left(summary.steps); ++epoch) {
    const auto pri_batches = epoch_batches(mono_pri.size(), order_rng_);
    const auto sec_batches = options.secondary ? epoch_batches(mono_sec.size(), order_rng_)
                                               : std::vector<std::vector<std::size_t>>{};
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t it = 0; it < iterations && step_budget_left(summary.steps + epoch_steps); ++it) {
      const auto pri = gather(mono_pri, pri_batches[it % pri_batches.size()]);
      epoch_loss += denoise_step(pri, Lang::pri, phase);
      ++epoch_steps;
      if (options.secondary) {
        const auto sec = gather(mono_sec, sec_batches[it % sec_batches.size()]);
        epoch_loss += denoise_step(sec, Lang::sec, phase);
        ++epoch_steps;
        if (options.back_translation) {
          epoch_loss += backtranslate_step(pri, Lang::pri, phase);
          epoch_loss += backtranslate_step(sec, Lang::sec, phase);
          epoch_steps += 2;
        }
      }
    }
    summary.steps += epoch_steps;
    summary.epochs = epoch;
    summary.final_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(1, epoch_steps));
    double dev = summary.final_loss;
    if (!dev_pri.empty()) {
      dev = dev_ae_loss(dev_pri, Lang::pri);
      if (options.secondary && !dev_sec.empty()) dev = 0.5 * (dev + dev_ae_loss(dev_sec, Lang::sec));
    }
    if (log_) {
      log_->add({{"phase", phase}, {"event", "epoch"}, {"epoch", epoch}, {"train_loss", summary.final_loss},
                 {"dev_loss", dev}, {"step", global_step_}});
    }
    if (hook_) hook_(phase, epoch, model_);
    if (dev < best - config_.min_delta) {
      best = dev;
      summary.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= config_.patience) {
      summary.stopped_early = true;
      break;
    }
  }
  summary.best_dev = best;
  return summary;
}


PhaseSummary Trainer::finetune_parallel(std::span<const TokenizedPair> pairs, std::span<const TokenizedPair> dev) {
  if (pairs.empty()) throw std::invalid_argument("parallel fine-tuning needs a nonempty parallel corpus");
  const std::string phase = "finetune_parallel";
  begin_phase(phase);
  PhaseSummary summary{phase};
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::size_t batch_index = 0;
  for (std::size_t epoch = 1; epoch <= config_.finetune_epochs && step_budget_left(summary.steps); ++epoch) {
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (const auto& idx : epoch_batches(pairs.size(), order_rng_)) {
      if (!step_budget_left(summary.steps + epoch_steps)) break;
      const bool forward = batch_index++ % 2 == 0;
      const Lang in = forward ? Lang::pri : Lang::sec;
      std::vector<TrainingExample> batch;
      for (auto i : idx) {
        const auto& src = forward ? pairs[i].src : pairs[i].tgt;
        const auto& tgt = forward ? pairs[i].tgt : pairs[i].src;
        batch.push_back({frame_source(src, in), frame_target(tgt), in, other(in), Task::MT});
      }
      epoch_loss += train_batch(batch, phase, {{"batch", batch_index - 1}});
      ++epoch_steps;
    }
    summary.steps += epoch_steps;
    summary.epochs = epoch;
    summary.final_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(1, epoch_steps));
    const double dev_loss = dev.empty() ? summary.final_loss : dev_mt_loss(dev);
    if (log_) {
      log_->add({{"phase", phase}, {"event", "epoch"}, {"epoch", epoch}, {"train_loss", summary.final_loss},
                 {"dev_loss", dev_loss}, {"step", global_step_}});
    }
    if (hook_) hook_(phase, epoch, model_);
    if (dev_loss < best - config_.min_delta) {
      best = dev_loss;
      summary.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= config_.patience) {
      summary.stopped_early = true;
      break;
    }
  }
  summary.best_dev = best;
  return summary;
}

PhaseSummary Trainer::train_qg(std::span<const TokenizedPair> qg_pri, std::span<const TokenizedPair> qg_sec,
                               std::span<const QGPair> dev_pri) {
  if (qg_pri.empty()) throw std::invalid_argument("question-generation training needs primary-language pairs");
  const std::string phase = "train_qg";
  begin_phase(phase);
  PhaseSummary summary{phase};
  auto examples = [](std::span<const TokenizedPair> pairs, const std::vector<std::size_t>& idx, Lang lang) {
    std::vector<TrainingExample> batch;
    for (auto i : idx) batch.push_back({frame_source(pairs[i].src, lang), frame_target(pairs[i].tgt), lang, lang, Task::QG});
    return batch;
  };
  XModel best_model = model_.clone();
  double best = -1.0;
  std::size_t stale = 0;
  std::size_t sec_cursor = 0;
  std::vector<std::vector<std::size_t>> sec_batches;
  for (std::size_t epoch = 1; epoch <= config_.epochs && step_budget_left(summary.steps); ++epoch) {
    double epoch_loss = 0.0;
    std::size_t pri_steps = 0;
    std::size_t epoch_steps = 0;
    for (const auto& idx : epoch_batches(qg_pri.size(), order_rng_)) {
      if (!step_budget_left(summary.steps + epoch_steps)) break;
      epoch_loss += train_batch(examples(qg_pri, idx, Lang::pri), phase, {{"epoch", epoch}});
      ++pri_steps;
      ++epoch_steps;
      if (qg_sec.empty() || !step_budget_left(summary.steps + epoch_steps)) continue;
      if (sec_cursor == sec_batches.size()) {
        sec_batches = epoch_batches(qg_sec.size(), order_rng_);
        sec_cursor = 0;
      }
      train_batch(examples(qg_sec, sec_batches[sec_cursor++], Lang::sec), phase, {{"epoch", epoch}});
      ++epoch_steps;
    }
    summary.steps += epoch_steps;
    summary.epochs = epoch;
    summary.final_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(1, pri_steps));
    const bool last = epoch == config_.epochs || !step_budget_left(summary.steps);
    if (!dev_pri.empty() && (epoch % config_.eval_every == 0 || last)) {
      const double score = dev_bleu4(dev_pri, Lang::pri);
      if (log_) {
        log_->add({{"phase", phase}, {"event", "eval"}, {"epoch", epoch}, {"train_loss", summary.final_loss},
                   {"dev_bleu4", score}, {"step", global_step_}});
      }
      if (score > best) {
        best = score;
        summary.best_epoch = epoch;
        best_model.copy_values_from(model_);
        stale = 0;
      } else if (best > 0.0 && ++stale >= config_.qg_patience) {
        // Patience only runs once some n-gram overlap exists; before that
        // every evaluation ties at zero.
        summary.stopped_early = true;
        if (hook_) hook_(phase, epoch, model_);
        break;
      }
    }
    if (hook_) hook_(phase, epoch, model_);
  }
  if (best >= 0.0) model_.copy_values_from(best_model);
  summary.best_dev = std::max(best, 0.0);
  return summary;
}

}  // namespace clqg
