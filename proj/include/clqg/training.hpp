#pragma once

// Training phases: unsupervised pretraining (denoising autoencoding plus
// back-translation in both languages), optional supervised translation on a
// parallel corpus, and joint supervised question generation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "clqg/adam.hpp"
#include "clqg/bpe.hpp"
#include "clqg/common.hpp"
#include "clqg/data_io.hpp"
#include "clqg/rng.hpp"
#include "clqg/xmodel.hpp"

namespace clqg {

struct TrainConfig {
  std::size_t d_model = 300;
  std::size_t heads = 6;
  std::size_t private_layers = 2;
  std::size_t shared_layers = 2;
  std::size_t ff_dim = 0;  // 0: 4 * d_model
  double dropout = 0.2;
  double lr = 1e-5;
  std::size_t batch_size = 64;
  std::size_t noise_k = 3;
  bool noise_full_shuffle = false;
  std::size_t max_len = 128;
  MaskDiagonal mask_diagonal = MaskDiagonal::strict;

  std::size_t pretrain_epochs = 15;
  std::size_t finetune_epochs = 15;
  std::size_t epochs = 50;  // supervised QG epoch cap
  /// Dev-loss plateau: stop after `patience` epochs without an improvement
  /// of at least min_delta.
  std::size_t patience = 3;
  double min_delta = 1e-3;
  /// QG: dev BLEU-4 every eval_every epochs; stop after qg_patience
  /// evaluations without a new best.
  std::size_t eval_every = 1;
  std::size_t qg_patience = 5;
  std::size_t decode_max_len = 50;
  /// Hard cap on optimizer steps per phase; 0 for none.
  std::size_t max_steps = 0;

  bool carry_adam_moments = false;
  /// Verify routed-group isolation every N steps; 0 disables.
  std::size_t isolation_check_every = 0;
  std::uint64_t seed = 1;

  /// Hyperparameters of the original experiments.
  static TrainConfig full_scale();
  /// Desk-scale preset used for the toy-language runs.
  static TrainConfig toy();

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
  ModelDims model_dims(std::size_t vocab_size) const;
  nlohmann::json to_json() const;
  /// Applies the keys present in j over this config.
  void update_from_json(const nlohmann::json& j);
};

struct TrainingExample {
  TokenIds src_ids;  // framed: <lang_in> ... </s>
  TokenIds tgt_ids;  // framed: <s> ... </s>
  Lang lang_in = Lang::pri;
  Lang lang_out = Lang::pri;
  Task task = Task::QG;

  /// Throws std::invalid_argument when an invariant does not hold.
  void validate() const;
};

/// Bounded-displacement shuffle: item i gets key i + U[0, k+1) and items are
/// reordered by key, so nothing moves more than k places. A leading BOS or
/// language tag and a trailing EOS stay in place.
TokenIds permute_noise(const TokenIds& ids, std::size_t k, Rng& rng);

/// Same shuffle applied to whole words (runs of subwords closed by an
/// end-of-word token), keeping every word's subwords together. k = SIZE_MAX
/// gives an unrestricted shuffle.
TokenIds permute_words(const TokenIds& ids, std::size_t k, Rng& rng, const BpeModel& bpe);

/// Structured records, one per line of JSON. Records stay in memory and are
/// appended to the attached file if there is one.
class TrainingLog {
 public:
  void attach(const std::filesystem::path& path);
  void add(nlohmann::json record);
  const std::vector<nlohmann::json>& records() const { return records_; }
  std::string jsonl() const;

 private:
  std::vector<nlohmann::json> records_;
  std::optional<std::ofstream> file_;
};

struct TokenizedPair {
  TokenIds src;  // bodies, unframed
  TokenIds tgt;
};

/// BPE-encodes lines; lines whose framed form would exceed max_len, or that
/// encode to nothing, are dropped and counted in *dropped.
std::vector<TokenIds> encode_lines(const BpeModel& bpe, std::span<const std::string> lines, std::size_t max_len,
                                   std::size_t* dropped = nullptr);
std::vector<TokenizedPair> encode_pairs(const BpeModel& bpe, std::span<const QGPair> pairs, std::size_t max_len,
                                        std::size_t* dropped = nullptr);
std::vector<TokenizedPair> encode_pairs(const BpeModel& bpe, std::span<const ParallelPair> pairs,
                                        std::size_t max_len, std::size_t* dropped = nullptr);

struct PretrainOptions {
  bool secondary = true;         // denoise the secondary language too
  bool back_translation = true;  // requires secondary
};

struct PhaseSummary {
  std::string phase;
  std::size_t epochs = 0;
  std::size_t steps = 0;
  double final_loss = 0.0;
  double best_dev = 0.0;  // dev loss, or dev BLEU-4 for QG
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

class Trainer {
 public:
  /// phase, epoch (1-based), model
  using EpochHook = std::function<void(const std::string&, std::size_t, const XModel&)>;

  Trainer(XModel& model, const BpeModel& bpe, TrainConfig config, TrainingLog* log = nullptr);

  const TrainConfig& config() const { return config_; }
  XModel& model() { return model_; }
  void set_epoch_hook(EpochHook hook) { hook_ = std::move(hook); }

  /// One optimizer step on routed groups. All examples share task and
  /// languages. Returns the mean token cross-entropy.
  double train_batch(std::span<const TrainingExample> batch, const std::string& phase,
                     const nlohmann::json& extra = nullptr);

  /// AE step: target is each sentence, input its noised copy.
  double denoise_step(std::span<const TokenIds> bodies, Lang lang, const std::string& phase = "pretrain");

  /// BT step towards target_lang: translate the target_lang sentences into
  /// the other language without gradients, then train the other -> target
  /// direction on (pseudo source, original sentence).
  double backtranslate_step(std::span<const TokenIds> bodies, Lang target_lang,
                            const std::string& phase = "pretrain");

  /// Pseudo sources of the last backtranslate_step, in batch order.
  const std::vector<TokenIds>& last_pseudo_sources() const { return last_pseudo_; }
  std::size_t empty_translations() const { return empty_translations_; }

  PhaseSummary pretrain(std::span<const TokenIds> mono_pri, std::span<const TokenIds> mono_sec,
                        PretrainOptions options = {}, std::span<const TokenIds> dev_pri = {},
                        std::span<const TokenIds> dev_sec = {});

  /// Alternates directions by batch parity: even batches pri -> sec, odd
  /// batches sec -> pri. pairs hold (primary body, secondary body).
  PhaseSummary finetune_parallel(std::span<const TokenizedPair> pairs, std::span<const TokenizedPair> dev = {});

  /// Alternates a primary batch with a secondary batch (when secondary
  /// pairs are given). Keeps the parameters with the best dev BLEU-4.
  /// Throws std::invalid_argument without primary pairs.
  PhaseSummary train_qg(std::span<const TokenizedPair> qg_pri, std::span<const TokenizedPair> qg_sec,
                        std::span<const QGPair> dev_pri);

  /// Corpus BLEU-4 of greedy predictions on dev pairs.
  double dev_bleu4(std::span<const QGPair> dev, Lang lang) const;

  /// Mean eval-mode cross-entropy of an AE pass with seeded noise.
  double dev_ae_loss(std::span<const TokenIds> bodies, Lang lang) const;
  double dev_mt_loss(std::span<const TokenizedPair> pairs) const;

  std::uint64_t global_step() const { return global_step_; }

 private:
  void begin_phase(const std::string& phase);
  std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, Rng& rng) const;
  TokenIds noise(const TokenIds& body, Rng& rng) const;
  double eval_loss(std::span<const TrainingExample> examples) const;
  bool step_budget_left(std::size_t steps) const;

  XModel& model_;
  const BpeModel& bpe_;
  TrainConfig config_;
  TrainingLog* log_;
  EpochHook hook_;
  AdamOptimizer<float> optimizer_;
  Rng order_rng_;
  Rng noise_rng_;
  Rng dropout_rng_;
  std::uint64_t global_step_ = 0;
  std::size_t empty_translations_ = 0;
  std::vector<TokenIds> last_pseudo_;
};

}  // namespace clqg
