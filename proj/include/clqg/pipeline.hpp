#pragma once

// Model variants and the end-to-end toy-language pipeline.
//
//   transformer              QG on primary pairs from random initialization
//   transformer+pretraining  primary-language denoising, then primary QG
//   clqg                     denoising + back-translation in both languages,
//                            then joint QG in both languages
//   clqg+parallel            clqg with parallel fine-tuning before QG

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "clqg/bpe.hpp"
#include "clqg/data_io.hpp"
#include "clqg/training.hpp"
#include "clqg/xmodel.hpp"

namespace clqg {

enum class Variant : std::uint8_t { transformer, transformer_pretraining, clqg, clqg_parallel };

inline constexpr std::array<Variant, 4> kAllVariants{Variant::transformer, Variant::transformer_pretraining,
                                                     Variant::clqg, Variant::clqg_parallel};

std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view text);

struct VariantPlan {
  bool pretrain = false;
  PretrainOptions pretrain_options;
  bool finetune_parallel = false;
  bool secondary_qg = false;
};

VariantPlan variant_plan(Variant variant);

/// Toy-language suite shared by all variants: one generated corpus set and
/// one BPE model, with a fixed primary dev set.
struct ToySuiteConfig {
  ToyConfig toy;
  std::size_t bpe_merges = 1000;
  std::size_t dev_pairs = 200;
  TrainConfig train;

  /// vocab 600, 3000 monolingual sentences per language, 1200 primary and
  /// 2000 secondary QG pairs, 1500 parallel pairs; toy training preset.
  static ToySuiteConfig standard();
  nlohmann::json to_json() const;
};

struct ToySuite {
  ToySuiteConfig config;
  ToyCorpora corpora;
  BpeModel bpe;
  std::vector<TokenIds> mono_pri;
  std::vector<TokenIds> mono_sec;
  std::vector<QGPair> dev_pri;     // the first dev_pairs primary pairs
  std::vector<QGPair> train_pool;  // the remaining primary pairs
  std::vector<TokenizedPair> qg_sec;
  std::vector<TokenizedPair> parallel;

  /// First n pairs of the training pool, encoded. Throws when n exceeds it.
  std::vector<TokenizedPair> primary_train(std::size_t n) const;
};

/// BPE is learned on every generated text (monolingual sentences and both
/// sides of every QG pair).
ToySuite build_toy_suite(const ToySuiteConfig& config);

struct ToyRun {
  Variant variant = Variant::clqg;
  std::uint64_t seed = 1;
  std::size_t primary_pairs = 0;
  bool secondary_qg = false;
  double dev_bleu4 = 0.0;
  PhaseSummary pretrain;
  PhaseSummary finetune;
  PhaseSummary qg;
  double seconds = 0.0;

  nlohmann::json to_json() const;
};

/// Model after the variant's unsupervised phases (and parallel fine-tuning
/// for clqg+parallel). For the plain transformer this is the seeded
/// initialization.
XModel prepare_toy_model(const ToySuite& suite, Variant variant, std::uint64_t seed, TrainingLog* log = nullptr,
                         ToyRun* run = nullptr);

/// Supervised QG from a prepared model; the model is left at the parameters
/// with the best dev BLEU-4.
ToyRun finish_toy_run(const ToySuite& suite, Variant variant, std::uint64_t seed, XModel& model,
                      std::size_t primary_pairs, bool secondary_qg, TrainingLog* log = nullptr,
                      ToyRun partial = {});

/// prepare_toy_model followed by finish_toy_run with the variant's own
/// secondary-QG setting.
ToyRun run_toy(const ToySuite& suite, Variant variant, std::uint64_t seed, std::size_t primary_pairs,
               TrainingLog* log = nullptr, XModel* final_model = nullptr);

}  // namespace clqg
