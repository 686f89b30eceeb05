#include "clqg/pipeline.hpp"

#include <chrono>
#include <stdexcept>

namespace clqg {
namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

nlohmann::json summary_json(const PhaseSummary& s) {
  return {{"phase", s.phase},         {"epochs", s.epochs},         {"steps", s.steps},
          {"final_loss", s.final_loss}, {"best_dev", s.best_dev},     {"best_epoch", s.best_epoch},
          {"stopped_early", s.stopped_early}};
}

TrainConfig seeded(TrainConfig config, std::uint64_t seed) {
  config.seed = seed;
  return config;
}

}  // namespace

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::transformer:
      return "transformer";
    case Variant::transformer_pretraining:
      return "transformer+pretraining";
    case Variant::clqg:
      return "clqg";
    case Variant::clqg_parallel:
      return "clqg+parallel";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  for (auto v : kAllVariants) {
    if (to_string(v) == text) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(text) +
                              "' (expected transformer, transformer+pretraining, clqg or clqg+parallel)");
}

VariantPlan variant_plan(Variant variant) {
  VariantPlan plan;
  switch (variant) {
    case Variant::transformer:
      break;
    case Variant::transformer_pretraining:
      plan.pretrain = true;
      plan.pretrain_options = {false, false};
      break;
    case Variant::clqg:
      plan.pretrain = true;
      plan.secondary_qg = true;
      break;
    case Variant::clqg_parallel:
      plan.pretrain = true;
      plan.finetune_parallel = true;
      plan.secondary_qg = true;
      break;
  }
  return plan;
}

ToySuiteConfig ToySuiteConfig::standard() {
  ToySuiteConfig c;
  c.toy.seed = 7;
  c.toy.vocab_size = 600;
  c.toy.n_pairs = 1500;
  c.toy.n_mono = 3000;
  c.toy.n_qg_pri = 1200;
  c.toy.n_qg_sec = 2000;
  c.train = TrainConfig::toy();
  return c;
}

nlohmann::json ToySuiteConfig::to_json() const {
  return {{"toy",
           {{"seed", toy.seed},
            {"vocab_size", toy.vocab_size},
            {"n_pairs", toy.n_pairs},
            {"n_mono", toy.n_mono},
            {"n_parallel", toy.n_parallel},
            {"n_qg_pri", toy.n_qg_pri},
            {"n_qg_sec", toy.n_qg_sec},
            {"min_words", toy.min_words},
            {"max_words", toy.max_words},
            {"function_words", toy.function_words},
            {"function_rate", toy.function_rate},
            {"zipf_exponent", toy.zipf_exponent},
            {"question_words", toy.question_words},
            {"relation", toy.relation == ToyRelation::copy ? "copy" : "relabel_reverse"}}},
          {"bpe_merges", bpe_merges},
          {"dev_pairs", dev_pairs},
          {"train", train.to_json()}};
}

std::vector<TokenizedPair> ToySuite::primary_train(std::size_t n) const {
  if (n > train_pool.size()) {
    throw std::invalid_argument("asked for " + std::to_string(n) + " primary pairs but the pool holds " +
                                std::to_string(train_pool.size()));
  }
  return encode_pairs(bpe, std::span<const QGPair>(train_pool).first(n), config.train.max_len);
}

ToySuite build_toy_suite(const ToySuiteConfig& config) {
  config.train.validate();
  ToySuite suite;
  suite.config = config;
  suite.corpora = gen_toy_languages(config.toy);
  const auto& c = suite.corpora;
  if (c.qg_pri.size() <= config.dev_pairs) {
    throw std::invalid_argument("toy suite needs more primary QG pairs than dev_pairs");
  }

  std::vector<std::string> text(c.mono_pri.lines);
  text.insert(text.end(), c.mono_sec.lines.begin(), c.mono_sec.lines.end());
  for (const auto* qg : {&c.qg_pri, &c.qg_sec}) {
    for (const auto& p : qg->pairs) {
      text.push_back(p.sentence);
      text.push_back(p.question);
    }
  }
  const std::vector<std::vector<std::string>> corpora{text};
  suite.bpe = BpeModel::learn(corpora, config.bpe_merges);

  const auto max_len = config.train.max_len;
  suite.mono_pri = encode_lines(suite.bpe, c.mono_pri.lines, max_len);
  suite.mono_sec = encode_lines(suite.bpe, c.mono_sec.lines, max_len);
  suite.dev_pri.assign(c.qg_pri.pairs.begin(), c.qg_pri.pairs.begin() + static_cast<std::ptrdiff_t>(config.dev_pairs));
  suite.train_pool.assign(c.qg_pri.pairs.begin() + static_cast<std::ptrdiff_t>(config.dev_pairs), c.qg_pri.pairs.end());
  suite.qg_sec = encode_pairs(suite.bpe, std::span<const QGPair>(c.qg_sec.pairs), max_len);
  suite.parallel = encode_pairs(suite.bpe, std::span<const ParallelPair>(c.parallel.pairs), max_len);
  return suite;
}

nlohmann::json ToyRun::to_json() const {
  return {{"variant", to_string(variant)},       {"seed", seed},
          {"primary_pairs", primary_pairs},      {"secondary_qg", secondary_qg},
          {"dev_bleu4", dev_bleu4},              {"pretrain", summary_json(pretrain)},
          {"finetune", summary_json(finetune)},  {"qg", summary_json(qg)},
          {"seconds", seconds}};
}

XModel prepare_toy_model(const ToySuite& suite, Variant variant, std::uint64_t seed, TrainingLog* log, ToyRun* run) {
  const auto start = std::chrono::steady_clock::now();
  const TrainConfig config = seeded(suite.config.train, seed);
  XModel model(config.model_dims(suite.bpe.vocab_size()), derive_seed(seed, "init"));
  const auto plan = variant_plan(variant);
  Trainer trainer(model, suite.bpe, config, log);
  PhaseSummary pretrain, finetune;
  if (plan.pretrain) pretrain = trainer.pretrain(suite.mono_pri, suite.mono_sec, plan.pretrain_options);
  if (plan.finetune_parallel) finetune = trainer.finetune_parallel(suite.parallel);
  if (run) {
    run->variant = variant;
    run->seed = seed;
    run->pretrain = pretrain;
    run->finetune = finetune;
    run->seconds += seconds_since(start);
  }
  return model;
}

ToyRun finish_toy_run(const ToySuite& suite, Variant variant, std::uint64_t seed, XModel& model,
                      std::size_t primary_pairs, bool secondary_qg, TrainingLog* log, ToyRun partial) {
  const auto start = std::chrono::steady_clock::now();
  ToyRun run = std::move(partial);
  run.variant = variant;
  run.seed = seed;
  run.primary_pairs = primary_pairs;
  run.secondary_qg = secondary_qg;
  Trainer trainer(model, suite.bpe, seeded(suite.config.train, seed), log);
  const auto primary = suite.primary_train(primary_pairs);
  const std::vector<TokenizedPair> none;
  run.qg = trainer.train_qg(primary, secondary_qg ? std::span<const TokenizedPair>(suite.qg_sec) : none, suite.dev_pri);
  run.dev_bleu4 = run.qg.best_dev;
  run.seconds += seconds_since(start);
  return run;
}

ToyRun run_toy(const ToySuite& suite, Variant variant, std::uint64_t seed, std::size_t primary_pairs,
               TrainingLog* log, XModel* final_model) {
  ToyRun partial;
  XModel model = prepare_toy_model(suite, variant, seed, log, &partial);
  auto run = finish_toy_run(suite, variant, seed, model, primary_pairs, variant_plan(variant).secondary_qg, log,
                            std::move(partial));
  if (final_model) *final_model = std::move(model);
  return run;
}

}  // namespace clqg
