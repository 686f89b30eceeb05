// clqg: command-line driver for the cross-lingual question-generation pipeline.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
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
#include "clqg/xmodel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace clqg;

namespace {

/// Usage or prerequisite problem: reported without a stack of context.
struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  std::string config_file;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--out-dir", c.out_dir, "Directory for outputs")->capture_default_str();
  app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  app->add_option("--config", c.config_file, "Config file of 'key = value' lines");
  app->add_option("--set", c.overrides, "Config override KEY=VALUE (repeatable; wins over --config)");
}

json parse_scalar(std::string value) {
  const auto first = value.find_first_not_of(" \t");
  const auto last = value.find_last_not_of(" \t");
  value = first == std::string::npos ? "" : value.substr(first, last - first + 1);
  if (value.size() >= 2 && value.front() == '"' && value.back() == '"') return value.substr(1, value.size() - 2);
  if (value == "true") return true;
  if (value == "false") return false;
  const auto parsed = json::parse(value, nullptr, false);
  if (!parsed.is_discarded() && parsed.is_number()) return parsed;
  return value;
}

void apply_assignment(json& into, const std::string& line, const std::string& where) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw CliError(where + ": expected 'key = value', got '" + line + "'");
  std::string key = line.substr(0, eq);
  key.erase(0, key.find_first_not_of(" \t"));
  key.erase(key.find_last_not_of(" \t") + 1);
  into[key] = parse_scalar(line.substr(eq + 1));
}

/// TrainConfig from defaults, then the config file, then --set overrides.
TrainConfig load_config(const Common& c, TrainConfig config) {
  json settings = json::object();
  if (!c.config_file.empty()) {
    std::ifstream in(c.config_file);
    if (!in) throw CliError("cannot read config file " + c.config_file);
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      apply_assignment(settings, line, c.config_file + ":" + std::to_string(n));
    }
  }
  for (const auto& o : c.overrides) apply_assignment(settings, o, "--set");
  config.update_from_json(settings);
  config.seed = c.seed;
  config.validate();
  return config;
}

void require_file(const std::string& path, const std::string& what, const std::string& producer) {
  if (path.empty()) throw CliError("missing " + what + " (produce it with `clqg " + producer + "`)");
  if (!fs::exists(path)) {
    throw CliError(what + " '" + path + "' not found (produce it with `clqg " + producer + "`)");
  }
}

/// Per-run record: config hash, seed, and git blob hashes of inputs and outputs.
class Manifest {
 public:
  Manifest(std::string command, const Common& common) : command_(std::move(command)), common_(common) {}

  void input(const std::string& role, const std::string& path) {
    if (!path.empty()) inputs_[role] = {{"path", path}, {"git_blob", git_blob_hash_file(path)}};
  }
  void output(const std::string& role, const fs::path& path) {
    outputs_[role] = {{"path", path.string()}, {"git_blob", git_blob_hash_file(path)}};
  }
  void set(const std::string& key, json value) { extra_[key] = std::move(value); }

  void write() const {
    json m = {{"command", command_}, {"seed", common_.seed}, {"inputs", inputs_}, {"outputs", outputs_}};
    if (extra_.contains("config")) m["config_hash"] = sha1_hex(extra_["config"].dump());
    m.update(extra_);
    const auto path = fs::path(common_.out_dir) / (command_ + ".manifest.json");
    write_file(path, m.dump(2) + "\n");
    std::cout << "manifest: " << path.string() << "\n";
  }

 private:
  std::string command_;
  const Common& common_;
  json inputs_ = json::object();
  json outputs_ = json::object();
  json extra_ = json::object();
};

fs::path ensure_out_dir(const Common& c) {
  fs::create_directories(c.out_dir);
  return c.out_dir;
}

std::string bpe_hash(const BpeModel& bpe) { return sha1_hex(bpe.serialize()); }

/// Loads a checkpoint and checks it was trained with this BPE model.
XModel load_model(const std::string& path, const BpeModel& bpe) {
  const auto ckpt = Checkpoint::load(path);
  if (ckpt.manifest.value("vocab_hash", "") != bpe_hash(bpe)) {
    throw CliError("checkpoint " + path + " was trained with a different BPE model");
  }
  return XModel::from_checkpoint(ckpt);
}

/// Architecture fields follow the checkpoint, not the config.
void adopt_dims(TrainConfig& config, const ModelDims& dims) {
  config.d_model = dims.d_model;
  config.heads = dims.heads;
  config.ff_dim = dims.ff_dim;
  config.private_layers = dims.private_layers;
  config.shared_layers = dims.shared_layers;
  config.max_len = dims.max_len;
  config.mask_diagonal = dims.mask_diagonal;
}

/// Prints epoch and evaluation records as they arrive.
void echo_progress(Trainer& trainer, const TrainingLog& log) {
  trainer.set_epoch_hook([&log](const std::string&, std::size_t, const XModel&) {
    for (auto it = log.records().rbegin(); it != log.records().rend(); ++it) {
      if (it->contains("event")) {
        std::cout << it->dump() << "\n";
        break;
      }
    }
  });
}

std::vector<std::string> mono_lines(const std::string& path) { return load_mono(path).lines; }

// ---------------------------------------------------------------------------

struct ToygenArgs {
  std::size_t vocab = 600, pairs = 1500, mono = 3000, qg_pri = 1200, qg_sec = 2000;
  std::string relation = "relabel_reverse";
};

void cmd_toygen(const Common& c, const ToygenArgs& a) {
  ToyConfig config;
  config.seed = c.seed;
  config.vocab_size = a.vocab;
  config.n_pairs = a.pairs;
  config.n_mono = a.mono;
  config.n_qg_pri = a.qg_pri;
  config.n_qg_sec = a.qg_sec;
  if (a.relation == "copy") config.relation = ToyRelation::copy;
  else if (a.relation != "relabel_reverse") throw CliError("--relation must be relabel_reverse or copy");
  const auto toy = gen_toy_languages(config);
  const auto dir = ensure_out_dir(c);
  Manifest manifest("toygen", c);
  auto save = [&](const std::string& name, const auto& corpus) {
    save_corpus(dir / name, corpus);
    manifest.output(name, dir / name);
    std::cout << name << ": " << corpus.size() << " lines\n";
  };
  save("mono_pri.jsonl", toy.mono_pri);
  save("mono_sec.jsonl", toy.mono_sec);
  save("parallel.jsonl", toy.parallel);
  save("qg_sec.jsonl", toy.qg_sec);
  // Same proportions as the 4000 / 1300 / 1255 reference split.
  const auto splits = split_corpus(toy.qg_pri.pairs, {4000.0 / 6555, 1300.0 / 6555, 1255.0 / 6555},
                                   derive_seed(c.seed, "toygen.split"));
  save("qg_pri_train.jsonl", QGCorpus{splits.train});
  save("qg_pri_dev.jsonl", QGCorpus{splits.dev});
  save("qg_pri_test.jsonl", QGCorpus{splits.test});
  manifest.set("toy", {{"vocab_size", a.vocab}, {"n_pairs", a.pairs}, {"n_mono", a.mono}, {"n_qg_pri", a.qg_pri},
                       {"n_qg_sec", a.qg_sec}, {"relation", a.relation}});
  manifest.write();
}

void cmd_validate(const std::string& kind, const std::string& input) {
  require_file(input, "corpus file", "toygen");
  const auto report = validate_corpus_file(input, parse_corpus_kind(kind));
  std::cout << input << ": " << report.valid << "/" << report.lines << " valid " << kind << " lines\n";
  for (std::size_t i = 0; i < report.bad_lines.size(); ++i) {
    std::cout << "  line " << report.bad_lines[i] << ": " << report.problems[i] << "\n";
  }
  if (!report.ok()) throw CliError(input + " failed validation");
}

struct BpeArgs {
  std::vector<std::string> mono, qg;
  std::size_t merges = 512;
};

void cmd_bpe_learn(const Common& c, const BpeArgs& a) {
  if (a.mono.empty() && a.qg.empty()) throw CliError("give at least one --mono or --qg corpus");
  Manifest manifest("bpe-learn", c);
  std::vector<std::vector<std::string>> corpora;
  for (const auto& path : a.mono) {
    require_file(path, "monolingual corpus", "toygen");
    corpora.push_back(mono_lines(path));
    manifest.input("mono:" + path, path);
  }
  for (const auto& path : a.qg) {
    require_file(path, "QG corpus", "toygen");
    std::vector<std::string> lines;
    for (const auto& p : load_qg(path).pairs) {
      lines.push_back(p.sentence);
      lines.push_back(p.question);
    }
    corpora.push_back(std::move(lines));
    manifest.input("qg:" + path, path);
  }
  const auto bpe = BpeModel::learn(corpora, a.merges);
  const auto out = ensure_out_dir(c) / "bpe.txt";
  bpe.save(out);
  std::cout << "learned " << bpe.num_merges() << " merges; vocabulary " << bpe.vocab_size() << "\n";
  manifest.set("merges_requested", a.merges);
  manifest.set("merges_learned", bpe.num_merges());
  manifest.output("bpe", out);
  manifest.write();
}

struct PretrainArgs {
  std::string bpe, mono_pri, mono_sec, dev_pri, dev_sec, variant = "clqg";
};

void cmd_pretrain(const Common& c, const PretrainArgs& a) {
  const auto variant = parse_variant(a.variant);
  const auto plan = variant_plan(variant);
  if (!plan.pretrain) throw CliError("variant " + a.variant + " has no pretraining phase; run `clqg train-qg` directly");
  require_file(a.bpe, "BPE model", "bpe-learn");
  require_file(a.mono_pri, "primary monolingual corpus", "toygen");
  if (plan.pretrain_options.secondary) require_file(a.mono_sec, "secondary monolingual corpus", "toygen");
  auto config = load_config(c, TrainConfig::toy());
  const auto bpe = BpeModel::load(a.bpe);
  const auto dir = ensure_out_dir(c);
  TrainingLog log;
  log.attach(dir / "pretrain.log.jsonl");
  XModel model(config.model_dims(bpe.vocab_size()), derive_seed(c.seed, "init"));
  Trainer trainer(model, bpe, config, &log);
  echo_progress(trainer, log);
  const auto pri = encode_lines(bpe, mono_lines(a.mono_pri), config.max_len);
  const auto sec = plan.pretrain_options.secondary ? encode_lines(bpe, mono_lines(a.mono_sec), config.max_len)
                                                   : std::vector<TokenIds>{};
  const auto dev_pri = a.dev_pri.empty() ? std::vector<TokenIds>{} : encode_lines(bpe, mono_lines(a.dev_pri), config.max_len);
  const auto dev_sec = a.dev_sec.empty() ? std::vector<TokenIds>{} : encode_lines(bpe, mono_lines(a.dev_sec), config.max_len);
  const auto summary = trainer.pretrain(pri, sec, plan.pretrain_options, dev_pri, dev_sec);
  std::cout << "pretrain: " << summary.epochs << " epochs, " << summary.steps << " steps, final loss "
            << summary.final_loss << (summary.stopped_early ? " (converged)" : "") << "\n";
  const auto out = dir / "pretrain.ckpt";
  model.save(out, bpe_hash(bpe));
  Manifest manifest("pretrain", c);
  for (const auto& [role, path] : {std::pair{"bpe", a.bpe}, {"mono_pri", a.mono_pri}, {"mono_sec", a.mono_sec},
                                   {"dev_pri", a.dev_pri}, {"dev_sec", a.dev_sec}}) {
    if (role == std::string("mono_sec") && !plan.pretrain_options.secondary) continue;
    manifest.input(role, path);
  }
  manifest.set("variant", a.variant);
  manifest.set("config", config.to_json());
  manifest.output("checkpoint", out);
  manifest.output("log", dir / "pretrain.log.jsonl");
  manifest.write();
}

struct FinetuneArgs {
  std::string bpe, checkpoint, parallel, dev;
};

void cmd_finetune(const Common& c, const FinetuneArgs& a) {
  require_file(a.bpe, "BPE model", "bpe-learn");
  require_file(a.checkpoint, "pretrained checkpoint", "pretrain --variant clqg+parallel");
  require_file(a.parallel, "parallel corpus", "toygen");
  auto config = load_config(c, TrainConfig::toy());
  const auto bpe = BpeModel::load(a.bpe);
  XModel model = load_model(a.checkpoint, bpe);
  adopt_dims(config, model.dims());
  const auto dir = ensure_out_dir(c);
  TrainingLog log;
  log.attach(dir / "finetune.log.jsonl");
  Trainer trainer(model, bpe, config, &log);
  echo_progress(trainer, log);
  const auto pairs = encode_pairs(bpe, std::span<const ParallelPair>(load_parallel(a.parallel).pairs), config.max_len);
  std::vector<TokenizedPair> dev;
  if (!a.dev.empty()) dev = encode_pairs(bpe, std::span<const ParallelPair>(load_parallel(a.dev).pairs), config.max_len);
  const auto summary = trainer.finetune_parallel(pairs, dev);
  std::cout << "finetune-parallel: " << summary.epochs << " epochs, " << summary.steps << " steps\n";
  const auto out = dir / "finetune.ckpt";
  model.save(out, bpe_hash(bpe));
  Manifest manifest("finetune-parallel", c);
  manifest.input("bpe", a.bpe);
  manifest.input("checkpoint", a.checkpoint);
  manifest.input("parallel", a.parallel);
  manifest.input("dev", a.dev);
  manifest.set("config", config.to_json());
  manifest.output("checkpoint", out);
  manifest.output("log", dir / "finetune.log.jsonl");
  manifest.write();
}

struct TrainQgArgs {
  std::string bpe, checkpoint, qg_pri, qg_sec, dev, variant = "clqg";
  bool no_secondary = false;
};

void cmd_train_qg(const Common& c, const TrainQgArgs& a) {
  const auto variant = parse_variant(a.variant);
  const auto plan = variant_plan(variant);
  require_file(a.bpe, "BPE model", "bpe-learn");
  require_file(a.qg_pri, "primary QG corpus", "toygen");
  require_file(a.dev, "primary dev QG corpus", "toygen");
  if (plan.pretrain) {
    const auto producer = plan.finetune_parallel ? "finetune-parallel" : "pretrain --variant " + a.variant;
    require_file(a.checkpoint, "initial checkpoint for variant " + a.variant, producer);
  } else if (!a.checkpoint.empty()) {
    throw CliError("variant transformer trains from scratch; drop --checkpoint");
  }
  const bool use_secondary = plan.secondary_qg && !a.no_secondary;
  if (use_secondary) require_file(a.qg_sec, "secondary QG corpus (or pass --no-secondary)", "toygen");

  auto config = load_config(c, TrainConfig::toy());
  const auto bpe = BpeModel::load(a.bpe);
  std::optional<XModel> model;
  if (plan.pretrain) {
    model.emplace(load_model(a.checkpoint, bpe));
    adopt_dims(config, model->dims());
  } else {
    model.emplace(config.model_dims(bpe.vocab_size()), derive_seed(c.seed, "init"));
  }
  const auto dir = ensure_out_dir(c);
  TrainingLog log;
  log.attach(dir / "train_qg.log.jsonl");
  Trainer trainer(*model, bpe, config, &log);
  echo_progress(trainer, log);
  const auto pri = encode_pairs(bpe, std::span<const QGPair>(load_qg(a.qg_pri).pairs), config.max_len);
  std::vector<TokenizedPair> sec;
  if (use_secondary) sec = encode_pairs(bpe, std::span<const QGPair>(load_qg(a.qg_sec).pairs), config.max_len);
  const auto dev = load_qg(a.dev).pairs;
  const auto summary = trainer.train_qg(pri, sec, dev);
  std::cout << "train-qg: " << summary.epochs << " epochs, " << summary.steps << " steps, best dev BLEU-4 "
            << summary.best_dev << " at epoch " << summary.best_epoch << "\n";
  const auto out = dir / "qg.ckpt";
  model->save(out, bpe_hash(bpe));
  Manifest manifest("train-qg", c);
  manifest.input("bpe", a.bpe);
  manifest.input("checkpoint", a.checkpoint);
  manifest.input("qg_pri", a.qg_pri);
  if (use_secondary) manifest.input("qg_sec", a.qg_sec);
  manifest.input("dev", a.dev);
  manifest.set("variant", a.variant);
  manifest.set("secondary_qg", use_secondary);
  manifest.set("config", config.to_json());
  manifest.set("best_dev_bleu4", summary.best_dev);
  manifest.output("checkpoint", out);
  manifest.output("log", dir / "train_qg.log.jsonl");
  manifest.write();
}

struct GenerateArgs {
  std::string bpe, checkpoint, input, kind = "qg", lang = "pri";
  std::size_t max_len = 0;  // 0: kDefaultMaxDecodeLen, capped by the model
};

void cmd_generate(const Common& c, const GenerateArgs& a) {
  require_file(a.bpe, "BPE model", "bpe-learn");
  require_file(a.checkpoint, "trained checkpoint", "train-qg");
  require_file(a.input, "input corpus", "toygen");
  const auto bpe = BpeModel::load(a.bpe);
  const XModel model = load_model(a.checkpoint, bpe);
  std::vector<std::string> inputs;
  const auto kind = parse_corpus_kind(a.kind);
  if (kind == CorpusKind::qg) {
    for (const auto& p : load_qg(a.input).pairs) inputs.push_back(p.sentence);
  } else if (kind == CorpusKind::mono) {
    inputs = mono_lines(a.input);
  } else {
    throw CliError("generate reads qg or mono corpora");
  }
  const auto max_len = a.max_len ? a.max_len : std::min(kDefaultMaxDecodeLen, model.dims().max_len - 1);
  const auto results = batch_generate(model, bpe, inputs, parse_lang(a.lang), max_len);
  const auto out = ensure_out_dir(c) / "generations.jsonl";
  write_file(out, generation_jsonl(inputs, results));
  std::size_t failed = 0;
  for (const auto& r : results) failed += !r.ok();
  std::cout << "generated " << results.size() - failed << " of " << results.size() << " lines -> " << out.string()
            << "\n";
  Manifest manifest("generate", c);
  manifest.input("bpe", a.bpe);
  manifest.input("checkpoint", a.checkpoint);
  manifest.input("input", a.input);
  manifest.set("max_len", max_len);
  manifest.set("lang", a.lang);
  manifest.output("generations", out);
  manifest.write();
}

/// The "prediction" field of every record of a generation file.
std::vector<std::string> read_predictions(const std::string& path) {
  std::vector<std::string> out;
  std::ifstream in(path);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("prediction")) {
      throw CliError(path + ":" + std::to_string(n) + ": not a generation record");
    }
    out.push_back(j["prediction"].get<std::string>());
  }
  return out;
}

bool is_generation_file(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  const auto j = json::parse(line, nullptr, false);
  return !j.is_discarded() && j.is_object() && j.contains("prediction");
}

struct EvaluateArgs {
  std::string predictions, references;
};

void cmd_evaluate(const Common& c, const EvaluateArgs& a) {
  require_file(a.predictions, "predictions file", "generate");
  require_file(a.references, "reference QG corpus", "toygen");
  const auto hyps = read_predictions(a.predictions);
  std::vector<std::string> refs;
  if (is_generation_file(a.references)) {
    refs = read_predictions(a.references);
  } else {
    for (const auto& p : load_qg(a.references).pairs) refs.push_back(p.question);
  }
  if (hyps.size() != refs.size()) {
    throw CliError(std::to_string(hyps.size()) + " predictions for " + std::to_string(refs.size()) + " references");
  }
  const auto report = evaluate_texts(hyps, refs);
  std::cout << report.table();
  const auto out = ensure_out_dir(c) / "report.json";
  write_file(out, report.to_json().dump(2) + "\n");
  Manifest manifest("evaluate", c);
  manifest.input("predictions", a.predictions);
  manifest.input("references", a.references);
  manifest.output("report", out);
  manifest.write();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-lingual question generation: toy data, BPE, pretraining, fine-tuning, QG, evaluation"};
  app.require_subcommand(1);

  Common common;
  ToygenArgs toygen;
  auto* toy_cmd = app.add_subcommand("toygen", "Generate the synthetic toy language pair");
  add_common(toy_cmd, common);
  toy_cmd->add_option("--vocab", toygen.vocab, "Content words per language")->capture_default_str();
  toy_cmd->add_option("--pairs", toygen.pairs, "Parallel pairs")->capture_default_str();
  toy_cmd->add_option("--mono", toygen.mono, "Monolingual sentences per language")->capture_default_str();
  toy_cmd->add_option("--qg-pri", toygen.qg_pri, "Primary QG pairs (before splitting)")->capture_default_str();
  toy_cmd->add_option("--qg-sec", toygen.qg_sec, "Secondary QG pairs")->capture_default_str();
  toy_cmd->add_option("--relation", toygen.relation, "relabel_reverse or copy")->capture_default_str();

  std::string validate_kind = "qg", validate_input;
  auto* validate_cmd = app.add_subcommand("validate", "Check a corpus file against its schema");
  validate_cmd->add_option("--kind", validate_kind, "mono, qg or parallel")->capture_default_str();
  validate_cmd->add_option("input", validate_input, "Corpus file")->required();

  BpeArgs bpe;
  auto* bpe_cmd = app.add_subcommand("bpe-learn", "Learn a joint BPE model");
  add_common(bpe_cmd, common);
  bpe_cmd->add_option("--mono", bpe.mono, "Monolingual corpora");
  bpe_cmd->add_option("--qg", bpe.qg, "QG corpora (both sides are used)");
  bpe_cmd->add_option("--merges", bpe.merges, "Merge operations")->capture_default_str();

  PretrainArgs pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Unsupervised pretraining (denoising and back-translation)");
  add_common(pre_cmd, common);
  pre_cmd->add_option("--bpe", pre.bpe, "BPE model file");
  pre_cmd->add_option("--mono-pri", pre.mono_pri, "Primary monolingual corpus");
  pre_cmd->add_option("--mono-sec", pre.mono_sec, "Secondary monolingual corpus");
  pre_cmd->add_option("--dev-pri", pre.dev_pri, "Primary dev sentences for the convergence check");
  pre_cmd->add_option("--dev-sec", pre.dev_sec, "Secondary dev sentences");
  pre_cmd->add_option("--variant", pre.variant, "transformer+pretraining, clqg or clqg+parallel")->capture_default_str();

  FinetuneArgs ft;
  auto* ft_cmd = app.add_subcommand("finetune-parallel", "Supervised translation on a parallel corpus");
  add_common(ft_cmd, common);
  ft_cmd->add_option("--bpe", ft.bpe, "BPE model file");
  ft_cmd->add_option("--checkpoint", ft.checkpoint, "Pretrained checkpoint");
  ft_cmd->add_option("--parallel", ft.parallel, "Parallel corpus");
  ft_cmd->add_option("--dev", ft.dev, "Parallel dev corpus");

  TrainQgArgs qg;
  auto* qg_cmd = app.add_subcommand("train-qg", "Supervised question generation");
  add_common(qg_cmd, common);
  qg_cmd->add_option("--bpe", qg.bpe, "BPE model file");
  qg_cmd->add_option("--checkpoint", qg.checkpoint, "Initial checkpoint (pretrained variants)");
  qg_cmd->add_option("--qg-pri", qg.qg_pri, "Primary QG training pairs");
  qg_cmd->add_option("--qg-sec", qg.qg_sec, "Secondary QG training pairs");
  qg_cmd->add_option("--dev", qg.dev, "Primary QG dev pairs");
  qg_cmd->add_option("--variant", qg.variant, "Model variant")->capture_default_str();
  qg_cmd->add_flag("--no-secondary", qg.no_secondary, "Ignore secondary QG pairs (primary-only ablation)");

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Greedy question generation");
  add_common(gen_cmd, common);
  gen_cmd->add_option("--bpe", gen.bpe, "BPE model file");
  gen_cmd->add_option("--checkpoint", gen.checkpoint, "Trained checkpoint");
  gen_cmd->add_option("--input", gen.input, "Input corpus");
  gen_cmd->add_option("--kind", gen.kind, "Input corpus kind: qg or mono")->capture_default_str();
  gen_cmd->add_option("--lang", gen.lang, "pri or sec")->capture_default_str();
  gen_cmd->add_option("--max-len", gen.max_len, "Maximum generated subwords (default: 50, or the model limit)");

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "BLEU-1..4, METEOR (simplified), ROUGE-L");
  add_common(ev_cmd, common);
  ev_cmd->add_option("--predictions", ev.predictions, "generations.jsonl");
  ev_cmd->add_option("--references", ev.references, "QG corpus with reference questions, or another generation file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*toy_cmd) cmd_toygen(common, toygen);
    else if (*validate_cmd) cmd_validate(validate_kind, validate_input);
    else if (*bpe_cmd) cmd_bpe_learn(common, bpe);
    else if (*pre_cmd) cmd_pretrain(common, pre);
    else if (*ft_cmd) cmd_finetune(common, ft);
    else if (*qg_cmd) cmd_train_qg(common, qg);
    else if (*gen_cmd) cmd_generate(common, gen);
    else if (*ev_cmd) cmd_evaluate(common, ev);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
