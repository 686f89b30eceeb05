#include "clqg/xmodel.hpp"

#include <algorithm>
#include <cstring>

#include "clqg/bpe.hpp"
#include "clqg/hashing.hpp"
#include "clqg/rng.hpp"

namespace clqg {

std::string_view group_name(Group group) {
  switch (group) {
    case Group::enc_pri:
      return "enc.pri";
    case Group::enc_sec:
      return "enc.sec";
    case Group::enc_shared:
      return "enc.shared";
    case Group::dec_shared:
      return "dec.shared";
    case Group::dec_pri:
      return "dec.pri";
    case Group::dec_sec:
      return "dec.sec";
    case Group::embed:
      return "embed";
  }
  return "?";
}

Group parse_group(std::string_view name) {
  for (Group g : kAllGroups) {
    if (group_name(g) == name) return g;
  }
  throw std::invalid_argument("unknown parameter group '" + std::string(name) + "'");
}

std::vector<Group> TaskRoute::updated_groups() const {
  std::vector<Group> groups(trainable_groups.begin(), trainable_groups.end());
  groups.push_back(Group::embed);
  return groups;
}

TaskRoute route(Task task, Lang lang_in, Lang lang_out) {
  const bool same = lang_in == lang_out;
  if ((task == Task::AE || task == Task::QG) && !same) {
    throw std::invalid_argument(std::string(to_string(task)) +
                                " requires matching input and output languages");
  }
  if ((task == Task::BT || task == Task::MT) && same) {
    throw std::invalid_argument(std::string(to_string(task)) +
                                " requires different input and output languages");
  }
  TaskRoute r;
  r.task = task;
  r.lang_in = lang_in;
  r.lang_out = lang_out;
  r.trainable_groups = {encoder_private(lang_in), Group::enc_shared, Group::dec_shared,
                        decoder_private(lang_out)};
  return r;
}

TokenIds frame_source(const TokenIds& body, Lang lang) {
  TokenIds ids;
  ids.reserve(body.size() + 2);
  ids.push_back(lang_tag(lang));
  ids.insert(ids.end(), body.begin(), body.end());
  ids.push_back(special::eos);
  return ids;
}

TokenIds frame_target(const TokenIds& body) {
  TokenIds ids;
  ids.reserve(body.size() + 2);
  ids.push_back(special::bos);
  ids.insert(ids.end(), body.begin(), body.end());
  ids.push_back(special::eos);
  return ids;
}

XModel::XModel(ModelDims dims, std::uint64_t seed) : dims_(dims) {
  dims_.validate();
  Rng rng(seed);
  auto stack = [&](std::size_t n, bool decoder) {
    std::vector<LayerWeights<float>> layers;
    for (std::size_t i = 0; i < n; ++i) layers.push_back(LayerWeights<float>::init(dims_, decoder, rng));
    return layers;
  };
  parts_.embed = EmbeddingWeights<float>::init(dims_, rng);
  parts_.enc_pri = stack(dims_.private_layers, false);
  parts_.enc_sec = stack(dims_.private_layers, false);
  parts_.enc_shared = stack(dims_.shared_layers, false);
  parts_.dec_shared = stack(dims_.shared_layers, true);
  parts_.dec_pri = stack(dims_.private_layers, true);
  parts_.dec_sec = stack(dims_.private_layers, true);
  parts_.enc_final = init_norm<float>(dims_.d_model);
  parts_.dec_final_pri = init_norm<float>(dims_.d_model);
  parts_.dec_final_sec = init_norm<float>(dims_.d_model);
  pe_ = positional_encoding<float>(dims_.max_len, dims_.d_model, dims_.pe_base);
}

std::vector<NamedParameter> XModel::named_parameters(Group group) const {
  std::vector<NamedParameter> out;
  const std::string prefix(group_name(group));
  auto layers = [&](const std::vector<LayerWeights<float>>& stack) {
    for (std::size_t i = 0; i < stack.size(); ++i) {
      const std::string layer = prefix + ".layer" + std::to_string(i) + ".";
      stack[i].for_each([&](const std::string& name, const Tensor<float>& t) {
        out.push_back({layer + name, t});
      });
    }
  };
  auto final_norm = [&](const NormWeights<float>& n) {
    out.push_back({prefix + ".final_norm.gain", n.gain});
    out.push_back({prefix + ".final_norm.bias", n.bias});
  };
  switch (group) {
    case Group::enc_pri:
      layers(parts_.enc_pri);
      break;
    case Group::enc_sec:
      layers(parts_.enc_sec);
      break;
    case Group::enc_shared:
      layers(parts_.enc_shared);
      final_norm(parts_.enc_final);
      break;
    case Group::dec_shared:
      layers(parts_.dec_shared);
      break;
    case Group::dec_pri:
      layers(parts_.dec_pri);
      final_norm(parts_.dec_final_pri);
      break;
    case Group::dec_sec:
      layers(parts_.dec_sec);
      final_norm(parts_.dec_final_sec);
      break;
    case Group::embed:
      out.push_back({prefix + ".table", parts_.embed.table});
      out.push_back({prefix + ".output", parts_.embed.output});
      out.push_back({prefix + ".output_bias", parts_.embed.output_bias});
      break;
  }
  return out;
}

std::vector<NamedParameter> XModel::named_parameters() const {
  std::vector<NamedParameter> out;
  for (Group g : kAllGroups) {
    auto part = named_parameters(g);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

std::vector<Tensor<float>> XModel::parameters(Group group) const {
  std::vector<Tensor<float>> out;
  for (auto& p : named_parameters(group)) out.push_back(p.tensor);
  return out;
}

std::size_t XModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.numel();
  return n;
}

std::uint64_t XModel::checksum(Group group) const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : named_parameters(group)) h = fnv1a(std::as_bytes(p.tensor.data()), h);
  return h;
}

void XModel::zero_grad() {
  for (auto& p : named_parameters()) {
    if (p.tensor.has_grad()) p.tensor.zero_grad();
  }
}

Tensor<float> XModel::encode(const PackedSequences& sources, Lang lang,
                             const ForwardOptions& options) const {
  if (sources.count() == 0) throw std::invalid_argument("encode: empty batch");
  Tensor<float> x = embed_tokens(parts_.embed, sources, pe_);
  for (const auto& layer : lang == Lang::pri ? parts_.enc_pri : parts_.enc_sec) {
    x = encoder_layer(x, sources, layer, dims_, options);
  }
  for (const auto& layer : parts_.enc_shared) x = encoder_layer(x, sources, layer, dims_, options);
  return layer_norm(x, parts_.enc_final.gain, parts_.enc_final.bias);
}

Tensor<float> XModel::decode(const Tensor<float>& memory, const PackedSequences& sources,
                             const PackedSequences& prefixes, Lang lang,
                             const ForwardOptions& options) const {
  if (prefixes.count() == 0) throw std::invalid_argument("decode: empty batch");
  Tensor<float> y = embed_tokens(parts_.embed, prefixes, pe_);
  for (const auto& layer : parts_.dec_shared) {
    y = decoder_layer(y, prefixes, memory, sources, layer, dims_, options);
  }
  for (const auto& layer : lang == Lang::pri ? parts_.dec_pri : parts_.dec_sec) {
    y = decoder_layer(y, prefixes, memory, sources, layer, dims_, options);
  }
  return vocabulary_logits(y, lang == Lang::pri ? parts_.dec_final_pri : parts_.dec_final_sec,
                           parts_.embed);
}

Tensor<float> XModel::forward(const PackedSequences& sources, Lang lang_in, Lang lang_out,
                              const PackedSequences& prefixes, const ForwardOptions& options) const {
  const Tensor<float> memory = encode(sources, lang_in, options);
  return decode(memory, sources, prefixes, lang_out, options);
}

XModel XModel::clone() const {
  XModel copy(dims_, 0);
  copy.copy_values_from(*this);
  return copy;
}

void XModel::copy_values_from(const XModel& other) {
  auto dst = named_parameters();
  auto src = other.named_parameters();
  if (dst.size() != src.size()) throw std::invalid_argument("copy_values_from: structure mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != src[i].name || dst[i].tensor.shape() != src[i].tensor.shape()) {
      throw std::invalid_argument("copy_values_from: parameter '" + dst[i].name + "' mismatch");
    }
    std::ranges::copy(src[i].tensor.data(), dst[i].tensor.data().begin());
  }
}

nlohmann::json dims_to_json(const ModelDims& dims) {
  return {{"d_model", dims.d_model},
          {"heads", dims.heads},
          {"ff_dim", dims.ff_dim},
          {"private_layers", dims.private_layers},
          {"shared_layers", dims.shared_layers},
          {"vocab_size", dims.vocab_size},
          {"max_len", dims.max_len},
          {"mask_diagonal", dims.mask_diagonal == MaskDiagonal::strict ? "strict" : "permit_self"},
          {"pe_base", dims.pe_base}};
}

ModelDims dims_from_json(const nlohmann::json& j) {
  ModelDims dims;
  dims.d_model = j.at("d_model").get<std::size_t>();
  dims.heads = j.at("heads").get<std::size_t>();
  dims.ff_dim = j.at("ff_dim").get<std::size_t>();
  dims.private_layers = j.at("private_layers").get<std::size_t>();
  dims.shared_layers = j.at("shared_layers").get<std::size_t>();
  dims.vocab_size = j.at("vocab_size").get<std::size_t>();
  dims.max_len = j.at("max_len").get<std::size_t>();
  const auto diag = j.at("mask_diagonal").get<std::string>();
  if (diag == "strict") {
    dims.mask_diagonal = MaskDiagonal::strict;
  } else if (diag == "permit_self") {
    dims.mask_diagonal = MaskDiagonal::permit_self;
  } else {
    throw std::invalid_argument("unknown mask_diagonal '" + diag + "'");
  }
  dims.pe_base = j.at("pe_base").get<double>();
  return dims;
}

Checkpoint XModel::to_checkpoint(const std::string& vocab_hash) const {
  Checkpoint ckpt;
  ckpt.manifest = dims_to_json(dims_);
  ckpt.manifest["format"] = "clqg-xmodel";
  ckpt.manifest["vocab_hash"] = vocab_hash;
  for (const auto& p : named_parameters()) {
    ckpt.entries.push_back({p.name, p.tensor.shape(),
                            std::vector<float>(p.tensor.data().begin(), p.tensor.data().end())});
  }
  ckpt.manifest["tensors"] = ckpt.entries.size();
  return ckpt;
}

XModel XModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.manifest.value("format", "") != "clqg-xmodel") {
    throw CheckpointError("checkpoint manifest does not describe a cross-lingual model");
  }
  XModel model(dims_from_json(ckpt.manifest), 0);
  auto params = model.named_parameters();
  if (params.size() != ckpt.entries.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(ckpt.entries.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto& p : params) {
    const auto* entry = ckpt.find(p.name);
    if (entry == nullptr) throw CheckpointError("checkpoint lacks tensor '" + p.name + "'");
    if (entry->shape != p.tensor.shape()) {
      throw CheckpointError("tensor '" + p.name + "' has shape " + shape_string(entry->shape) +
                            ", expected " + shape_string(p.tensor.shape()));
    }
    std::ranges::copy(entry->values, p.tensor.data().begin());
  }
  return model;
}

void XModel::save(const std::filesystem::path& path, const std::string& vocab_hash) const {
  to_checkpoint(vocab_hash).save(path);
}

XModel XModel::load(const std::filesystem::path& path) { return from_checkpoint(Checkpoint::load(path)); }

}  // namespace clqg
