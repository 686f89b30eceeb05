#pragma once

// Cross-lingual encoder-decoder with language-private and shared layers.
//
// Encoder for language L: embeddings -> private layers of L -> shared layers
// -> final norm (shared). Decoder for language L: embeddings -> shared layers
// -> private layers of L -> final norm of L -> vocabulary projection.
// Embeddings and the vocabulary projection are shared by both languages.

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "clqg/checkpoint.hpp"
#include "clqg/common.hpp"
#include "clqg/transformer.hpp"

namespace clqg {

enum class Group : std::uint8_t { enc_pri, enc_sec, enc_shared, dec_shared, dec_pri, dec_sec, embed };

inline constexpr std::array<Group, 7> kAllGroups{Group::enc_pri,    Group::enc_sec, Group::enc_shared,
                                                 Group::dec_shared, Group::dec_pri, Group::dec_sec,
                                                 Group::embed};

std::string_view group_name(Group group);
Group parse_group(std::string_view name);
inline constexpr Group encoder_private(Lang lang) { return lang == Lang::pri ? Group::enc_pri : Group::enc_sec; }
inline constexpr Group decoder_private(Lang lang) { return lang == Lang::pri ? Group::dec_pri : Group::dec_sec; }

/// Which layer groups one training pass updates. Embeddings and the output
/// projection (Group::embed) are shared and updated by every pass in
/// addition to trainable_groups.
struct TaskRoute {
  Task task = Task::AE;
  Lang lang_in = Lang::pri;
  Lang lang_out = Lang::pri;
  std::set<Group> trainable_groups;

  std::vector<Group> updated_groups() const;
};

/// AE and QG need lang_in == lang_out; BT and MT need them to differ.
/// Throws std::invalid_argument otherwise.
TaskRoute route(Task task, Lang lang_in, Lang lang_out);

struct ParameterPartition {
  EmbeddingWeights<float> embed;
  std::vector<LayerWeights<float>> enc_pri, enc_sec, enc_shared;
  std::vector<LayerWeights<float>> dec_shared, dec_pri, dec_sec;
  NormWeights<float> enc_final;      // part of enc.shared
  NormWeights<float> dec_final_pri;  // part of dec.pri
  NormWeights<float> dec_final_sec;  // part of dec.sec
};

struct NamedParameter {
  std::string name;
  Tensor<float> tensor;
};

/// Source framing: <lang> tokens </s>. Target framing: <s> tokens </s>.
TokenIds frame_source(const TokenIds& body, Lang lang);
TokenIds frame_target(const TokenIds& body);

class XModel {
 public:
  XModel(ModelDims dims, std::uint64_t seed);

  const ModelDims& dims() const { return dims_; }
  ParameterPartition& partition() { return parts_; }
  const ParameterPartition& partition() const { return parts_; }

  /// Fixed order; names like "enc.pri.layer0.self_attn.q".
  std::vector<NamedParameter> named_parameters(Group group) const;
  std::vector<NamedParameter> named_parameters() const;
  std::vector<Tensor<float>> parameters(Group group) const;
  std::size_t parameter_count() const;

  /// FNV-1a over the raw bytes of every parameter in the group.
  std::uint64_t checksum(Group group) const;

  void zero_grad();

  /// [total source tokens x d_model]
  Tensor<float> encode(const PackedSequences& sources, Lang lang, const ForwardOptions& options) const;
  /// [total prefix tokens x vocab] logits.
  Tensor<float> decode(const Tensor<float>& memory, const PackedSequences& sources,
                       const PackedSequences& prefixes, Lang lang, const ForwardOptions& options) const;
  Tensor<float> forward(const PackedSequences& sources, Lang lang_in, Lang lang_out,
                        const PackedSequences& prefixes, const ForwardOptions& options) const;

  /// Deep copy of every parameter value (no graph, no grads).
  XModel clone() const;
  void copy_values_from(const XModel& other);

  Checkpoint to_checkpoint(const std::string& vocab_hash) const;
  static XModel from_checkpoint(const Checkpoint& ckpt);
  void save(const std::filesystem::path& path, const std::string& vocab_hash) const;
  static XModel load(const std::filesystem::path& path);

 private:
  ModelDims dims_;
  ParameterPartition parts_;
  Tensor<float> pe_;
};

nlohmann::json dims_to_json(const ModelDims& dims);
ModelDims dims_from_json(const nlohmann::json& j);

}  // namespace clqg
