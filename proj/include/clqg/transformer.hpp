#pragma once

// Transformer building blocks: sinusoidal positional encodings, directional
// positional masks, multi-head attention, position-wise feed-forward and
// pre-norm residual layers.
//
// Sequences travel as packed batches: the rows of every sequence are stacked
// into one [total_tokens x d_model] matrix, and attention is restricted to
// each sequence's own rows. A sequence's results never depend on which other
// sequences share its batch.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "clqg/common.hpp"
#include "clqg/ops.hpp"
#include "clqg/rng.hpp"
#include "clqg/tensor.hpp"

namespace clqg {

struct ModelDims {
  std::size_t d_model = 300;
  std::size_t heads = 6;
  std::size_t ff_dim = 1200;
  std::size_t private_layers = 2;
  std::size_t shared_layers = 2;
  std::size_t vocab_size = 0;
  std::size_t max_len = 128;  // longest sequence (positions) a stack accepts
  MaskDiagonal mask_diagonal = MaskDiagonal::strict;
  double pe_base = 10000.0;

  std::size_t head_dim() const { return d_model / heads; }
  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

/// PE[pos][2i] = sin(pos / m^(2i/d)), PE[pos][2i+1] = cos(pos / m^(2i/d)).
/// Throws std::invalid_argument for odd d_model.
template <typename Real>
Tensor<Real> positional_encoding(std::size_t max_pos, std::size_t d_model, double m = 10000.0);

/// Additive n x n mask over {0, -inf}.
struct Mask {
  std::size_t n = 0;
  MaskKind kind = MaskKind::none;
  MaskDiagonal diagonal = MaskDiagonal::strict;
  std::vector<double> matrix;

  double at(std::size_t i, std::size_t j) const { return matrix[i * n + j]; }
  bool operator==(const Mask&) const = default;
};

/// forward: 0 iff i < j; backward: 0 iff i > j; causal: 0 iff i >= j.
/// permit_self additionally opens the diagonal of forward/backward masks.
Mask directional_mask(std::size_t n, MaskKind kind, MaskDiagonal diagonal = MaskDiagonal::strict);

/// Encoder self-attention plan: the first half of the heads read rightward
/// context (forward mask), the rest leftward context (backward mask).
std::vector<MaskKind> encoder_head_masks(std::size_t heads);

struct PackedSequences {
  TokenIds ids;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> lengths;

  static PackedSequences pack(std::span<const TokenIds> sequences);
  std::size_t count() const { return offsets.size(); }
  std::size_t total() const { return ids.size(); }
  std::size_t max_length() const;
  /// Position of every packed row within its own sequence.
  std::vector<std::size_t> positions() const;
};

template <typename Real>
struct NormWeights {
  Tensor<Real> gain;
  Tensor<Real> bias;
};

template <typename Real>
struct AttentionWeights {
  Tensor<Real> query;
  Tensor<Real> key;
  Tensor<Real> value;
  Tensor<Real> output;
  Tensor<Real> output_bias;
};

template <typename Real>
struct FeedForwardWeights {
  Tensor<Real> inner;
  Tensor<Real> inner_bias;
  Tensor<Real> outer;
  Tensor<Real> outer_bias;
};

/// One transformer layer. Decoder layers also carry cross-attention.
template <typename Real>
struct LayerWeights {
  NormWeights<Real> self_norm;
  AttentionWeights<Real> self_attn;
  bool has_cross = false;
  NormWeights<Real> cross_norm;
  AttentionWeights<Real> cross_attn;
  NormWeights<Real> ff_norm;
  FeedForwardWeights<Real> ff;

  static LayerWeights init(const ModelDims& dims, bool decoder, Rng& rng);
  /// Visits parameters in a fixed order with stable relative names.
  void for_each(const std::function<void(const std::string&, Tensor<Real>&)>& visit);
  void for_each(const std::function<void(const std::string&, const Tensor<Real>&)>& visit) const;
};

template <typename Real>
struct EmbeddingWeights {
  Tensor<Real> table;        // [V x d]
  Tensor<Real> output;       // [d x V]
  Tensor<Real> output_bias;  // [V]

  static EmbeddingWeights init(const ModelDims& dims, Rng& rng);
  void for_each(const std::function<void(const std::string&, Tensor<Real>&)>& visit);
};

template <typename Real>
NormWeights<Real> init_norm(std::size_t d);

/// Train-mode switches for one forward pass.
struct ForwardOptions {
  bool train = false;
  double dropout = 0.0;
  Rng* rng = nullptr;  // required when train && dropout > 0
};

/// Projections + fused attention + output projection.
/// queries[Nq x d]; keys_values[Nk x d].
template <typename Real>
Tensor<Real> multi_head_attention(const Tensor<Real>& queries, const Tensor<Real>& keys_values,
                                  const AttentionWeights<Real>& weights, const AttentionSpec& spec);

/// Single-sequence form with one mask shared by every head.
/// Throws DimensionError when mask.n differs from the sequence length.
template <typename Real>
Tensor<Real> multi_head_attention(const Tensor<Real>& queries, const Tensor<Real>& keys,
                                  const Tensor<Real>& values, const Mask& mask,
                                  const AttentionWeights<Real>& weights, std::size_t heads);

template <typename Real>
Tensor<Real> feed_forward(const Tensor<Real>& x, const FeedForwardWeights<Real>& weights);

/// Token embeddings scaled by sqrt(d) plus positional encodings.
template <typename Real>
Tensor<Real> embed_tokens(const EmbeddingWeights<Real>& weights, const PackedSequences& batch,
                          const Tensor<Real>& pe_table);

/// Pre-norm encoder layer with per-head directional self-attention.
template <typename Real>
Tensor<Real> encoder_layer(const Tensor<Real>& x, const PackedSequences& batch,
                           const LayerWeights<Real>& weights, const ModelDims& dims,
                           const ForwardOptions& options);

/// Pre-norm decoder layer: causal self-attention, unmasked cross-attention
/// over the matching source sequence, feed-forward.
template <typename Real>
Tensor<Real> decoder_layer(const Tensor<Real>& y, const PackedSequences& targets,
                           const Tensor<Real>& memory, const PackedSequences& sources,
                           const LayerWeights<Real>& weights, const ModelDims& dims,
                           const ForwardOptions& options);

/// Final normalization followed by the vocabulary projection.
template <typename Real>
Tensor<Real> vocabulary_logits(const Tensor<Real>& x, const NormWeights<Real>& final_norm,
                               const EmbeddingWeights<Real>& weights);

}  // namespace clqg
