#include "clqg/transformer.hpp"

#include <cmath>
#include <limits>

namespace clqg {

void ModelDims::validate() const {
  if (d_model == 0 || heads == 0 || ff_dim == 0 || vocab_size == 0 || max_len == 0) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (d_model % heads != 0) {
    throw std::invalid_argument("d_model " + std::to_string(d_model) +
                                " is not divisible by head count " + std::to_string(heads));
  }
  if (d_model % 2 != 0) throw std::invalid_argument("d_model must be even for positional encodings");
  if (private_layers == 0 && shared_layers == 0) {
    throw std::invalid_argument("a stack needs at least one layer");
  }
}

template <typename Real>
Tensor<Real> positional_encoding(std::size_t max_pos, std::size_t d_model, double m) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw std::invalid_argument("positional_encoding: d_model must be even, got " +
                                std::to_string(d_model));
  }
  if (max_pos == 0) throw std::invalid_argument("positional_encoding: max_pos must be positive");
  std::vector<Real> table(max_pos * d_model);
  for (std::size_t pos = 0; pos < max_pos; ++pos) {
    for (std::size_t i = 0; 2 * i < d_model; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(m, static_cast<double>(2 * i) / static_cast<double>(d_model));
      table[pos * d_model + 2 * i] = static_cast<Real>(std::sin(angle));
      table[pos * d_model + 2 * i + 1] = static_cast<Real>(std::cos(angle));
    }
  }
  return Tensor<Real>::from_data({max_pos, d_model}, std::move(table));
}

Mask directional_mask(std::size_t n, MaskKind kind, MaskDiagonal diagonal) {
  if (n == 0) throw std::invalid_argument("directional_mask: n must be at least 1");
  Mask mask{n, kind, diagonal, std::vector<double>(n * n)};
  const double blocked = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      mask.matrix[i * n + j] = mask_allows(kind, diagonal, i, j) ? 0.0 : blocked;
    }
  }
  return mask;
}

std::vector<MaskKind> encoder_head_masks(std::size_t heads) {
  std::vector<MaskKind> plan(heads, MaskKind::backward);
  for (std::size_t h = 0; h < heads / 2; ++h) plan[h] = MaskKind::forward;
  return plan;
}

PackedSequences PackedSequences::pack(std::span<const TokenIds> sequences) {
  PackedSequences packed;
  for (const auto& seq : sequences) {
    if (seq.empty()) throw std::invalid_argument("cannot pack an empty sequence");
    packed.offsets.push_back(packed.ids.size());
    packed.lengths.push_back(seq.size());
    packed.ids.insert(packed.ids.end(), seq.begin(), seq.end());
  }
  return packed;
}

std::size_t PackedSequences::max_length() const {
  std::size_t longest = 0;
  for (auto len : lengths) longest = std::max(longest, len);
  return longest;
}

std::vector<std::size_t> PackedSequences::positions() const {
  std::vector<std::size_t> pos(ids.size());
  for (std::size_t s = 0; s < offsets.size(); ++s) {
    for (std::size_t i = 0; i < lengths[s]; ++i) pos[offsets[s] + i] = i;
  }
  return pos;
}

namespace {

template <typename Real>
Tensor<Real> uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<Real> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<Real>(rng.uniform(-bound, bound));
  return Tensor<Real>::from_data(std::move(shape), std::move(values), true);
}

template <typename Real>
Tensor<Real> xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_tensor<Real>({fan_in, fan_out}, bound, rng);
}

template <typename Real>
AttentionWeights<Real> init_attention(std::size_t d, Rng& rng) {
  AttentionWeights<Real> w;
  w.query = xavier<Real>(d, d, rng);
  w.key = xavier<Real>(d, d, rng);
  w.value = xavier<Real>(d, d, rng);
  w.output = xavier<Real>(d, d, rng);
  w.output_bias = Tensor<Real>::zeros({d}, true);
  return w;
}

std::vector<AttentionSegment> self_segments(const PackedSequences& batch) {
  std::vector<AttentionSegment> segments;
  segments.reserve(batch.count());
  for (std::size_t s = 0; s < batch.count(); ++s) {
    segments.push_back({batch.offsets[s], batch.lengths[s], batch.offsets[s], batch.lengths[s]});
  }
  return segments;
}

template <typename Real>
Tensor<Real> residual(const Tensor<Real>& x, const Tensor<Real>& sublayer,
                      const ForwardOptions& options) {
  if (options.train && options.dropout > 0.0) {
    if (options.rng == nullptr) throw std::invalid_argument("dropout requires an rng");
    return add(x, dropout(sublayer, options.dropout, true, *options.rng));
  }
  return add(x, sublayer);
}

template <typename Real>
Tensor<Real> norm(const Tensor<Real>& x, const NormWeights<Real>& w) {
  return layer_norm(x, w.gain, w.bias);
}

}  // namespace

template <typename Real>
NormWeights<Real> init_norm(std::size_t d) {
  return {Tensor<Real>::full({d}, Real(1), true), Tensor<Real>::zeros({d}, true)};
}

template <typename Real>
LayerWeights<Real> LayerWeights<Real>::init(const ModelDims& dims, bool decoder, Rng& rng) {
  const std::size_t d = dims.d_model;
  LayerWeights w;
  w.self_norm = init_norm<Real>(d);
  w.self_attn = init_attention<Real>(d, rng);
  w.has_cross = decoder;
  if (decoder) {
    w.cross_norm = init_norm<Real>(d);
    w.cross_attn = init_attention<Real>(d, rng);
  }
  w.ff_norm = init_norm<Real>(d);
  w.ff.inner = xavier<Real>(d, dims.ff_dim, rng);
  w.ff.inner_bias = Tensor<Real>::zeros({dims.ff_dim}, true);
  w.ff.outer = xavier<Real>(dims.ff_dim, d, rng);
  w.ff.outer_bias = Tensor<Real>::zeros({d}, true);
  return w;
}

namespace {

template <typename Layer, typename Visit>
void visit_layer(Layer& w, Visit&& visit) {
  auto attn = [&](const std::string& prefix, auto& a) {
    visit(prefix + ".q", a.query);
    visit(prefix + ".k", a.key);
    visit(prefix + ".v", a.value);
    visit(prefix + ".o", a.output);
    visit(prefix + ".o_bias", a.output_bias);
  };
  visit(std::string("self_norm.gain"), w.self_norm.gain);
  visit(std::string("self_norm.bias"), w.self_norm.bias);
  attn("self_attn", w.self_attn);
  if (w.has_cross) {
    visit(std::string("cross_norm.gain"), w.cross_norm.gain);
    visit(std::string("cross_norm.bias"), w.cross_norm.bias);
    attn("cross_attn", w.cross_attn);
  }
  visit(std::string("ff_norm.gain"), w.ff_norm.gain);
  visit(std::string("ff_norm.bias"), w.ff_norm.bias);
  visit(std::string("ff.inner"), w.ff.inner);
  visit(std::string("ff.inner_bias"), w.ff.inner_bias);
  visit(std::string("ff.outer"), w.ff.outer);
  visit(std::string("ff.outer_bias"), w.ff.outer_bias);
}

}  // namespace

template <typename Real>
void LayerWeights<Real>::for_each(
    const std::function<void(const std::string&, Tensor<Real>&)>& visit) {
  visit_layer(*this, visit);
}

template <typename Real>
void LayerWeights<Real>::for_each(
    const std::function<void(const std::string&, const Tensor<Real>&)>& visit) const {
  visit_layer(*this, visit);
}

template <typename Real>
EmbeddingWeights<Real> EmbeddingWeights<Real>::init(const ModelDims& dims, Rng& rng) {
  EmbeddingWeights w;
  // Scaled by sqrt(d) at lookup, giving unit-variance inputs.
  const double bound = std::sqrt(3.0 / static_cast<double>(dims.d_model));
  w.table = uniform_tensor<Real>({dims.vocab_size, dims.d_model}, bound, rng);
  w.output = xavier<Real>(dims.d_model, dims.vocab_size, rng);
  w.output_bias = Tensor<Real>::zeros({dims.vocab_size}, true);
  return w;
}

template <typename Real>
void EmbeddingWeights<Real>::for_each(
    const std::function<void(const std::string&, Tensor<Real>&)>& visit) {
  visit("table", table);
  visit("output", output);
  visit("output_bias", output_bias);
}

template <typename Real>
Tensor<Real> multi_head_attention(const Tensor<Real>& queries, const Tensor<Real>& keys_values,
                                  const AttentionWeights<Real>& weights, const AttentionSpec& spec) {
  const Tensor<Real> q = matmul(queries, weights.query);
  const Tensor<Real> k = matmul(keys_values, weights.key);
  const Tensor<Real> v = matmul(keys_values, weights.value);
  return add_bias(matmul(attention(q, k, v, spec), weights.output), weights.output_bias);
}

template <typename Real>
Tensor<Real> multi_head_attention(const Tensor<Real>& queries, const Tensor<Real>& keys,
                                  const Tensor<Real>& values, const Mask& mask,
                                  const AttentionWeights<Real>& weights, std::size_t heads) {
  if (queries.rank() != 2 || keys.rank() != 2 || values.rank() != 2) {
    throw DimensionError("multi_head_attention: inputs must be matrices");
  }
  if (mask.n != queries.dim(0) || (mask.kind != MaskKind::none && mask.n != keys.dim(0))) {
    throw DimensionError("multi_head_attention: mask of size " + std::to_string(mask.n) +
                         " for " + std::to_string(queries.dim(0)) + " queries and " +
                         std::to_string(keys.dim(0)) + " keys");
  }
  AttentionSpec spec;
  spec.heads = heads;
  spec.head_masks.assign(heads, mask.kind);
  spec.diagonal = mask.diagonal;
  spec.segments.push_back({0, queries.dim(0), 0, keys.dim(0)});
  const Tensor<Real> q = matmul(queries, weights.query);
  const Tensor<Real> k = matmul(keys, weights.key);
  const Tensor<Real> v = matmul(values, weights.value);
  return add_bias(matmul(attention(q, k, v, spec), weights.output), weights.output_bias);
}

template <typename Real>
Tensor<Real> feed_forward(const Tensor<Real>& x, const FeedForwardWeights<Real>& weights) {
  const Tensor<Real> hidden = relu(add_bias(matmul(x, weights.inner), weights.inner_bias));
  return add_bias(matmul(hidden, weights.outer), weights.outer_bias);
}

template <typename Real>
Tensor<Real> embed_tokens(const EmbeddingWeights<Real>& weights, const PackedSequences& batch,
                          const Tensor<Real>& pe_table) {
  if (batch.max_length() > pe_table.dim(0)) {
    throw std::invalid_argument("sequence of length " + std::to_string(batch.max_length()) +
                                " exceeds the configured maximum of " +
                                std::to_string(pe_table.dim(0)));
  }
  const Real factor = std::sqrt(static_cast<Real>(weights.table.dim(1)));
  const Tensor<Real> tokens = scale(embedding(weights.table, batch.ids), factor);
  const auto positions = batch.positions();
  return add_rows(tokens, pe_table, positions);
}

template <typename Real>
Tensor<Real> encoder_layer(const Tensor<Real>& x, const PackedSequences& batch,
                           const LayerWeights<Real>& weights, const ModelDims& dims,
                           const ForwardOptions& options) {
  AttentionSpec spec;
  spec.heads = dims.heads;
  spec.head_masks = encoder_head_masks(dims.heads);
  spec.diagonal = dims.mask_diagonal;
  spec.segments = self_segments(batch);

  const Tensor<Real> h = norm(x, weights.self_norm);
  Tensor<Real> out = residual(x, multi_head_attention(h, h, weights.self_attn, spec), options);
  return residual(out, feed_forward(norm(out, weights.ff_norm), weights.ff), options);
}

template <typename Real>
Tensor<Real> decoder_layer(const Tensor<Real>& y, const PackedSequences& targets,
                           const Tensor<Real>& memory, const PackedSequences& sources,
                           const LayerWeights<Real>& weights, const ModelDims& dims,
                           const ForwardOptions& options) {
  if (targets.count() != sources.count()) {
    throw DimensionError("decoder_layer: " + std::to_string(targets.count()) + " targets for " +
                         std::to_string(sources.count()) + " sources");
  }
  if (!weights.has_cross) throw std::invalid_argument("decoder_layer: layer lacks cross-attention");

  AttentionSpec self_spec;
  self_spec.heads = dims.heads;
  self_spec.head_masks.assign(dims.heads, MaskKind::causal);
  self_spec.segments = self_segments(targets);

  AttentionSpec cross_spec;
  cross_spec.heads = dims.heads;
  cross_spec.head_masks.assign(dims.heads, MaskKind::none);
  for (std::size_t s = 0; s < targets.count(); ++s) {
    cross_spec.segments.push_back(
        {targets.offsets[s], targets.lengths[s], sources.offsets[s], sources.lengths[s]});
  }

  const Tensor<Real> h = norm(y, weights.self_norm);
  Tensor<Real> out = residual(y, multi_head_attention(h, h, weights.self_attn, self_spec), options);
  out = residual(out,
                 multi_head_attention(norm(out, weights.cross_norm), memory, weights.cross_attn,
                                      cross_spec),
                 options);
  return residual(out, feed_forward(norm(out, weights.ff_norm), weights.ff), options);
}

template <typename Real>
Tensor<Real> vocabulary_logits(const Tensor<Real>& x, const NormWeights<Real>& final_norm,
                               const EmbeddingWeights<Real>& weights) {
  return add_bias(matmul(norm(x, final_norm), weights.output), weights.output_bias);
}

#define CLQG_INSTANTIATE_TRANSFORMER(Real)                                                        \
  template Tensor<Real> positional_encoding<Real>(std::size_t, std::size_t, double);              \
  template struct LayerWeights<Real>;                                                             \
  template struct EmbeddingWeights<Real>;                                                         \
  template NormWeights<Real> init_norm<Real>(std::size_t);                                        \
  template Tensor<Real> multi_head_attention(const Tensor<Real>&, const Tensor<Real>&,            \
                                             const AttentionWeights<Real>&, const AttentionSpec&); \
  template Tensor<Real> multi_head_attention(const Tensor<Real>&, const Tensor<Real>&,            \
                                             const Tensor<Real>&, const Mask&,                    \
                                             const AttentionWeights<Real>&, std::size_t);         \
  template Tensor<Real> feed_forward(const Tensor<Real>&, const FeedForwardWeights<Real>&);       \
  template Tensor<Real> embed_tokens(const EmbeddingWeights<Real>&, const PackedSequences&,       \
                                     const Tensor<Real>&);                                        \
  template Tensor<Real> encoder_layer(const Tensor<Real>&, const PackedSequences&,                \
                                      const LayerWeights<Real>&, const ModelDims&,                \
                                      const ForwardOptions&);                                     \
  template Tensor<Real> decoder_layer(const Tensor<Real>&, const PackedSequences&,                \
                                      const Tensor<Real>&, const PackedSequences&,                \
                                      const LayerWeights<Real>&, const ModelDims&,                \
                                      const ForwardOptions&);                                     \
  template Tensor<Real> vocabulary_logits(const Tensor<Real>&, const NormWeights<Real>&,          \
                                          const EmbeddingWeights<Real>&);

CLQG_INSTANTIATE_TRANSFORMER(float)
CLQG_INSTANTIATE_TRANSFORMER(double)

}  // namespace clqg
