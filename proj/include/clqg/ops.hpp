#pragma once

// Differentiable operations over Tensor<Real>. Matrices are rank-2 and
// row-major. Every operation validates shapes and throws DimensionError on
// mismatch, naming both operands.

#include <cstdint>
#include <span>
#include <vector>

#include "clqg/common.hpp"
#include "clqg/rng.hpp"
#include "clqg/tensor.hpp"

namespace clqg {

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor);

/// x[m x n] + bias broadcast over rows; bias has n elements.
template <typename Real>
Tensor<Real> add_bias(const Tensor<Real>& x, const Tensor<Real>& bias);

/// x[m x n] + table rows: row r of the result adds rows[r] of table[t x n].
/// Used for positional encodings over packed sequences; table is constant.
template <typename Real>
Tensor<Real> add_rows(const Tensor<Real>& x, const Tensor<Real>& table,
                      std::span<const std::size_t> rows);

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x);

/// Inverted dropout. Identity when !train or p == 0.
template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, double p, bool train, Rng& rng);

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x);

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x);

/// Softmax along an axis, stabilized by max-subtraction. Slices whose inputs
/// are all -inf produce zeros.
template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis);

/// Row-wise layer normalization with learned gain and bias (n elements each).
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias,
                        Real epsilon = Real(1e-5));

/// Gathers rows of table[V x d] for each id.
template <typename Real>
Tensor<Real> embedding(const Tensor<Real>& table, std::span<const TokenId> ids);

/// Mean over positions whose target != pad_id of -log softmax(logits)[target].
/// Throws std::invalid_argument when every target is padding.
template <typename Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, std::span<const TokenId> targets,
                           TokenId pad_id);

/// Row-wise log-softmax values without graph recording (inference helper).
template <typename Real>
std::vector<Real> log_softmax_row(std::span<const Real> row);

// ---------------------------------------------------------------------------
// Fused multi-head scaled dot-product attention over packed sequences.

enum class MaskKind : std::uint8_t {
  none,      // every key visible
  forward,   // key j visible from query i iff i < j
  backward,  // iff i > j
  causal,    // iff i >= j
};

enum class MaskDiagonal : std::uint8_t {
  strict,       // forward/backward exclude j == i
  permit_self,  // forward/backward also admit j == i
};

constexpr bool mask_allows(MaskKind kind, MaskDiagonal diagonal, std::size_t i, std::size_t j) {
  switch (kind) {
    case MaskKind::none:
      return true;
    case MaskKind::forward:
      return i < j || (diagonal == MaskDiagonal::permit_self && i == j);
    case MaskKind::backward:
      return i > j || (diagonal == MaskDiagonal::permit_self && i == j);
    case MaskKind::causal:
      return i >= j;
  }
  return false;
}

/// One sequence inside a packed batch: its query rows and key/value rows.
struct AttentionSegment {
  std::size_t q_offset = 0;
  std::size_t q_len = 0;
  std::size_t k_offset = 0;
  std::size_t k_len = 0;
};

struct AttentionSpec {
  std::size_t heads = 1;
  std::vector<MaskKind> head_masks;  // one per head
  MaskDiagonal diagonal = MaskDiagonal::strict;
  std::vector<AttentionSegment> segments;
};

/// q[Nq x d], k and v[Nk x d]. Each head h attends within columns
/// [h*d/H, (h+1)*d/H) with scale 1/sqrt(d/H). Fully masked query rows
/// produce zero output for that head.
template <typename Real>
Tensor<Real> attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,
                       const AttentionSpec& spec);

/// Attention probabilities of one head for one segment, [q_len x k_len],
/// computed without graph recording. Exposed for inspection and tests.
template <typename Real>
std::vector<Real> attention_weights(const Tensor<Real>& q, const Tensor<Real>& k,
                                    const AttentionSpec& spec, std::size_t segment,
                                    std::size_t head);

}  // namespace clqg
