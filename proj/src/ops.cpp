#include "clqg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "clqg/kernels.hpp"

namespace clqg {
namespace {

template <typename Real>
void require_matrix(const Tensor<Real>& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename Real>
TensorNode<Real>& parent(TensorNode<Real>& self, std::size_t i) {
  return *self.parents[i];
}

}  // namespace

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<Real> out(m * n, Real(0));
  const auto& kt = kernels::active<Real>();
  kt.gemm_nn(m, n, k, a.data().data(), k, b.data().data(), n, out.data(), n);
  return make_result<Real>({m, n}, std::move(out), {&a, &b}, [m, n, k](TensorNode<Real>& self) {
    const auto& kt = kernels::active<Real>();
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) {
      kt.gemm_nt(m, k, n, self.grad.data(), n, pb.data.data(), n, pa.grad.data(), k);
    }
    if (pb.requires_grad) {
      kt.gemm_tn(k, n, m, pa.data.data(), k, self.grad.data(), n, pb.grad.data(), n);
    }
  });
}

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape(a, b, "add");
  std::vector<Real> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result<Real>(a.shape(), std::move(out), {&a, &b}, [](TensorNode<Real>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto& in = parent(self, p);
      if (!in.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
    }
  });
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape(a, b, "mul");
  std::vector<Real> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result<Real>(a.shape(), std::move(out), {&a, &b}, [](TensorNode<Real>& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.data[i];
    }
  });
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor) {
  std::vector<Real> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result<Real>(a.shape(), std::move(out), {&a}, [factor](TensorNode<Real>& self) {
    auto& in = parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += factor * self.grad[i];
  });
}

template <typename Real>
Tensor<Real> add_bias(const Tensor<Real>& x, const Tensor<Real>& bias) {
  require_matrix(x, "add_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.numel() != n) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not fit " +
                         shape_string(x.shape()));
  }
  std::vector<Real> out(x.data().begin(), x.data().end());
  auto b = bias.data();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += b[c];
  }
  return make_result<Real>(x.shape(), std::move(out), {&x, &bias}, [m, n](TensorNode<Real>& self) {
    auto& px = parent(self, 0);
    auto& pb = parent(self, 1);
    if (px.requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) pb.grad[c] += self.grad[r * n + c];
      }
    }
  });
}

template <typename Real>
Tensor<Real> add_rows(const Tensor<Real>& x, const Tensor<Real>& table,
                      std::span<const std::size_t> rows) {
  require_matrix(x, "add_rows");
  require_matrix(table, "add_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (table.dim(1) != n || rows.size() != m) {
    throw DimensionError("add_rows: table " + shape_string(table.shape()) + " with " +
                         std::to_string(rows.size()) + " row indices does not fit " +
                         shape_string(x.shape()));
  }
  std::vector<Real> out(x.data().begin(), x.data().end());
  auto t = table.data();
  for (std::size_t r = 0; r < m; ++r) {
    if (rows[r] >= table.dim(0)) {
      throw DimensionError("add_rows: row index " + std::to_string(rows[r]) + " outside table " +
                           shape_string(table.shape()));
    }
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += t[rows[r] * n + c];
  }
  std::vector<std::size_t> saved(rows.begin(), rows.end());
  return make_result<Real>(x.shape(), std::move(out), {&x, &table},
                           [n, saved = std::move(saved)](TensorNode<Real>& self) {
                             auto& px = parent(self, 0);
                             auto& pt = parent(self, 1);
                             if (px.requires_grad) {
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                 px.grad[i] += self.grad[i];
                             }
                             if (pt.requires_grad) {
                               for (std::size_t r = 0; r < saved.size(); ++r) {
                                 for (std::size_t c = 0; c < n; ++c)
                                   pt.grad[saved[r] * n + c] += self.grad[r * n + c];
                               }
                             }
                           });
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  std::vector<Real> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > Real(0) ? v : Real(0);
  return make_result<Real>(x.shape(), std::move(out), {&x}, [](TensorNode<Real>& self) {
    auto& in = parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (in.data[i] > Real(0)) in.grad[i] += self.grad[i];
    }
  });
}

template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, double p, bool train, Rng& rng) {
  if (!train || p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: probability must be below 1");
  const Real keep_scale = Real(1.0 / (1.0 - p));
  std::vector<Real> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < p ? Real(0) : keep_scale;
  std::vector<Real> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * mask[i];
  return make_result<Real>(x.shape(), std::move(out), {&x},
                           [mask = std::move(mask)](TensorNode<Real>& self) {
                             auto& px = parent(self, 0);
                             for (std::size_t i = 0; i < self.grad.size(); ++i)
                               px.grad[i] += self.grad[i] * mask[i];
                           });
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real total = 0;
  for (Real v : x.data()) total += v;
  return make_result<Real>({1}, {total}, {&x}, [](TensorNode<Real>& self) {
    auto& in = parent(self, 0);
    for (auto& g : in.grad) g += self.grad[0];
  });
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  return scale(sum(x), Real(1) / static_cast<Real>(x.numel()));
}

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_string(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t len = x.dim(axis);
  auto in = x.data();
  std::vector<Real> out(x.numel(), Real(0));
  const Real neg_inf = -std::numeric_limits<Real>::infinity();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      Real peak = neg_inf;
      for (std::size_t j = 0; j < len; ++j) peak = std::max(peak, in[base + j * inner]);
      if (peak == neg_inf) continue;  // fully masked slice stays zero
      Real total = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const Real e = std::exp(in[base + j * inner] - peak);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  }
  return make_result<Real>(x.shape(), std::move(out), {&x},
                           [outer, inner, len](TensorNode<Real>& self) {
                             auto& px = parent(self, 0);
                             const auto& y = self.data;
                             const auto& gy = self.grad;
                             for (std::size_t o = 0; o < outer; ++o) {
                               for (std::size_t i = 0; i < inner; ++i) {
                                 const std::size_t base = o * len * inner + i;
                                 Real dot = 0;
                                 for (std::size_t j = 0; j < len; ++j)
                                   dot += y[base + j * inner] * gy[base + j * inner];
                                 for (std::size_t j = 0; j < len; ++j) {
                                   const std::size_t at = base + j * inner;
                                   px.grad[at] += y[at] * (gy[at] - dot);
                                 }
                               }
                             }
                           });
}

template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias,
                        Real epsilon) {
  require_matrix(x, "layer_norm");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (gain.numel() != n || bias.numel() != n) {
    throw DimensionError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                         shape_string(bias.shape()) + " do not fit " + shape_string(x.shape()));
  }
  auto in = x.data();
  auto g = gain.data();
  auto b = bias.data();
  std::vector<Real> out(m * n);
  std::vector<Real> normalized(m * n);
  std::vector<Real> inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    const Real* row = in.data() + r * n;
    Real mu = 0;
    for (std::size_t c = 0; c < n; ++c) mu += row[c];
    mu /= static_cast<Real>(n);
    Real var = 0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<Real>(n);
    const Real rstd = Real(1) / std::sqrt(var + epsilon);
    inv_std[r] = rstd;
    for (std::size_t c = 0; c < n; ++c) {
      const Real xh = (row[c] - mu) * rstd;
      normalized[r * n + c] = xh;
      out[r * n + c] = xh * g[c] + b[c];
    }
  }
  return make_result<Real>(
      x.shape(), std::move(out), {&x, &gain, &bias},
      [m, n, normalized = std::move(normalized),
       inv_std = std::move(inv_std)](TensorNode<Real>& self) {
        auto& px = parent(self, 0);
        auto& pg = parent(self, 1);
        auto& pb = parent(self, 2);
        const auto& gy = self.grad;
        for (std::size_t r = 0; r < m; ++r) {
          const Real* dy = gy.data() + r * n;
          const Real* xh = normalized.data() + r * n;
          if (pg.requires_grad) {
            for (std::size_t c = 0; c < n; ++c) pg.grad[c] += dy[c] * xh[c];
          }
          if (pb.requires_grad) {
            for (std::size_t c = 0; c < n; ++c) pb.grad[c] += dy[c];
          }
          if (px.requires_grad) {
            Real mean_dxh = 0, mean_dxh_xh = 0;
            for (std::size_t c = 0; c < n; ++c) {
              const Real dxh = dy[c] * pg.data[c];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xh[c];
            }
            mean_dxh /= static_cast<Real>(n);
            mean_dxh_xh /= static_cast<Real>(n);
            for (std::size_t c = 0; c < n; ++c) {
              const Real dxh = dy[c] * pg.data[c];
              px.grad[r * n + c] += inv_std[r] * (dxh - mean_dxh - xh[c] * mean_dxh_xh);
            }
          }
        }
      });
}

template <typename Real>
Tensor<Real> embedding(const Tensor<Real>& table, std::span<const TokenId> ids) {
  require_matrix(table, "embedding");
  if (ids.empty()) throw DimensionError("embedding: empty id sequence");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<Real> out(ids.size() * d);
  auto t = table.data();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
      throw DimensionError("embedding: id " + std::to_string(ids[r]) + " outside table " +
                           shape_string(table.shape()));
    }
    std::copy_n(t.data() + static_cast<std::size_t>(ids[r]) * d, d, out.data() + r * d);
  }
  std::vector<TokenId> saved(ids.begin(), ids.end());
  return make_result<Real>({ids.size(), d}, std::move(out), {&table},
                           [d, saved = std::move(saved)](TensorNode<Real>& self) {
                             auto& pt = parent(self, 0);
                             for (std::size_t r = 0; r < saved.size(); ++r) {
                               Real* dst = pt.grad.data() + static_cast<std::size_t>(saved[r]) * d;
                               const Real* src = self.grad.data() + r * d;
                               for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
                             }
                           });
}

template <typename Real>
std::vector<Real> log_softmax_row(std::span<const Real> row) {
  Real peak = -std::numeric_limits<Real>::infinity();
  for (Real v : row) peak = std::max(peak, v);
  Real total = 0;
  for (Real v : row) total += std::exp(v - peak);
  const Real lse = peak + std::log(total);
  std::vector<Real> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = row[i] - lse;
  return out;
}

template <typename Real>
Tensor<Real> cross_entropy(const Tensor<Real>& logits, std::span<const TokenId> targets,
                           TokenId pad_id) {
  require_matrix(logits, "cross_entropy");
  const std::size_t t_len = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != t_len) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + shape_string(logits.shape()));
  }
  std::size_t count = 0;
  for (auto id : targets) {
    if (id == pad_id) continue;
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw DimensionError("cross_entropy: target " + std::to_string(id) + " outside vocabulary " +
                           std::to_string(vocab));
    }
    ++count;
  }
  if (count == 0) throw std::invalid_argument("cross_entropy: every target position is padding");

  auto in = logits.data();
  std::vector<Real> probs(t_len * vocab, Real(0));
  double total = 0;
  for (std::size_t r = 0; r < t_len; ++r) {
    if (targets[r] == pad_id) continue;
    const Real* row = in.data() + r * vocab;
    Real peak = row[0];
    for (std::size_t c = 1; c < vocab; ++c) peak = std::max(peak, row[c]);
    Real z = 0;
    for (std::size_t c = 0; c < vocab; ++c) {
      const Real e = std::exp(row[c] - peak);
      probs[r * vocab + c] = e;
      z += e;
    }
    for (std::size_t c = 0; c < vocab; ++c) probs[r * vocab + c] /= z;
    total += static_cast<double>(peak + std::log(z) - row[targets[r]]);
  }
  const Real loss = static_cast<Real>(total / static_cast<double>(count));
  std::vector<TokenId> saved(targets.begin(), targets.end());
  return make_result<Real>(
      {1}, {loss}, {&logits},
      [vocab, count, pad_id, probs = std::move(probs),
       saved = std::move(saved)](TensorNode<Real>& self) {
        auto& pl = parent(self, 0);
        const Real g = self.grad[0] / static_cast<Real>(count);
        for (std::size_t r = 0; r < saved.size(); ++r) {
          if (saved[r] == pad_id) continue;
          Real* dst = pl.grad.data() + r * vocab;
          const Real* p = probs.data() + r * vocab;
          for (std::size_t c = 0; c < vocab; ++c) dst[c] += g * p[c];
          dst[saved[r]] -= g;
        }
      });
}

// ---------------------------------------------------------------------------

namespace {

struct AttentionGeometry {
  std::size_t d = 0;
  std::size_t head_dim = 0;
  std::vector<std::size_t> prob_offsets;  // per (segment, head)
  std::size_t prob_total = 0;
};

template <typename Real>
AttentionGeometry check_attention(const Tensor<Real>& q, const Tensor<Real>& k,
                                  const Tensor<Real>& v, const AttentionSpec& spec) {
  require_matrix(q, "attention");
  require_matrix(k, "attention");
  require_matrix(v, "attention");
  if (k.shape() != v.shape() || q.dim(1) != k.dim(1)) {
    throw DimensionError("attention: queries " + shape_string(q.shape()) + ", keys " +
                         shape_string(k.shape()) + ", values " + shape_string(v.shape()));
  }
  if (spec.heads == 0 || q.dim(1) % spec.heads != 0) {
    throw DimensionError("attention: width " + std::to_string(q.dim(1)) +
                         " not divisible by head count " + std::to_string(spec.heads));
  }
  if (spec.head_masks.size() != spec.heads) {
    throw DimensionError("attention: " + std::to_string(spec.head_masks.size()) +
                         " head masks for " + std::to_string(spec.heads) + " heads");
  }
  AttentionGeometry geo;
  geo.d = q.dim(1);
  geo.head_dim = geo.d / spec.heads;
  for (const auto& seg : spec.segments) {
    if (seg.q_offset + seg.q_len > q.dim(0) || seg.k_offset + seg.k_len > k.dim(0)) {
      throw DimensionError("attention: segment exceeds packed rows of " + shape_string(q.shape()) +
                           " / " + shape_string(k.shape()));
    }
    for (std::size_t h = 0; h < spec.heads; ++h) {
      geo.prob_offsets.push_back(geo.prob_total);
      geo.prob_total += seg.q_len * seg.k_len;
    }
  }
  return geo;
}

// Softmax over the unmasked keys of one query row; masked entries stay 0.
template <typename Real>
void attention_row(const Real* qrow, const Real* kbase, std::size_t ld, std::size_t head_dim,
                   std::size_t k_len, Real scale_factor, MaskKind kind, MaskDiagonal diagonal,
                   std::size_t i, Real* probs) {
  Real peak = -std::numeric_limits<Real>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < k_len; ++j) {
    if (!mask_allows(kind, diagonal, i, j)) continue;
    const Real* krow = kbase + j * ld;
    Real s = 0;
    for (std::size_t c = 0; c < head_dim; ++c) s += qrow[c] * krow[c];
    s *= scale_factor;
    probs[j] = s;
    peak = any ? std::max(peak, s) : s;
    any = true;
  }
  if (!any) return;
  Real total = 0;
  for (std::size_t j = 0; j < k_len; ++j) {
    if (!mask_allows(kind, diagonal, i, j)) continue;
    probs[j] = std::exp(probs[j] - peak);
    total += probs[j];
  }
  for (std::size_t j = 0; j < k_len; ++j) {
    if (mask_allows(kind, diagonal, i, j)) probs[j] /= total;
  }
}

}  // namespace

template <typename Real>
Tensor<Real> attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,
                       const AttentionSpec& spec) {
  AttentionGeometry geo = check_attention(q, k, v, spec);
  const std::size_t d = geo.d, hd = geo.head_dim;
  const Real scale_factor = Real(1) / std::sqrt(static_cast<Real>(hd));
  std::vector<Real> probs(geo.prob_total, Real(0));
  std::vector<Real> out(q.dim(0) * d, Real(0));
  auto qd = q.data();
  auto kd = k.data();
  auto vd = v.data();

  std::size_t slot = 0;
  for (const auto& seg : spec.segments) {
    for (std::size_t h = 0; h < spec.heads; ++h, ++slot) {
      Real* p = probs.data() + geo.prob_offsets[slot];
      const std::size_t col = h * hd;
      for (std::size_t i = 0; i < seg.q_len; ++i) {
        Real* prow = p + i * seg.k_len;
        attention_row(qd.data() + (seg.q_offset + i) * d + col, kd.data() + seg.k_offset * d + col,
                      d, hd, seg.k_len, scale_factor, spec.head_masks[h], spec.diagonal, i, prow);
        Real* orow = out.data() + (seg.q_offset + i) * d + col;
        for (std::size_t j = 0; j < seg.k_len; ++j) {
          if (prow[j] == Real(0)) continue;
          const Real* vrow = vd.data() + (seg.k_offset + j) * d + col;
          for (std::size_t c = 0; c < hd; ++c) orow[c] += prow[j] * vrow[c];
        }
      }
    }
  }

  return make_result<Real>(
      q.shape(), std::move(out), {&q, &k, &v},
      [spec, geo = std::move(geo), probs = std::move(probs),
       scale_factor](TensorNode<Real>& self) {
        auto& pq = parent(self, 0);
        auto& pk = parent(self, 1);
        auto& pv = parent(self, 2);
        const std::size_t d = geo.d, hd = geo.head_dim;
        std::vector<Real> dscore;
        std::size_t slot = 0;
        for (const auto& seg : spec.segments) {
          dscore.resize(seg.k_len);
          for (std::size_t h = 0; h < spec.heads; ++h, ++slot) {
            const Real* p = probs.data() + geo.prob_offsets[slot];
            const std::size_t col = h * hd;
            for (std::size_t i = 0; i < seg.q_len; ++i) {
              const Real* prow = p + i * seg.k_len;
              const Real* gout = self.grad.data() + (seg.q_offset + i) * d + col;
              Real weighted = 0;
              for (std::size_t j = 0; j < seg.k_len; ++j) {
                dscore[j] = 0;
                if (prow[j] == Real(0)) continue;
                const std::size_t krow_at = (seg.k_offset + j) * d + col;
                Real dp = 0;
                for (std::size_t c = 0; c < hd; ++c) dp += gout[c] * pv.data[krow_at + c];
                dscore[j] = dp;
                weighted += prow[j] * dp;
                if (pv.requires_grad) {
                  for (std::size_t c = 0; c < hd; ++c) pv.grad[krow_at + c] += prow[j] * gout[c];
                }
              }
              const std::size_t qrow_at = (seg.q_offset + i) * d + col;
              for (std::size_t j = 0; j < seg.k_len; ++j) {
                if (prow[j] == Real(0)) continue;
                const Real ds = prow[j] * (dscore[j] - weighted) * scale_factor;
                const std::size_t krow_at = (seg.k_offset + j) * d + col;
                if (pq.requires_grad) {
                  for (std::size_t c = 0; c < hd; ++c) pq.grad[qrow_at + c] += ds * pk.data[krow_at + c];
                }
                if (pk.requires_grad) {
                  for (std::size_t c = 0; c < hd; ++c) pk.grad[krow_at + c] += ds * pq.data[qrow_at + c];
                }
              }
            }
          }
        }
      });
}

template <typename Real>
std::vector<Real> attention_weights(const Tensor<Real>& q, const Tensor<Real>& k,
                                    const AttentionSpec& spec, std::size_t segment,
                                    std::size_t head) {
  AttentionGeometry geo = check_attention(q, k, k, spec);
  if (segment >= spec.segments.size() || head >= spec.heads) {
    throw std::out_of_range("attention_weights: segment or head out of range");
  }
  const auto& seg = spec.segments[segment];
  const std::size_t d = geo.d, hd = geo.head_dim;
  const Real scale_factor = Real(1) / std::sqrt(static_cast<Real>(hd));
  std::vector<Real> probs(seg.q_len * seg.k_len, Real(0));
  for (std::size_t i = 0; i < seg.q_len; ++i) {
    attention_row(q.data().data() + (seg.q_offset + i) * d + head * hd,
                  k.data().data() + seg.k_offset * d + head * hd, d, hd, seg.k_len, scale_factor,
                  spec.head_masks[head], spec.diagonal, i, probs.data() + i * seg.k_len);
  }
  return probs;
}

#define CLQG_INSTANTIATE_OPS(Real)                                                              \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);                       \
  template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);                          \
  template Tensor<Real> mul(const Tensor<Real>&, const Tensor<Real>&);                          \
  template Tensor<Real> scale(const Tensor<Real>&, Real);                                       \
  template Tensor<Real> add_bias(const Tensor<Real>&, const Tensor<Real>&);                     \
  template Tensor<Real> add_rows(const Tensor<Real>&, const Tensor<Real>&,                      \
                                 std::span<const std::size_t>);                                 \
  template Tensor<Real> relu(const Tensor<Real>&);                                              \
  template Tensor<Real> dropout(const Tensor<Real>&, double, bool, Rng&);                       \
  template Tensor<Real> sum(const Tensor<Real>&);                                               \
  template Tensor<Real> mean(const Tensor<Real>&);                                              \
  template Tensor<Real> softmax(const Tensor<Real>&, std::size_t);                              \
  template Tensor<Real> layer_norm(const Tensor<Real>&, const Tensor<Real>&,                    \
                                   const Tensor<Real>&, Real);                                  \
  template Tensor<Real> embedding(const Tensor<Real>&, std::span<const TokenId>);               \
  template Tensor<Real> cross_entropy(const Tensor<Real>&, std::span<const TokenId>, TokenId);  \
  template std::vector<Real> log_softmax_row(std::span<const Real>);                            \
  template Tensor<Real> attention(const Tensor<Real>&, const Tensor<Real>&,                     \
                                  const Tensor<Real>&, const AttentionSpec&);                   \
  template std::vector<Real> attention_weights(const Tensor<Real>&, const Tensor<Real>&,        \
                                               const AttentionSpec&, std::size_t, std::size_t);

CLQG_INSTANTIATE_OPS(float)
CLQG_INSTANTIATE_OPS(double)

}  // namespace clqg
