#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "clqg/transformer.hpp"
#include "support.hpp"

using namespace clqg;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor<double>& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

std::vector<double> to_vec(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

Mat mat_mul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat plus(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

Mat plus_bias(Mat a, const std::vector<double>& b) {
  for (auto& row : a)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
  return a;
}

Mat norm_oracle(const Mat& x, const NormWeights<double>& w) {
  const auto g = to_vec(w.gain), b = to_vec(w.bias);
  Mat out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(x[i].size());
    double mu = 0, var = 0;
    for (double v : x[i]) mu += v / n;
    for (double v : x[i]) var += (v - mu) * (v - mu) / n;
    for (std::size_t j = 0; j < x[i].size(); ++j) out[i][j] = (x[i][j] - mu) / std::sqrt(var + 1e-5) * g[j] + b[j];
  }
  return out;
}

// Per position, per head: weighted sum over the visible keys.
Mat attention_oracle(const Mat& queries, const Mat& keys_values, const AttentionWeights<double>& w,
                     std::size_t heads, const std::vector<MaskKind>& kinds, MaskDiagonal diagonal) {
  const Mat q = mat_mul(queries, to_mat(w.query));
  const Mat k = mat_mul(keys_values, to_mat(w.key));
  const Mat v = mat_mul(keys_values, to_mat(w.value));
  const std::size_t d = q[0].size(), dh = d / heads;
  Mat concat(q.size(), std::vector<double>(d, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      std::vector<double> logits(k.size(), -kInf);
      double top = -kInf;
      for (std::size_t j = 0; j < k.size(); ++j) {
        if (!mask_allows(kinds[h], diagonal, i, j)) continue;
        double s = 0;
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) s += q[i][c] * k[j][c];
        logits[j] = s / std::sqrt(static_cast<double>(dh));
        top = std::max(top, logits[j]);
      }
      if (top == -kInf) continue;
      double z = 0;
      for (double l : logits) z += l == -kInf ? 0.0 : std::exp(l - top);
      for (std::size_t j = 0; j < k.size(); ++j) {
        if (logits[j] == -kInf) continue;
        const double p = std::exp(logits[j] - top) / z;
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) concat[i][c] += p * v[j][c];
      }
    }
  }
  return plus_bias(mat_mul(concat, to_mat(w.output)), to_vec(w.output_bias));
}

Mat ff_oracle(const Mat& x, const FeedForwardWeights<double>& w) {
  Mat hidden = plus_bias(mat_mul(x, to_mat(w.inner)), to_vec(w.inner_bias));
  for (auto& row : hidden)
    for (auto& v : row) v = std::max(v, 0.0);
  return plus_bias(mat_mul(hidden, to_mat(w.outer)), to_vec(w.outer_bias));
}

Mat encoder_oracle(const Mat& x, const LayerWeights<double>& w, const ModelDims& dims) {
  Mat out = plus(x, attention_oracle(norm_oracle(x, w.self_norm), norm_oracle(x, w.self_norm), w.self_attn,
                                     dims.heads, encoder_head_masks(dims.heads), dims.mask_diagonal));
  return plus(out, ff_oracle(norm_oracle(out, w.ff_norm), w.ff));
}

Mat decoder_oracle(const Mat& y, const Mat& memory, const LayerWeights<double>& w, const ModelDims& dims) {
  const std::vector<MaskKind> causal(dims.heads, MaskKind::causal), open(dims.heads, MaskKind::none);
  const Mat h = norm_oracle(y, w.self_norm);
  Mat out = plus(y, attention_oracle(h, h, w.self_attn, dims.heads, causal, MaskDiagonal::strict));
  out = plus(out, attention_oracle(norm_oracle(out, w.cross_norm), memory, w.cross_attn, dims.heads, open,
                                   MaskDiagonal::strict));
  return plus(out, ff_oracle(norm_oracle(out, w.ff_norm), w.ff));
}

double max_diff(const Tensor<double>& t, const Mat& m) {
  double worst = 0;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) worst = std::max(worst, std::abs(t.at(i, j) - m[i][j]));
  return worst;
}

ModelDims tiny_dims() {
  ModelDims dims;
  dims.d_model = 8;
  dims.heads = 2;
  dims.ff_dim = 12;
  dims.vocab_size = 11;
  dims.max_len = 16;
  return dims;
}

// Nonzero biases and gains so the oracle exercises every parameter.
void perturb(LayerWeights<double>& w, Rng& rng) {
  w.for_each([&](const std::string&, Tensor<double>& t) {
    for (auto& v : t.data()) v += rng.uniform(-0.2, 0.2);
  });
}

}  // namespace

TEST_CASE("directional masks: examples") {
  const auto f3 = directional_mask(3, MaskKind::forward);
  const std::vector<double> expected{-kInf, 0, 0, -kInf, -kInf, 0, -kInf, -kInf, -kInf};
  CHECK(f3.matrix == expected);
  CHECK(directional_mask(1, MaskKind::forward).matrix == std::vector<double>{-kInf});
  CHECK(directional_mask(1, MaskKind::causal).matrix == std::vector<double>{0});
}

TEST_CASE("directional masks: algebra for n = 1..16") {
  for (std::size_t n = 1; n <= 16; ++n) {
    const auto f = directional_mask(n, MaskKind::forward);
    const auto b = directional_mask(n, MaskKind::backward);
    const auto c = directional_mask(n, MaskKind::causal);
    const auto fs = directional_mask(n, MaskKind::forward, MaskDiagonal::permit_self);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        CHECK((f.at(i, j) == 0.0) == (i < j));
        CHECK((f.at(i, j) == 0.0 || f.at(i, j) == -kInf));
        CHECK((b.at(i, j) == 0.0) == (i > j));
        CHECK(b.at(i, j) == f.at(j, i));
        // causal = complement of forward, which already includes the diagonal
        CHECK((c.at(i, j) == 0.0) == (f.at(i, j) != 0.0));
        CHECK((fs.at(i, j) == 0.0) == (i <= j));
      }
    }
  }
}

TEST_CASE("encoder head plan splits forward and backward") {
  const auto plan = encoder_head_masks(6);
  CHECK(plan == std::vector<MaskKind>{MaskKind::forward, MaskKind::forward, MaskKind::forward,
                                      MaskKind::backward, MaskKind::backward, MaskKind::backward});
}

TEST_CASE("positional encodings") {
  const auto pe = positional_encoding<double>(512, 300);
  for (std::size_t c = 0; c < 300; ++c) CHECK(pe.at(0, c) == (c % 2 == 0 ? 0.0 : 1.0));
  CHECK(pe.at(1, 0) == doctest::Approx(0.841471).epsilon(1e-6));
  for (std::size_t pos = 0; pos < 512; ++pos) {
    for (std::size_t i = 0; i < 150; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * i / 300.0);
      CHECK(std::abs(pe.at(pos, 2 * i) - std::sin(angle)) < 1e-6);
      CHECK(std::abs(pe.at(pos, 2 * i + 1) - std::cos(angle)) < 1e-6);
      const double s = pe.at(pos, 2 * i), c = pe.at(pos, 2 * i + 1);
      CHECK(std::abs(s * s + c * c - 1.0) < 1e-6);
    }
  }
  CHECK_THROWS_AS(positional_encoding<double>(4, 7), std::invalid_argument);
}

TEST_CASE("attention matches a per-position oracle") {
  Rng rng(21);
  auto dims = tiny_dims();
  for (int trial = 0; trial < 10; ++trial) {
    auto layer = LayerWeights<double>::init(dims, false, rng);
    perturb(layer, rng);
    const std::size_t n = 4;
    auto x = clqg::test::random_tensor({n, dims.d_model}, rng, -1, 1, false);
    for (auto kind : {MaskKind::none, MaskKind::forward, MaskKind::backward, MaskKind::causal}) {
      const auto mask = directional_mask(n, kind);
      auto out = multi_head_attention(x, x, x, mask, layer.self_attn, dims.heads);
      const std::vector<MaskKind> kinds(dims.heads, kind);
      CHECK(max_diff(out, attention_oracle(to_mat(x), to_mat(x), layer.self_attn, dims.heads, kinds,
                                           MaskDiagonal::strict)) < 1e-5);
    }
  }
}

TEST_CASE("masked positions receive exactly zero weight") {
  Rng rng(2);
  for (std::size_t n = 1; n <= 9; ++n) {
    auto q = clqg::test::random_tensor({n, 6}, rng, -3, 3, false);
    auto k = clqg::test::random_tensor({n, 6}, rng, -3, 3, false);
    for (auto kind : {MaskKind::forward, MaskKind::backward, MaskKind::causal}) {
      AttentionSpec spec{2, {kind, kind}, MaskDiagonal::strict, {{0, n, 0, n}}};
      for (std::size_t h = 0; h < 2; ++h) {
        const auto w = attention_weights(q, k, spec, 0, h);
        for (std::size_t i = 0; i < n; ++i) {
          double total = 0;
          for (std::size_t j = 0; j < n; ++j) {
            if (!mask_allows(kind, MaskDiagonal::strict, i, j)) CHECK(w[i * n + j] == 0.0);
            total += w[i * n + j];
          }
          const bool any = kind == MaskKind::causal || (kind == MaskKind::forward ? i + 1 < n : i > 0);
          CHECK(total == doctest::Approx(any ? 1.0 : 0.0));
        }
      }
    }
  }
}

TEST_CASE("degenerate softmax with identity projections copies the single visible value") {
  const std::size_t d = 4;
  std::vector<double> eye(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
  AttentionWeights<double> w{Tensor<double>::from_data({d, d}, eye), Tensor<double>::from_data({d, d}, eye),
                             Tensor<double>::from_data({d, d}, eye), Tensor<double>::from_data({d, d}, eye),
                             Tensor<double>::zeros({d})};
  auto x = Tensor<double>::from_data({2, d}, {1, 2, 3, 4, -5, 6, -7, 8});
  // Forward mask, n = 2: query 0 sees only key 1; query 1 sees nothing.
  auto out = multi_head_attention(x, x, x, directional_mask(2, MaskKind::forward), w, 2);
  for (std::size_t c = 0; c < d; ++c) {
    CHECK(out.at(0, c) == doctest::Approx(x.at(1, c)).epsilon(1e-12));
    CHECK(out.at(1, c) == 0.0);
  }
}

TEST_CASE("mask size must match the sequence") {
  Rng rng(1);
  auto dims = tiny_dims();
  auto layer = LayerWeights<double>::init(dims, false, rng);
  auto x = clqg::test::random_tensor({3, dims.d_model}, rng, -1, 1, false);
  CHECK_THROWS_AS(multi_head_attention(x, x, x, directional_mask(4, MaskKind::forward), layer.self_attn, 2),
                  DimensionError);
}

TEST_CASE("encoder-decoder stack matches the composed layer oracles") {
  Rng rng(33);
  auto dims = tiny_dims();
  auto embed = EmbeddingWeights<double>::init(dims, rng);
  std::vector<LayerWeights<double>> enc, dec;
  for (int l = 0; l < 2; ++l) {
    enc.push_back(LayerWeights<double>::init(dims, false, rng));
    dec.push_back(LayerWeights<double>::init(dims, true, rng));
    perturb(enc.back(), rng);
    perturb(dec.back(), rng);
  }
  auto final_norm = init_norm<double>(dims.d_model);
  const auto pe = positional_encoding<double>(dims.max_len, dims.d_model);
  const TokenIds src_ids{4, 7, 9, 10, 2}, tgt_ids{1, 8, 7, 2};
  const std::vector<TokenIds> srcs{src_ids}, tgts{tgt_ids};
  const auto sources = PackedSequences::pack(srcs);
  const auto targets = PackedSequences::pack(tgts);
  const ForwardOptions eval;

  auto x = embed_tokens(embed, sources, pe);
  for (auto& layer : enc) x = encoder_layer(x, sources, layer, dims, eval);
  auto y = embed_tokens(embed, targets, pe);
  for (auto& layer : dec) y = decoder_layer(y, targets, x, sources, layer, dims, eval);
  auto logits = vocabulary_logits(y, final_norm, embed);
  CHECK(logits.rows() == tgt_ids.size());
  CHECK(logits.cols() == dims.vocab_size);

  auto embed_oracle = [&](const TokenIds& ids) {
    Mat m;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      std::vector<double> row(dims.d_model);
      for (std::size_t c = 0; c < dims.d_model; ++c)
        row[c] = embed.table.at(ids[p], c) * std::sqrt(double(dims.d_model)) + pe.at(p, c);
      m.push_back(row);
    }
    return m;
  };
  Mat mx = embed_oracle(src_ids);
  for (auto& layer : enc) mx = encoder_oracle(mx, layer, dims);
  CHECK(max_diff(x, mx) < 1e-5);
  Mat my = embed_oracle(tgt_ids);
  for (auto& layer : dec) my = decoder_oracle(my, mx, layer, dims);
  const Mat ml = plus_bias(mat_mul(norm_oracle(my, final_norm), to_mat(embed.output)), to_vec(embed.output_bias));
  CHECK(max_diff(logits, ml) < 1e-5);
}

TEST_CASE("decoder layer is causal: gradients never flow from later positions") {
  Rng rng(44);
  auto dims = tiny_dims();
  auto layer = LayerWeights<double>::init(dims, true, rng);
  const std::size_t t_len = 5, s_len = 3;
  const std::vector<TokenIds> tgts{TokenIds(t_len, 1)}, srcs{TokenIds(s_len, 1)};
  const auto targets = PackedSequences::pack(tgts), sources = PackedSequences::pack(srcs);
  auto memory = clqg::test::random_tensor({s_len, dims.d_model}, rng, -1, 1, false);
  for (std::size_t t = 0; t < t_len; ++t) {
    auto y = clqg::test::random_tensor({t_len, dims.d_model}, rng);
    auto out = decoder_layer(y, targets, memory, sources, layer, dims, ForwardOptions{});
    std::vector<double> pick(t_len * dims.d_model, 0.0);
    for (std::size_t c = 0; c < dims.d_model; ++c) pick[t * dims.d_model + c] = rng.uniform(-1, 1);
    backward(sum(mul(out, Tensor<double>::from_data({t_len, dims.d_model}, pick))));
    for (std::size_t later = t + 1; later < t_len; ++later)
      for (std::size_t c = 0; c < dims.d_model; ++c) CHECK(y.grad()[later * dims.d_model + c] == 0.0);
    double earlier = 0;
    for (std::size_t i = 0; i < (t + 1) * dims.d_model; ++i) earlier += std::abs(y.grad()[i]);
    CHECK(earlier > 0.0);
  }
}

TEST_CASE("packed batches match single-sequence runs exactly") {
  Rng rng(5);
  auto dims = tiny_dims();
  auto layer = LayerWeights<double>::init(dims, false, rng);
  const std::vector<TokenIds> seqs{{4, 5, 6}, {7}, {8, 9, 10, 4, 5}};
  auto embed = EmbeddingWeights<double>::init(dims, rng);
  const auto pe = positional_encoding<double>(dims.max_len, dims.d_model);
  const auto packed = PackedSequences::pack(seqs);
  CHECK(packed.positions() == std::vector<std::size_t>{0, 1, 2, 0, 0, 1, 2, 3, 4});
  auto batch = encoder_layer(embed_tokens(embed, packed, pe), packed, layer, dims, ForwardOptions{});
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    const std::vector<TokenIds> one{seqs[s]};
    const auto single_batch = PackedSequences::pack(one);
    auto single = encoder_layer(embed_tokens(embed, single_batch, pe), single_batch, layer, dims, ForwardOptions{});
    for (std::size_t i = 0; i < seqs[s].size(); ++i)
      for (std::size_t c = 0; c < dims.d_model; ++c) CHECK(single.at(i, c) == batch.at(packed.offsets[s] + i, c));
  }
}

TEST_CASE("model dimensions are validated") {
  auto dims = tiny_dims();
  CHECK_NOTHROW(dims.validate());
  dims.heads = 3;
  CHECK_THROWS_AS(dims.validate(), std::invalid_argument);
}
