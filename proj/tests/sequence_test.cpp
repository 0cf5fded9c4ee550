#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hyperctr/numerics/grad_check.hpp"
#include "hyperctr/sequence/encoder.hpp"
#include "test_support.hpp"

namespace hyperctr {
namespace {

using ad::Binding;
using ad::Tape;
using ad::Var;

// Plain-Eigen reference pieces.
Matrix softmax_row(const Matrix& s) {
  const Matrix e = (s.array() - s.maxCoeff()).exp().matrix();
  return e / e.sum();
}

// Unmasked attention over all rows of x, head h using columns [h*dk, (h+1)*dk).
Matrix attention_oracle(const Matrix& queries, const Matrix& keys, const Matrix& wq, const Matrix& wk, const Matrix& wv,
                        const Matrix& wo, std::size_t heads, const std::vector<std::uint8_t>& mask = {}) {
  const Matrix q = queries * wq;
  const Matrix k = keys * wk;
  const Matrix v = keys * wv;
  const Index dk = q.cols() / static_cast<Index>(heads);
  Matrix out = Matrix::Zero(q.rows(), q.cols());
  for (Index r = 0; r < q.rows(); ++r) {
    for (std::size_t h = 0; h < heads; ++h) {
      const Index c0 = static_cast<Index>(h) * dk;
      Matrix s(1, k.rows());
      for (Index j = 0; j < k.rows(); ++j) {
        double dot = 0.0;
        for (Index c = 0; c < dk; ++c) dot += q(r, c0 + c) * k(j, c0 + c);
        s(0, j) = (!mask.empty() && mask[static_cast<std::size_t>(j)]) ? -1e300 : dot / std::sqrt(static_cast<double>(dk));
      }
      const Matrix p = softmax_row(s);
      for (Index j = 0; j < k.rows(); ++j) {
        for (Index c = 0; c < dk; ++c) out(r, c0 + c) += p(0, j) * v(j, c0 + c);
      }
    }
  }
  return out * wo;
}

Matrix layer_norm_oracle(const Matrix& x, const Matrix& gain, const Matrix& bias) {
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    double var = 0.0;
    for (Index c = 0; c < x.cols(); ++c) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= static_cast<double>(x.cols());
    for (Index c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - mu) / std::sqrt(var + 1e-5) * gain(0, c) + bias(0, c);
  }
  return out;
}

Matrix ffn_oracle(const Matrix& x, const Matrix& w1, const Matrix& b1, const Matrix& w2, const Matrix& b2) {
  Matrix h = x * w1;
  for (Index r = 0; r < h.rows(); ++r) h.row(r) += b1;
  h = h.cwiseMax(0.0) * w2;
  for (Index r = 0; r < h.rows(); ++r) h.row(r) += b2;
  return h;
}

struct Fixture {
  EncoderConfig cfg;
  ParameterStore store;

  explicit Fixture(Index dim = 8, std::size_t heads = 2, std::size_t blocks = 1, unsigned seed = 7) {
    cfg.dim = dim;
    cfg.heads = heads;
    cfg.blocks = blocks;
    std::mt19937_64 rng(seed);
    add_encoder_params(store, cfg, rng);
    // Perturb norms and biases away from their identity initial values.
    for (const auto& p : store.all()) {
      if (p.name.find("norm") != std::string::npos || p.name.find(".b") != std::string::npos) {
        store.at(p.name).value += gaussian_matrix(p.value.rows(), p.value.cols(), 0.3, rng);
      }
    }
  }
  const Matrix& v(const std::string& name) const { return store.at(name).value; }
};

Matrix block_oracle(const Fixture& f, std::size_t block, const Matrix& queries, const Matrix& keys,
                    const std::vector<std::uint8_t>& mask) {
  const std::string p = "block" + std::to_string(block) + ".";
  const Matrix att = attention_oracle(queries, keys, f.v(p + "query"), f.v(p + "key"), f.v(p + "value"), f.v(p + "output"),
                                      f.cfg.heads, mask);
  const Matrix h = layer_norm_oracle(queries + att, f.v(p + "norm1.gain"), f.v(p + "norm1.bias"));
  const Matrix g = h + ffn_oracle(h, f.v(p + "ffn.w1"), f.v(p + "ffn.b1"), f.v(p + "ffn.w2"), f.v(p + "ffn.b2"));
  return layer_norm_oracle(g, f.v(p + "norm2.gain"), f.v(p + "norm2.bias"));
}

SlotSequence sequence_of(std::uint32_t user, std::vector<std::uint32_t> items, std::size_t cap) {
  return make_sequence(user, 0, items, cap);
}

TEST(EmbedSequences, AllPadRowsAreZero) {
  std::mt19937_64 rng(1);
  Tape t;
  Var users = t.constant(gaussian_matrix(3, 4, 1.0, rng));
  Var items = t.constant(gaussian_matrix(5, 4, 1.0, rng));
  Var attrs = t.constant(gaussian_matrix(5, 4, 1.0, rng));
  const std::vector<SlotSequence> seqs = {sequence_of(1, {}, 3)};
  EXPECT_EQ(ad::embed_sequences(users, items, attrs, seqs).value(), Matrix::Zero(3, 4));
}

TEST(EmbedSequences, ZeroFeaturesLeaveUserPlusItem) {
  std::mt19937_64 rng(2);
  const Matrix u = gaussian_matrix(3, 4, 1.0, rng);
  const Matrix i = gaussian_matrix(5, 4, 1.0, rng);
  Tape t;
  const std::vector<SlotSequence> seqs = {sequence_of(2, {4}, 1)};
  const Matrix e = ad::embed_sequences(t.constant(u), t.constant(i), t.constant(Matrix::Zero(5, 4)), seqs).value();
  EXPECT_EQ(e, Matrix(u.row(2) + i.row(4)));
}

TEST(EmbedSequences, MatchesPerRowSum) {
  std::mt19937_64 rng(3);
  const Matrix u = gaussian_matrix(4, 6, 1.0, rng);
  const Matrix i = gaussian_matrix(9, 6, 1.0, rng);
  const Matrix a = gaussian_matrix(9, 6, 1.0, rng);
  const std::vector<SlotSequence> seqs = {sequence_of(0, {3, 1, 8}, 5), sequence_of(3, {2, 2, 7, 0, 5, 6}, 5)};
  Tape t;
  const Matrix e = ad::embed_sequences(t.constant(u), t.constant(i), t.constant(a), seqs).value();
  ASSERT_EQ(e.rows(), 10);
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    for (std::size_t k = 0; k < 5; ++k) {
      const Index row = static_cast<Index>(b * 5 + k);
      Matrix expect = Matrix::Zero(1, 6);
      if (!seqs[b].pad[k]) {
        const Index item = seqs[b].items[k];
        for (Index c = 0; c < 6; ++c) expect(0, c) = u(seqs[b].user, c) + i(item, c) + a(item, c);
      }
      EXPECT_LT(max_abs_diff(e.row(row), expect), 1e-15);
    }
  }
}

TEST(EmbedSequences, PositionalCodesOnlyOnRealPositions) {
  Tape t;
  const std::vector<SlotSequence> seqs = {sequence_of(0, {1}, 3)};
  const Matrix e =
      ad::embed_sequences(t.constant(Matrix::Zero(1, 4)), t.constant(Matrix::Zero(2, 4)), t.constant(Matrix::Zero(2, 4)), seqs, true)
          .value();
  EXPECT_EQ(e.row(0), make_matrix({{0.0, 1.0, 0.0, 1.0}}));
  EXPECT_EQ(e.bottomRows(2), Matrix::Zero(2, 4));
  EXPECT_NEAR(sinusoidal_positions(3, 4)(2, 0), std::sin(2.0), 1e-15);
  EXPECT_NEAR(sinusoidal_positions(3, 4)(2, 3), std::cos(2.0 / 100.0), 1e-15);
}

std::shared_ptr<ad::AttentionLayout> full_layout(std::size_t rows, std::size_t heads, std::vector<std::uint8_t> mask = {}) {
  auto l = std::make_shared<ad::AttentionLayout>();
  l->block_len = rows;
  l->heads = heads;
  l->key_mask = mask.empty() ? std::vector<std::uint8_t>(rows, 0) : std::move(mask);
  l->query_block.assign(rows, 0);
  return l;
}

TEST(MultiHeadAttention, SingleRowPassesValueThroughOutput) {
  Fixture f(8, 2);
  std::mt19937_64 rng(4);
  const Matrix x = gaussian_matrix(1, 8, 1.0, rng);
  Tape t;
  Binding b(t, f.store);
  const Matrix out = ad::multi_head_attention(t.constant(x), t.constant(x), full_layout(1, 2), ad::block_vars(b, 0)).value();
  EXPECT_LT(max_abs_diff(out, x * f.v("block0.value") * f.v("block0.output")), 1e-12);
}

TEST(MultiHeadAttention, IdenticalRowsGiveIdenticalOutputs) {
  Fixture f(8, 2);
  std::mt19937_64 rng(5);
  const Matrix row = gaussian_matrix(1, 8, 1.0, rng);
  Matrix x(2, 8);
  x << row, row;
  Tape t;
  Binding b(t, f.store);
  const Matrix out = ad::multi_head_attention(t.constant(x), t.constant(x), full_layout(2, 2), ad::block_vars(b, 0)).value();
  EXPECT_EQ(out.row(0), out.row(1));
}

TEST(MultiHeadAttention, MatchesPerHeadLoop) {
  Fixture f(8, 2);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x = gaussian_matrix(6, 8, 1.0, rng);
    Tape t;
    Binding b(t, f.store);
    const Matrix out = ad::multi_head_attention(t.constant(x), t.constant(x), full_layout(6, 2), ad::block_vars(b, 0)).value();
    const Matrix expect = attention_oracle(x, x, f.v("block0.query"), f.v("block0.key"), f.v("block0.value"),
                                           f.v("block0.output"), 2);
    EXPECT_LT(max_abs_diff(out, expect), 1e-10);
  }
}

TEST(MultiHeadAttention, MaskedKeysGetExactlyZeroWeight) {
  std::mt19937_64 rng(8);
  const Matrix q = gaussian_matrix(4, 6, 1.0, rng);
  const Matrix k = gaussian_matrix(4, 6, 1.0, rng);
  const auto layout = full_layout(4, 3, {0, 1, 0, 1});
  const auto weights = ad::attention_weights(q, k, *layout);
  ASSERT_EQ(weights.size(), 3u);
  for (const Matrix& w : weights) {
    for (Index r = 0; r < 4; ++r) {
      EXPECT_EQ(w(r, 1), 0.0);
      EXPECT_EQ(w(r, 3), 0.0);
      EXPECT_NEAR(w.row(r).sum(), 1.0, 1e-15);
    }
  }
  EXPECT_THROW(ad::attention_weights(q, k, *full_layout(4, 3, {1, 1, 1, 1})), ContractError);
}

TEST(MultiHeadAttention, RejectsBadLayouts) {
  Tape t;
  Var x = t.constant(Matrix::Zero(4, 6));
  EXPECT_THROW(ad::grouped_attention(x, x, x, full_layout(4, 4)), ShapeError);
  auto short_mask = full_layout(4, 2);
  short_mask->key_mask.pop_back();
  EXPECT_THROW(ad::grouped_attention(x, x, x, short_mask), ShapeError);
  auto uneven = full_layout(4, 2);
  uneven->block_len = 3;
  EXPECT_THROW(ad::grouped_attention(x, x, x, uneven), ShapeError);
}

TEST(MultiHeadAttention, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(9);
  ParameterStore s;
  s.add("q", gaussian_matrix(3, 4, 1.0, rng));
  s.add("k", gaussian_matrix(6, 4, 1.0, rng));
  s.add("v", gaussian_matrix(6, 4, 1.0, rng));
  auto layout = std::make_shared<ad::AttentionLayout>();
  layout->block_len = 3;
  layout->heads = 2;
  layout->key_mask = {0, 0, 1, 0, 1, 1};
  layout->query_block = {0, 1, 0};
  auto f = [&](Tape&, const Binding& b) {
    Var out = ad::grouped_attention(b["q"], b["k"], b["v"], layout);
    return ad::add(ad::sum_squares(out), ad::scale(ad::sum_all(out), 0.3));
  };
  EXPECT_LT(ad::grad_check(f, s).max_rel_error, 1e-6);
}

TEST(FeedForward, IdentityWeightsKeepNonnegativeInput) {
  std::mt19937_64 rng(10);
  const Matrix x = gaussian_matrix(3, 4, 1.0, rng).cwiseAbs();
  Tape t;
  Var id = t.constant(Matrix::Identity(4, 4));
  Var zero = t.constant(Matrix::Zero(1, 4));
  EXPECT_EQ(ad::feed_forward(t.constant(x), id, zero, id, zero).value(), x);
}

TEST(FeedForward, ZeroInputBroadcastsBiasPath) {
  std::mt19937_64 rng(11);
  const Matrix w1 = gaussian_matrix(4, 4, 1.0, rng);
  const Matrix b1 = gaussian_matrix(1, 4, 1.0, rng);
  const Matrix w2 = gaussian_matrix(4, 4, 1.0, rng);
  const Matrix b2 = gaussian_matrix(1, 4, 1.0, rng);
  Tape t;
  const Matrix out =
      ad::feed_forward(t.constant(Matrix::Zero(3, 4)), t.constant(w1), t.constant(b1), t.constant(w2), t.constant(b2)).value();
  const Matrix expect = b1.cwiseMax(0.0) * w2 + b2;
  for (Index r = 0; r < 3; ++r) EXPECT_LT(max_abs_diff(out.row(r), expect), 1e-14);
  const Matrix x = gaussian_matrix(5, 4, 1.0, rng);
  const Matrix random =
      ad::feed_forward(t.constant(x), t.constant(w1), t.constant(b1), t.constant(w2), t.constant(b2)).value();
  EXPECT_LT(max_abs_diff(random, ffn_oracle(x, w1, b1, w2, b2)), 1e-12);
}

TEST(EncodeSequences, SingleItemReducesToSelfAttentionOfThatRow) {
  Fixture f(8, 2);
  std::mt19937_64 rng(12);
  const Matrix e = gaussian_matrix(1, 8, 1.0, rng);
  const std::vector<SlotSequence> seqs = {sequence_of(0, {3}, 1)};
  Tape t;
  Binding b(t, f.store);
  const Matrix out = ad::encode_sequences(t.constant(e), seqs, ad::all_block_vars(b, 1), 2).value();
  // Softmax over one key is 1, so attention is the value-output projection.
  const Matrix h = layer_norm_oracle(e + e * f.v("block0.value") * f.v("block0.output"), f.v("block0.norm1.gain"),
                                     f.v("block0.norm1.bias"));
  const Matrix g = h + ffn_oracle(h, f.v("block0.ffn.w1"), f.v("block0.ffn.b1"), f.v("block0.ffn.w2"), f.v("block0.ffn.b2"));
  EXPECT_LT(max_abs_diff(out, layer_norm_oracle(g, f.v("block0.norm2.gain"), f.v("block0.norm2.bias"))), 1e-10);
}

TEST(EncodeSequences, MatchesCompositionOracle) {
  Fixture f(8, 2, 2);
  std::mt19937_64 rng(13);
  const std::vector<SlotSequence> seqs = {sequence_of(0, {1, 2, 3}, 5), sequence_of(1, {4, 5, 6, 7, 8}, 5)};
  const Matrix e = gaussian_matrix(10, 8, 1.0, rng);
  Tape t;
  Binding b(t, f.store);
  const Matrix out = ad::encode_sequences(t.constant(e), seqs, ad::all_block_vars(b, 2), 2).value();
  ASSERT_EQ(out.rows(), 2);
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    const Matrix rows = e.middleRows(static_cast<Index>(s * 5), 5);
    const Matrix first = block_oracle(f, 0, rows, rows, seqs[s].pad);
    const Matrix last = first.row(static_cast<Index>(seqs[s].length - 1));
    const Matrix expect = block_oracle(f, 1, last, first, seqs[s].pad);
    EXPECT_LT(max_abs_diff(out.row(static_cast<Index>(s)), expect), 1e-10);
  }
}

TEST(EncodeSequences, PaddedTailContentIsIgnored) {
  Fixture f(8, 2, 2);
  std::mt19937_64 rng(14);
  const std::vector<SlotSequence> seqs = {sequence_of(0, {1, 2}, 5)};
  Matrix e = gaussian_matrix(5, 8, 1.0, rng);
  Tape t;
  Binding b(t, f.store);
  const Matrix before = ad::encode_sequences(t.constant(e), seqs, ad::all_block_vars(b, 2), 2).value();
  e.row(2).swap(e.row(4));
  e.row(3) = gaussian_matrix(1, 8, 5.0, rng);
  const Matrix after = ad::encode_sequences(t.constant(e), seqs, ad::all_block_vars(b, 2), 2).value();
  EXPECT_EQ(before, after);
}

TEST(EncodeSequences, GradientsMatchFiniteDifferences) {
  Fixture f(4, 2, 2, 15);
  std::mt19937_64 rng(16);
  f.store.add("e", gaussian_matrix(6, 4, 1.0, rng));
  const std::vector<SlotSequence> seqs = {sequence_of(0, {1, 2}, 3), sequence_of(1, {4, 5, 6}, 3)};
  auto fn = [&](Tape&, const Binding& b) {
    Var out = ad::encode_sequences(b["e"], seqs, ad::all_block_vars(b, 2), 2);
    return ad::add(ad::sum_squares(out), ad::scale(ad::sum_all(out), 0.3));
  };
  EXPECT_LT(ad::grad_check(fn, f.store).max_rel_error, 1e-5);
}

TEST(EncodeSequences, FullyMaskedSequenceIsAContractViolation) {
  Fixture f(4, 2);
  Tape t;
  Binding b(t, f.store);
  const std::vector<SlotSequence> seqs = {sequence_of(0, {}, 2)};
  EXPECT_THROW(ad::encode_sequences(t.constant(Matrix::Zero(2, 4)), seqs, ad::all_block_vars(b, 1), 2), ContractError);
  const SlotSequence fixed = with_user_fallback(seqs[0]);
  EXPECT_EQ(fixed.length, 1u);
  EXPECT_EQ(fixed.pad, (std::vector<std::uint8_t>{0, 1}));
  EXPECT_EQ(fixed.items[0], -1);
}

TEST(EncoderConfig, Validation) {
  EncoderConfig c;
  c.dim = 10;
  c.heads = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c.heads = 2;
  c.blocks = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace hyperctr
