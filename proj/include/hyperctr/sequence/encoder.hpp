#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hyperctr/data/records.hpp"
#include "hyperctr/data/slots.hpp"
#include "hyperctr/numerics/ops.hpp"
#include "hyperctr/numerics/parameters.hpp"
#include "hyperctr/sequence/attention.hpp"

namespace hyperctr {

struct EncoderConfig {
  Index dim = 64;
  std::size_t heads = 4;
  std::size_t blocks = 1;
  bool positional = false;

  void validate() const {
    if (dim <= 0) throw ConfigError("embedding dimension must be positive");
    if (heads == 0 || dim % static_cast<Index>(heads) != 0) throw ConfigError("embedding dimension must divide into heads");
    if (blocks == 0) throw ConfigError("at least one attention block is required");
  }
};

inline std::string projection_name(Modality m) { return "proj." + std::string(modality_name(m)); }

// User/item tables and one projection per feature modality.
template <typename Rng>
void add_embedding_params(ParameterStore& store, std::size_t num_users, std::size_t num_items,
                          const ModalFeatureStore& features, Index dim, double stddev, Rng& rng) {
  store.add("user_table", gaussian_matrix(static_cast<Index>(num_users), dim, stddev, rng));
  store.add("item_table", gaussian_matrix(static_cast<Index>(num_items), dim, stddev, rng));
  for (Modality m : features.modalities()) {
    const Index dm = features.dim(m);
    store.add(projection_name(m), gaussian_matrix(dm, dim, 1.0 / std::sqrt(static_cast<double>(dm)), rng));
  }
}

template <typename Rng>
void add_encoder_params(ParameterStore& store, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const Index d = cfg.dim;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    for (const char* name : {"query", "key", "value", "output"}) store.add(p + name, gaussian_matrix(d, d, s, rng));
    store.add(p + "norm1.gain", Matrix::Ones(1, d));
    store.add(p + "norm1.bias", Matrix::Zero(1, d));
    store.add(p + "ffn.w1", gaussian_matrix(d, d, s, rng));
    store.add(p + "ffn.b1", Matrix::Zero(1, d));
    store.add(p + "ffn.w2", gaussian_matrix(d, d, s, rng));
    store.add(p + "ffn.b2", Matrix::Zero(1, d));
    store.add(p + "norm2.gain", Matrix::Ones(1, d));
    store.add(p + "norm2.bias", Matrix::Zero(1, d));
  }
}

namespace ad {

struct BlockVars {
  Var query, key, value, output;
  Var norm1_gain, norm1_bias;
  Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Var norm2_gain, norm2_bias;
};

inline BlockVars block_vars(const Binding& b, std::size_t block) {
  const std::string p = "block" + std::to_string(block) + ".";
  return BlockVars{b[p + "query"],      b[p + "key"],        b[p + "value"],  b[p + "output"], b[p + "norm1.gain"],
                   b[p + "norm1.bias"], b[p + "ffn.w1"],     b[p + "ffn.b1"], b[p + "ffn.w2"], b[p + "ffn.b2"],
                   b[p + "norm2.gain"], b[p + "norm2.bias"]};
}

inline std::vector<BlockVars> all_block_vars(const Binding& b, std::size_t blocks) {
  std::vector<BlockVars> out;
  for (std::size_t k = 0; k < blocks; ++k) out.push_back(block_vars(b, k));
  return out;
}

// X_m P_m for every item; rows of items lacking the modality are zero.
inline Var modality_table(const Binding& b, const ModalFeatureStore& features, Modality m) {
  return matmul(b.tape().constant(features.features(m)), b[projection_name(m)]);
}

// Per item, the mean of its projected features over the modalities it carries.
inline Var attribute_table(const Binding& b, const ModalFeatureStore& features) {
  const auto mods = features.modalities();
  if (mods.empty()) throw ContractError("attribute table needs at least one modality");
  const std::size_t n = features.num_items();
  std::vector<double> count(n, 0.0);
  for (Modality m : mods) {
    for (std::size_t i = 0; i < n; ++i) count[i] += features.present(i, m) ? 1.0 : 0.0;
  }
  Var total;
  for (std::size_t k = 0; k < mods.size(); ++k) {
    std::vector<double> coeff(n);
    for (std::size_t i = 0; i < n; ++i) coeff[i] = features.present(i, mods[k]) ? 1.0 / count[i] : 0.0;
    Var term = row_scale(modality_table(b, features, mods[k]), std::move(coeff));
    total = k == 0 ? term : add(total, term);
  }
  return total;
}

}  // namespace ad

// A sequence with no items keeps one unmasked position holding only the user
// embedding, so every user has something to attend to.
inline SlotSequence with_user_fallback(SlotSequence s) {
  if (s.length == 0 && s.capacity() > 0) {
    s.pad[0] = 0;
    s.length = 1;
  }
  return s;
}

inline Matrix sinusoidal_positions(std::size_t length, Index dim) {
  Matrix pe(static_cast<Index>(length), dim);
  for (Index pos = 0; pos < pe.rows(); ++pos) {
    for (Index c = 0; c < dim; ++c) {
      const double rate = std::pow(10000.0, -static_cast<double>(c - c % 2) / static_cast<double>(dim));
      pe(pos, c) = c % 2 == 0 ? std::sin(static_cast<double>(pos) * rate) : std::cos(static_cast<double>(pos) * rate);
    }
  }
  return pe;
}

namespace ad {

// Stacked (B*l)xd embeddings: user row + item row + attribute row at every
// unmasked position, zeros at pads. All sequences must share one capacity.
inline Var embed_sequences(Var user_table, Var item_table, Var attr_table, std::span<const SlotSequence> seqs,
                           bool positional = false) {
  if (seqs.empty()) throw ContractError("embed_sequences needs at least one sequence");
  const std::size_t cap = seqs.front().capacity();
  std::vector<long> users;
  std::vector<long> items;
  users.reserve(seqs.size() * cap);
  items.reserve(seqs.size() * cap);
  for (const auto& s : seqs) {
    if (s.capacity() != cap) throw ShapeError("embed_sequences: mixed sequence capacities");
    for (std::size_t k = 0; k < cap; ++k) {
      users.push_back(s.pad[k] ? -1L : static_cast<long>(s.user));
      items.push_back(s.pad[k] ? -1L : s.items[k]);
    }
  }
  Var e = add(gather_rows(user_table, users), add(gather_rows(item_table, items), gather_rows(attr_table, items)));
  if (positional) {
    const Matrix pe = sinusoidal_positions(cap, user_table.cols());
    Matrix stacked = Matrix::Zero(static_cast<Index>(users.size()), user_table.cols());
    for (std::size_t r = 0; r < users.size(); ++r) {
      if (users[r] >= 0) stacked.row(static_cast<Index>(r)) = pe.row(static_cast<Index>(r % cap));
    }
    e = add(e, e.tape->constant(std::move(stacked)));
  }
  return e;
}

// Heads are column slices of the query/key/value projections.
inline Var multi_head_attention(Var queries, Var keys, std::shared_ptr<const AttentionLayout> layout, const BlockVars& p) {
  Var q = matmul(queries, p.query);
  Var k = matmul(keys, p.key);
  Var v = matmul(keys, p.value);
  return matmul(grouped_attention(q, k, v, std::move(layout)), p.output);
}

inline Var feed_forward(Var x, Var w1, Var b1, Var w2, Var b2) {
  return add_row(matmul(relu(add_row(matmul(x, w1), b1)), w2), b2);
}

inline Var norm_affine(Var x, Var gain, Var bias) { return add_row(mul_row(layer_norm_rows(x), gain), bias); }

// Attention and feed-forward sub-layers, each wrapped in residual + layer norm.
inline Var attention_block(Var queries, Var keys, std::shared_ptr<const AttentionLayout> layout, const BlockVars& p) {
  Var h = norm_affine(add(queries, multi_head_attention(queries, keys, std::move(layout), p)), p.norm1_gain, p.norm1_bias);
  return norm_affine(add(h, feed_forward(h, p.ffn_w1, p.ffn_b1, p.ffn_w2, p.ffn_b2)), p.norm2_gain, p.norm2_bias);
}

// One output row per sequence, taken at its most recent unmasked position.
inline Var encode_sequences(Var embedded, std::span<const SlotSequence> seqs, const std::vector<BlockVars>& blocks,
                            std::size_t heads) {
  if (seqs.empty() || blocks.empty()) throw ContractError("encode_sequences needs sequences and blocks");
  const std::size_t cap = seqs.front().capacity();
  std::vector<std::uint8_t> mask;
  std::vector<long> last_rows;
  std::vector<std::size_t> last_block;
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    if (seqs[b].length == 0) throw ContractError("sequence of user " + std::to_string(seqs[b].user) + " is fully masked");
    mask.insert(mask.end(), seqs[b].pad.begin(), seqs[b].pad.end());
    last_rows.push_back(static_cast<long>(b * cap + seqs[b].length - 1));
    last_block.push_back(b);
  }
  Var x = embedded;
  for (std::size_t k = 0; k + 1 < blocks.size(); ++k) {
    auto full = std::make_shared<AttentionLayout>();
    full->block_len = cap;
    full->key_mask = mask;
    full->heads = heads;
    for (std::size_t r = 0; r < seqs.size() * cap; ++r) full->query_block.push_back(r / cap);
    x = attention_block(x, x, full, blocks[k]);
  }
  auto last = std::make_shared<AttentionLayout>();
  last->block_len = cap;
  last->key_mask = std::move(mask);
  last->heads = heads;
  last->query_block = std::move(last_block);
  return attention_block(gather_rows(x, std::move(last_rows)), x, last, blocks.back());
}

}  // namespace ad
}  // namespace hyperctr
