#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "hyperctr/numerics/ops.hpp"

namespace hyperctr::ad {

// Key/value rows come in consecutive blocks of `block_len` rows; query row r
// attends only to the unmasked rows of block query_block[r]. Columns are split
// into `heads` equal slices, each with its own scaled dot-product softmax.
struct AttentionLayout {
  std::vector<std::size_t> query_block;
  std::size_t block_len = 0;
  std::vector<std::uint8_t> key_mask;  // 1 = masked
  std::size_t heads = 1;
};

namespace detail {

inline void check_layout(const AttentionLayout& layout, const Matrix& q, const Matrix& k, const Matrix& v) {
  if (layout.heads == 0 || q.cols() % static_cast<Index>(layout.heads) != 0) {
    throw ShapeError("attention: width " + std::to_string(q.cols()) + " not divisible by " + std::to_string(layout.heads) +
                     " heads");
  }
  if (k.cols() != q.cols() || v.cols() != q.cols() || k.rows() != v.rows()) {
    throw ShapeError("attention: q " + shape_of(q) + ", k " + shape_of(k) + ", v " + shape_of(v));
  }
  if (layout.block_len == 0 || static_cast<std::size_t>(k.rows()) % layout.block_len != 0) {
    throw ShapeError("attention: " + std::to_string(k.rows()) + " key rows not a multiple of block length " +
                     std::to_string(layout.block_len));
  }
  if (layout.key_mask.size() != static_cast<std::size_t>(k.rows())) throw ShapeError("attention: key mask length");
  if (layout.query_block.size() != static_cast<std::size_t>(q.rows())) throw ShapeError("attention: query block list length");
  const std::size_t blocks = static_cast<std::size_t>(k.rows()) / layout.block_len;
  for (std::size_t b : layout.query_block) {
    if (b >= blocks) throw ShapeError("attention: query refers to block " + std::to_string(b));
  }
}

}  // namespace detail

// Attention weights for every (query row, head), each row of length block_len
// with exact zeros at masked keys.
inline std::vector<Matrix> attention_weights(const Matrix& q, const Matrix& k, const AttentionLayout& layout) {
  const Index dk = q.cols() / static_cast<Index>(layout.heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const auto L = static_cast<Index>(layout.block_len);
  std::vector<Matrix> out(layout.heads, Matrix::Zero(q.rows(), L));
  for (Index r = 0; r < q.rows(); ++r) {
    const Index base = static_cast<Index>(layout.query_block[static_cast<std::size_t>(r)]) * L;
    bool any = false;
    for (Index j = 0; j < L; ++j) any = any || !layout.key_mask[static_cast<std::size_t>(base + j)];
    if (!any) throw ContractError("attention: every key position of a block is masked");
    for (std::size_t h = 0; h < layout.heads; ++h) {
      const Index c0 = static_cast<Index>(h) * dk;
      double mx = -std::numeric_limits<double>::infinity();
      Eigen::Matrix<double, 1, Eigen::Dynamic> s(L);
      for (Index j = 0; j < L; ++j) {
        if (layout.key_mask[static_cast<std::size_t>(base + j)]) continue;
        s[j] = q.row(r).segment(c0, dk).dot(k.row(base + j).segment(c0, dk)) * inv_sqrt;
        mx = std::max(mx, s[j]);
      }
      double total = 0.0;
      for (Index j = 0; j < L; ++j) {
        if (layout.key_mask[static_cast<std::size_t>(base + j)]) continue;
        const double e = std::exp(s[j] - mx);
        out[h](r, j) = e;
        total += e;
      }
      out[h].row(r) /= total;
    }
  }
  return out;
}

inline Var grouped_attention(Var q, Var k, Var v, std::shared_ptr<const AttentionLayout> layout) {
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  detail::check_layout(*layout, qv, kv, vv);
  auto weights = std::make_shared<std::vector<Matrix>>(attention_weights(qv, kv, *layout));
  const Index dk = qv.cols() / static_cast<Index>(layout->heads);
  const auto L = static_cast<Index>(layout->block_len);
  Matrix out = Matrix::Zero(qv.rows(), qv.cols());
  for (Index r = 0; r < qv.rows(); ++r) {
    const Index base = static_cast<Index>(layout->query_block[static_cast<std::size_t>(r)]) * L;
    for (std::size_t h = 0; h < layout->heads; ++h) {
      const Index c0 = static_cast<Index>(h) * dk;
      for (Index j = 0; j < L; ++j) {
        const double p = (*weights)[h](r, j);
        if (p != 0.0) out.row(r).segment(c0, dk) += p * vv.row(base + j).segment(c0, dk);
      }
    }
  }
  return q.tape->record(std::move(out), {q, k, v}, [q, k, v, layout, weights, dk, L](Tape& t, const Matrix& g) {
    const Matrix& qv = q.value();
    const Matrix& kv = k.value();
    const Matrix& vv = v.value();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
    Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
    Matrix dk_m = Matrix::Zero(kv.rows(), kv.cols());
    Matrix dv = Matrix::Zero(vv.rows(), vv.cols());
    Eigen::Matrix<double, 1, Eigen::Dynamic> dp(L);
    for (Index r = 0; r < qv.rows(); ++r) {
      const Index base = static_cast<Index>(layout->query_block[static_cast<std::size_t>(r)]) * L;
      for (std::size_t h = 0; h < layout->heads; ++h) {
        const Index c0 = static_cast<Index>(h) * dk;
        const auto p = (*weights)[h].row(r);
        const auto gr = g.row(r).segment(c0, dk);
        double inner = 0.0;
        for (Index j = 0; j < L; ++j) {
          if (p[j] == 0.0) {
            dp[j] = 0.0;
            continue;
          }
          dv.row(base + j).segment(c0, dk) += p[j] * gr;
          dp[j] = gr.dot(vv.row(base + j).segment(c0, dk));
          inner += p[j] * dp[j];
        }
        for (Index j = 0; j < L; ++j) {
          if (p[j] == 0.0) continue;
          const double ds = p[j] * (dp[j] - inner) * inv_sqrt;
          dq.row(r).segment(c0, dk) += ds * kv.row(base + j).segment(c0, dk);
          dk_m.row(base + j).segment(c0, dk) += ds * qv.row(r).segment(c0, dk);
        }
      }
    }
    t.accumulate(q, dq);
    t.accumulate(k, dk_m);
    t.accumulate(v, dv);
  });
}

}  // namespace hyperctr::ad
