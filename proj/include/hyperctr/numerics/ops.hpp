#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hyperctr/numerics/tape.hpp"

// Differentiable primitives. Each op validates shapes, computes its value and
// records the adjoint rule for its inputs.
namespace hyperctr::ad {

namespace detail {

inline void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": " + shape_of(a) + " vs " + shape_of(b));
  }
}

inline void require_row(const char* op, const Matrix& a, Index cols) {
  if (a.rows() != 1 || a.cols() != cols) {
    throw ShapeError(std::string(op) + ": expected 1x" + std::to_string(cols) + " row, got " + shape_of(a));
  }
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) throw ShapeError("matmul: " + shape_of(av) + " x " + shape_of(bv));
  Matrix out = av * bv;
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

inline Var transpose(Var a) {
  Matrix out = a.value().transpose();
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

inline Var add(Var a, Var b) {
  detail::require_same_shape("add", a.value(), b.value());
  Matrix out = a.value() + b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same_shape("sub", a.value(), b.value());
  Matrix out = a.value() - b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

// Hadamard product.
inline Var mul(Var a, Var b) {
  detail::require_same_shape("mul", a.value(), b.value());
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

inline Var scale(Var a, double s) {
  Matrix out = a.value() * s;
  return a.tape->record(std::move(out), {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

inline Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    const Matrix& x = a.value();
    Matrix d = g;
    for (Index i = 0; i < d.size(); ++i) {
      if (!(x.data()[i] > 0.0)) d.data()[i] = 0.0;
    }
    t.accumulate(a, d);
  });
}

inline Var sigmoid(Var a) {
  Matrix out = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    const Matrix y = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
    t.accumulate(a, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

// Row-wise softmax with max subtraction.
inline Matrix softmax_rows_value(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    double sum = 0.0;
    for (Index j = 0; j < x.cols(); ++j) {
      const double e = std::exp(x(i, j) - m);
      out(i, j) = e;
      sum += e;
    }
    out.row(i) /= sum;
  }
  return out;
}

inline Var softmax_rows(Var a) {
  Matrix y = softmax_rows_value(a.value());
  Matrix y_copy = y;
  return a.tape->record(std::move(y), {a}, [a, y = std::move(y_copy)](Tape& t, const Matrix& g) {
    Matrix d(y.rows(), y.cols());
    for (Index i = 0; i < y.rows(); ++i) {
      const double dot = y.row(i).dot(g.row(i));
      d.row(i) = y.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
    }
    t.accumulate(a, d);
  });
}

// u ⊗ v for vectors (row or column); result is len(u)×len(v).
inline Var outer(Var u, Var v) {
  const Matrix& uv = u.value();
  const Matrix& vv = v.value();
  if (!is_vector(uv) || !is_vector(vv)) throw ShapeError("outer: " + shape_of(uv) + " and " + shape_of(vv));
  const Index n = uv.size();
  const Index m = vv.size();
  Matrix out(n, m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) out(i, j) = uv.data()[i] * vv.data()[j];
  }
  return u.tape->record(std::move(out), {u, v}, [u, v, n, m](Tape& t, const Matrix& g) {
    const Matrix& uv = u.value();
    const Matrix& vv = v.value();
    if (t.requires_grad(u)) {
      Matrix du(uv.rows(), uv.cols());
      for (Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (Index j = 0; j < m; ++j) s += g(i, j) * vv.data()[j];
        du.data()[i] = s;
      }
      t.accumulate(u, du);
    }
    if (t.requires_grad(v)) {
      Matrix dv(vv.rows(), vv.cols());
      for (Index j = 0; j < m; ++j) {
        double s = 0.0;
        for (Index i = 0; i < n; ++i) s += g(i, j) * uv.data()[i];
        dv.data()[j] = s;
      }
      t.accumulate(v, dv);
    }
  });
}

// Row b of the result is the row-major flattening of a.row(b) ⊗ b.row(b).
inline Var rowwise_outer(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) throw ShapeError("rowwise_outer: " + shape_of(av) + " and " + shape_of(bv));
  const Index p = av.cols();
  const Index q = bv.cols();
  Matrix out(av.rows(), p * q);
  for (Index r = 0; r < av.rows(); ++r) {
    for (Index i = 0; i < p; ++i) {
      const double ai = av(r, i);
      for (Index j = 0; j < q; ++j) out(r, i * q + j) = ai * bv(r, j);
    }
  }
  return a.tape->record(std::move(out), {a, b}, [a, b, p, q](Tape& t, const Matrix& g) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    Matrix da = Matrix::Zero(av.rows(), p);
    Matrix db = Matrix::Zero(bv.rows(), q);
    for (Index r = 0; r < av.rows(); ++r) {
      for (Index i = 0; i < p; ++i) {
        const double ai = av(r, i);
        double s = 0.0;
        for (Index j = 0; j < q; ++j) {
          const double gij = g(r, i * q + j);
          s += gij * bv(r, j);
          db(r, j) += gij * ai;
        }
        da(r, i) = s;
      }
    }
    t.accumulate(a, da);
    t.accumulate(b, db);
  });
}

// x + 1·bias, bias a 1×cols row broadcast over rows.
inline Var add_row(Var x, Var bias) {
  detail::require_row("add_row", bias.value(), x.cols());
  Matrix out = x.value().rowwise() + bias.value().row(0);
  return x.tape->record(std::move(out), {x, bias}, [x, bias](Tape& t, const Matrix& g) {
    t.accumulate(x, g);
    if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
  });
}

// x ⊙ (1·gain), gain a 1×cols row broadcast over rows.
inline Var mul_row(Var x, Var gain) {
  detail::require_row("mul_row", gain.value(), x.cols());
  Matrix out = x.value().array().rowwise() * gain.value().row(0).array();
  return x.tape->record(std::move(out), {x, gain}, [x, gain](Tape& t, const Matrix& g) {
    if (t.requires_grad(x)) {
      Matrix dx = g.array().rowwise() * gain.value().row(0).array();
      t.accumulate(x, dx);
    }
    if (t.requires_grad(gain)) t.accumulate(gain, g.cwiseProduct(x.value()).colwise().sum());
  });
}

// Multiplies row r by a constant coefficient coeffs[r].
inline Var row_scale(Var x, std::vector<double> coeffs) {
  const Matrix& xv = x.value();
  if (static_cast<Index>(coeffs.size()) != xv.rows()) {
    throw ShapeError("row_scale: " + std::to_string(coeffs.size()) + " coefficients for " + shape_of(xv));
  }
  Matrix out = xv;
  for (Index r = 0; r < xv.rows(); ++r) out.row(r) *= coeffs[static_cast<std::size_t>(r)];
  return x.tape->record(std::move(out), {x}, [x, c = std::move(coeffs)](Tape& t, const Matrix& g) {
    Matrix d = g;
    for (Index r = 0; r < d.rows(); ++r) d.row(r) *= c[static_cast<std::size_t>(r)];
    t.accumulate(x, d);
  });
}

// Row gather. Index -1 yields a zero row that receives no gradient.
inline Var gather_rows(Var table, std::vector<long> indices) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Index>(indices.size()), tv.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const long idx = indices[r];
    if (idx < 0) {
      out.row(static_cast<Index>(r)).setZero();
    } else {
      if (idx >= tv.rows()) {
        throw ShapeError("gather_rows: index " + std::to_string(idx) + " out of range for " + shape_of(tv));
      }
      out.row(static_cast<Index>(r)) = tv.row(idx);
    }
  }
  return table.tape->record(std::move(out), {table}, [table, idx = std::move(indices)](Tape& t, const Matrix& g) {
    Matrix& adj = t.adjoint_for_update(table);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] >= 0) adj.row(idx[r]) += g.row(static_cast<Index>(r));
    }
  });
}

inline Var concat_cols(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) throw ShapeError("concat_cols: " + shape_of(av) + " and " + shape_of(bv));
  Matrix out(av.rows(), av.cols() + bv.cols());
  out.leftCols(av.cols()) = av;
  out.rightCols(bv.cols()) = bv;
  const Index ac = av.cols();
  const Index bc = bv.cols();
  return a.tape->record(std::move(out), {a, b}, [a, b, ac, bc](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.leftCols(ac));
    if (t.requires_grad(b)) t.accumulate(b, g.rightCols(bc));
  });
}

// Appends a constant column, e.g. the 1 of an affine augmentation.
inline Var append_const_col(Var a, double value) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols() + 1);
  out.leftCols(av.cols()) = av;
  out.col(av.cols()).setConstant(value);
  const Index ac = av.cols();
  return a.tape->record(std::move(out), {a}, [a, ac](Tape& t, const Matrix& g) { t.accumulate(a, g.leftCols(ac)); });
}

inline Var slice_cols(Var a, Index begin, Index count) {
  const Matrix& av = a.value();
  if (begin < 0 || count < 0 || begin + count > av.cols()) {
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", +" + std::to_string(count) + ") of " + shape_of(av));
  }
  Matrix out = av.middleCols(begin, count);
  return a.tape->record(std::move(out), {a}, [a, begin, count](Tape& t, const Matrix& g) {
    Matrix& adj = t.adjoint_for_update(a);
    adj.middleCols(begin, count) += g;
  });
}

inline Var reshape(Var a, Index rows, Index cols) {
  const Matrix& av = a.value();
  if (rows * cols != av.size()) {
    throw ShapeError("reshape " + shape_of(av) + " to " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix out = Eigen::Map<const Matrix>(av.data(), rows, cols);
  const Index r0 = av.rows();
  const Index c0 = av.cols();
  return a.tape->record(std::move(out), {a}, [a, r0, c0](Tape& t, const Matrix& g) {
    t.accumulate(a, Eigen::Map<const Matrix>(g.data(), r0, c0));
  });
}

inline Var sum_all(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Index r = a.rows();
  const Index c = a.cols();
  return a.tape->record(std::move(out), {a}, [a, r, c](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(r, c, g(0, 0)));
  });
}

inline Var mean_all(Var a) {
  if (a.value().size() == 0) throw ContractError("mean of empty matrix");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

inline Var sum_squares(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, a.value() * (2.0 * g(0, 0))); });
}

// n×m -> n×1 row sums.
inline Var row_sum(Var a) {
  Matrix out = a.value().rowwise().sum();
  const Index c = a.cols();
  return a.tape->record(std::move(out), {a}, [a, c](Tape& t, const Matrix& g) {
    Matrix d(g.rows(), c);
    for (Index r = 0; r < g.rows(); ++r) d.row(r).setConstant(g(r, 0));
    t.accumulate(a, d);
  });
}

// n×m -> n×1 with log Σ_j exp(x_rj), max-shifted.
inline Var logsumexp_rows(Var a) {
  const Matrix& x = a.value();
  if (x.cols() == 0) throw ContractError("logsumexp over an empty row");
  Matrix out(x.rows(), 1);
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out(r, 0) = m + std::log((x.row(r).array() - m).exp().sum());
  }
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    Matrix p = softmax_rows_value(a.value());
    for (Index r = 0; r < p.rows(); ++r) p.row(r) *= g(r, 0);
    t.accumulate(a, p);
  });
}

// Per-row normalisation to zero mean and unit variance (no affine part).
inline Var layer_norm_rows(Var a, double eps = 1e-5) {
  const Matrix& x = a.value();
  const Index n = x.cols();
  if (n == 0) throw ShapeError("layer_norm_rows on " + shape_of(x));
  Matrix xhat(x.rows(), n);
  std::vector<double> inv_std(static_cast<std::size_t>(x.rows()));
  for (Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    xhat.row(r) = (x.row(r).array() - mu) * is;
  }
  Matrix xhat_copy = xhat;
  return a.tape->record(std::move(xhat), {a}, [a, n, xh = std::move(xhat_copy), is = std::move(inv_std)](Tape& t, const Matrix& g) {
    Matrix d(g.rows(), n);
    for (Index r = 0; r < g.rows(); ++r) {
      const double gm = g.row(r).mean();
      const double gx = g.row(r).dot(xh.row(r)) / static_cast<double>(n);
      d.row(r) = ((g.row(r).array() - gm - xh.row(r).array() * gx) * is[static_cast<std::size_t>(r)]).matrix();
    }
    t.accumulate(a, d);
  });
}

// Mean binary cross-entropy from logits z (n×1) against constant labels:
// max(z,0) - z·y + log(1 + exp(-|z|)).
inline Var bce_with_logits_mean(Var logits, std::span<const double> labels) {
  const Matrix& z = logits.value();
  if (z.cols() != 1 || static_cast<std::size_t>(z.rows()) != labels.size()) {
    throw ShapeError("bce_with_logits_mean: logits " + shape_of(z) + " vs " + std::to_string(labels.size()) + " labels");
  }
  if (z.rows() == 0) throw ContractError("bce over an empty batch");
  double total = 0.0;
  for (Index r = 0; r < z.rows(); ++r) {
    const double x = z(r, 0);
    const double y = labels[static_cast<std::size_t>(r)];
    total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(z.rows());
  std::vector<double> y(labels.begin(), labels.end());
  return logits.tape->record(std::move(out), {logits}, [logits, y = std::move(y)](Tape& t, const Matrix& g) {
    const Matrix& z = logits.value();
    const double inv_n = 1.0 / static_cast<double>(z.rows());
    Matrix d(z.rows(), 1);
    for (Index r = 0; r < z.rows(); ++r) {
      d(r, 0) = (stable_sigmoid(z(r, 0)) - y[static_cast<std::size_t>(r)]) * inv_n * g(0, 0);
    }
    t.accumulate(logits, d);
  });
}

}  // namespace hyperctr::ad
