#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <initializer_list>
#include <random>
#include <string>

#include "hyperctr/errors.hpp"

namespace hyperctr {

// Row-major, 64-bit. Vectors are 1×n rows unless stated otherwise.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

inline std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline Matrix make_matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const Index r = static_cast<Index>(rows.size());
  const Index c = r == 0 ? 0 : static_cast<Index>(rows.begin()->size());
  Matrix m(r, c);
  Index i = 0;
  for (const auto& row : rows) {
    if (static_cast<Index>(row.size()) != c) throw ShapeError("ragged initializer list");
    Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

inline Matrix row_vector(std::initializer_list<double> values) {
  Matrix m(1, static_cast<Index>(values.size()));
  Index j = 0;
  for (double v : values) m(0, j++) = v;
  return m;
}

inline bool is_vector(const Matrix& m) { return m.rows() == 1 || m.cols() == 1; }

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

template <typename Rng>
Matrix gaussian_matrix(Index rows, Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

template <typename Rng>
Matrix uniform_matrix(Index rows, Index cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("max_abs_diff " + shape_of(a) + " vs " + shape_of(b));
  }
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

// Overflow-free logistic. Output is clamped into the open interval (0, 1).
inline double stable_sigmoid(double x) {
  double y;
  if (x >= 0.0) {
    y = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    y = e / (1.0 + e);
  }
  constexpr double kLo = 4.9406564584124654e-324;  // smallest subnormal
  constexpr double kHi = 1.0 - 1.1102230246251565e-16;
  if (y < kLo) return kLo;
  if (y > kHi) return kHi;
  return y;
}

}  // namespace hyperctr
