#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "hyperctr/numerics/grad_check.hpp"
#include "hyperctr/numerics/ops.hpp"
#include "hyperctr/numerics/optimizer.hpp"
#include "hyperctr/numerics/parameters.hpp"
#include "hyperctr/numerics/serialize.hpp"
#include "test_support.hpp"

namespace hyperctr {
namespace {

using ad::Binding;
using ad::Tape;
using ad::Var;
using Op = std::function<Var(const std::vector<Var>&)>;

// Reduces an op output to a scalar with a nonlinear readout, then compares
// tape gradients with central differences.
double op_grad_error(const std::vector<Matrix>& inputs, const Op& op) {
  ParameterStore store;
  for (std::size_t k = 0; k < inputs.size(); ++k) store.add("x" + std::to_string(k), inputs[k]);
  auto f = [&](Tape&, const Binding& b) {
    std::vector<Var> vars;
    for (std::size_t k = 0; k < inputs.size(); ++k) vars.push_back(b["x" + std::to_string(k)]);
    Var out = op(vars);
    return ad::add(ad::scale(ad::sum_squares(out), 0.5), ad::scale(ad::sum_all(out), 0.3));
  };
  return ad::grad_check(f, store).max_rel_error;
}

Matrix rand(Index r, Index c, unsigned seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  return gaussian_matrix(r, c, scale, rng);
}

// Values bounded away from zero so ReLU kinks are not straddled.
Matrix away_from_zero(Index r, Index c, unsigned seed) {
  Matrix m = rand(r, c, seed);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] += m.data()[i] >= 0 ? 0.1 : -0.1;
  return m;
}

constexpr double kOpTol = 1e-6;

TEST(OpGradients, Matmul) {
  EXPECT_LT(op_grad_error({rand(3, 4, 1), rand(4, 2, 2)}, [](auto& v) { return ad::matmul(v[0], v[1]); }), kOpTol);
}

TEST(OpGradients, TransposeAddSubMulScale) {
  EXPECT_LT(op_grad_error({rand(3, 2, 3)}, [](auto& v) { return ad::transpose(v[0]); }), kOpTol);
  EXPECT_LT(op_grad_error({rand(3, 2, 4), rand(3, 2, 5)}, [](auto& v) { return ad::add(v[0], v[1]); }), kOpTol);
  EXPECT_LT(op_grad_error({rand(3, 2, 6), rand(3, 2, 7)}, [](auto& v) { return ad::sub(v[0], v[1]); }), kOpTol);
  EXPECT_LT(op_grad_error({rand(3, 2, 8), rand(3, 2, 9)}, [](auto& v) { return ad::mul(v[0], v[1]); }), kOpTol);
  EXPECT_LT(op_grad_error({rand(3, 2, 10)}, [](auto& v) { return ad::scale(v[0], -1.7); }), kOpTol);
}

TEST(OpGradients, Activations) {
  EXPECT_LT(op_grad_error({away_from_zero(4, 3, 11)}, [](auto& v) { return ad::relu(v[0]); }), kOpTol);
  EXPECT_LT(op_grad_error({rand(4, 3, 12)}, [](auto& v) { return ad::sigmoid(v[0]); }), kOpTol);
  EXPECT_LT(op_grad_error({rand(4, 5, 13)}, [](auto& v) { return ad::softmax_rows(v[0]); }), kOpTol);
  EXPECT_LT(op_grad_error({rand(4, 5, 14)}, [](auto& v) { return ad::logsumexp_rows(v[0]); }), kOpTol);
  // Squares and sums of a normalized row are nearly constant, so weight the output first.
  EXPECT_LT(op_grad_error({rand(4, 6, 15), rand(4, 6, 115)},
                          [](auto& v) { return ad::mul(ad::layer_norm_rows(v[0]), v[1]); }),
            kOpTol);
}

TEST(OpGradients, Outers) {
  EXPECT_LT(op_grad_error({rand(1, 3, 16), rand(4, 1, 17)}, [](auto& v) { return ad::outer(v[0], v[1]); }), kOpTol);
  EXPECT_LT(op_grad_error({rand(5, 3, 18), rand(5, 2, 19)}, [](auto& v) { return ad::rowwise_outer(v[0], v[1]); }),
            kOpTol);
}

TEST(OpGradients, RowBroadcasts) {
  EXPECT_LT(op_grad_error({rand(4, 3, 20), rand(1, 3, 21)}, [](auto& v) { return ad::add_row(v[0], v[1]); }), kOpTol);
  EXPECT_LT(op_grad_error({rand(4, 3, 22), rand(1, 3, 23)}, [](auto& v) { return ad::mul_row(v[0], v[1]); }), kOpTol);
  EXPECT_LT(op_grad_error({rand(4, 3, 24)}, [](auto& v) { return ad::row_scale(v[0], {0.5, -1.0, 0.0, 2.0}); }), kOpTol);
  EXPECT_LT(op_grad_error({rand(4, 3, 25)}, [](auto& v) { return ad::row_sum(v[0]); }), kOpTol);
}

TEST(OpGradients, Indexing) {
  // Repeated indices must accumulate.
  EXPECT_LT(op_grad_error({rand(5, 3, 26)}, [](auto& v) { return ad::gather_rows(v[0], {4, 0, 4, 2}); }), kOpTol);
  EXPECT_LT(op_grad_error({rand(3, 2, 27), rand(3, 4, 28)}, [](auto& v) { return ad::concat_cols(v[0], v[1]); }), kOpTol);
  EXPECT_LT(op_grad_error({rand(3, 2, 29)}, [](auto& v) { return ad::append_const_col(v[0], 1.0); }), kOpTol);
  EXPECT_LT(op_grad_error({rand(3, 5, 30)}, [](auto& v) { return ad::slice_cols(v[0], 1, 3); }), kOpTol);
  EXPECT_LT(op_grad_error({rand(3, 4, 31)}, [](auto& v) { return ad::reshape(v[0], 6, 2); }), kOpTol);
}

TEST(OpGradients, Losses) {
  const std::vector<double> y = {1, 0, 1, 0, 0};
  EXPECT_LT(op_grad_error({rand(5, 1, 32, 2.0)}, [&](auto& v) { return ad::bce_with_logits_mean(v[0], y); }), kOpTol);
  EXPECT_LT(op_grad_error({rand(3, 3, 33)}, [](auto& v) { return ad::mean_all(v[0]); }), kOpTol);
}

TEST(OpValues, SoftmaxRowsSumToOne) {
  Tape t;
  const Matrix s = ad::softmax_rows(t.constant(rand(6, 7, 40, 30.0))).value();
  for (Index r = 0; r < s.rows(); ++r) EXPECT_NEAR(s.row(r).sum(), 1.0, 1e-12);
}

TEST(OpValues, LogSumExpIsStableForLargeInputs) {
  Tape t;
  const Matrix v = ad::logsumexp_rows(t.constant(make_matrix({{1000.0, 1000.0}, {-1000.0, -1000.0}}))).value();
  EXPECT_NEAR(v(0, 0), 1000.0 + std::log(2.0), 1e-9);
  EXPECT_NEAR(v(1, 0), -1000.0 + std::log(2.0), 1e-9);
}

TEST(OpValues, BceWithLogitsMatchesDirectFormula) {
  Tape t;
  const Matrix z = make_matrix({{0.3}, {-2.0}, {4.0}});
  const std::vector<double> y = {1, 0, 0};
  double expect = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double p = 1.0 / (1.0 + std::exp(-z(k, 0)));
    expect -= y[k] * std::log(p) + (1 - y[k]) * std::log(1 - p);
  }
  EXPECT_NEAR(ad::bce_with_logits_mean(t.constant(z), y).value()(0, 0), expect / 3.0, 1e-12);
  const Matrix extreme = make_matrix({{800.0}, {-800.0}});
  const double v = ad::bce_with_logits_mean(t.constant(extreme), std::vector<double>{0, 1}).value()(0, 0);
  EXPECT_NEAR(v, 800.0, 1e-9);
}

TEST(OpValues, LayerNormRowsAreStandardised) {
  Tape t;
  const Matrix n = ad::layer_norm_rows(t.constant(rand(4, 9, 41, 3.0)), 0.0).value();
  for (Index r = 0; r < n.rows(); ++r) {
    EXPECT_NEAR(n.row(r).mean(), 0.0, 1e-12);
    EXPECT_NEAR(n.row(r).squaredNorm() / 9.0, 1.0, 1e-12);
  }
}

TEST(TapeContracts, ShapeMismatchThrows) {
  Tape t;
  EXPECT_THROW(ad::matmul(t.constant(rand(2, 3, 1)), t.constant(rand(2, 3, 2))), ShapeError);
  EXPECT_THROW(ad::add(t.constant(rand(2, 3, 1)), t.constant(rand(3, 2, 2))), ShapeError);
}

TEST(TapeContracts, BackwardNeedsScalarRoot) {
  Tape t;
  Var x = t.variable(rand(2, 2, 3));
  EXPECT_THROW(t.backward(ad::relu(x)), ContractError);
}

TEST(TapeContracts, ForeignVariableRejected) {
  Tape a;
  Tape b;
  Var x = a.variable(rand(2, 2, 4));
  Var y = b.variable(rand(2, 2, 5));
  EXPECT_THROW(ad::add(x, y), ContractError);
}

TEST(TapeContracts, ConstantsReceiveNoGradient) {
  Tape t;
  Var c = t.constant(rand(2, 2, 6));
  Var x = t.variable(rand(2, 2, 7));
  Var loss = ad::sum_all(ad::mul(c, x));
  t.backward(loss);
  EXPECT_EQ(t.grad(c).size(), 0);
  EXPECT_LT(max_abs_diff(t.grad(x), c.value()), 1e-15);
}

TEST(Parameters, RejectDuplicatesAndNonFinite) {
  ParameterStore s;
  s.add("w", Matrix::Zero(2, 2));
  EXPECT_THROW(s.add("w", Matrix::Zero(1, 1)), ContractError);
  Matrix bad = Matrix::Zero(1, 1);
  bad(0, 0) = std::nan("");
  EXPECT_THROW(s.add("v", bad), ContractError);
  EXPECT_THROW(s.at("missing"), ContractError);
}

TEST(Parameters, FrozenBindingYieldsNoGradients) {
  ParameterStore s;
  s.add("w", rand(2, 2, 8));
  Tape t;
  Binding b(t, s, true);
  EXPECT_FALSE(t.requires_grad(b["w"]));
}

TEST(Optimizers, AdamMatchesScalarRecurrence) {
  ParameterStore s;
  s.add("w", make_matrix({{1.0, -2.0}}));
  Adam adam(0.1);
  const std::vector<Matrix> grads = {make_matrix({{0.5, -1.0}}), make_matrix({{0.2, 3.0}}), make_matrix({{-0.4, 0.0}})};
  double w[2] = {1.0, -2.0};
  double m[2] = {0, 0};
  double v[2] = {0, 0};
  for (std::size_t k = 0; k < grads.size(); ++k) {
    s.at("w").grad = grads[k];
    adam.step(s);
    for (int j = 0; j < 2; ++j) {
      const double g = grads[k](0, j);
      m[j] = 0.9 * m[j] + 0.1 * g;
      v[j] = 0.999 * v[j] + 0.001 * g * g;
      const double mh = m[j] / (1 - std::pow(0.9, k + 1));
      const double vh = v[j] / (1 - std::pow(0.999, k + 1));
      w[j] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  EXPECT_NEAR(s.at("w").value(0, 0), w[0], 1e-14);
  EXPECT_NEAR(s.at("w").value(0, 1), w[1], 1e-14);
  EXPECT_EQ(adam.steps(), 3u);
}

TEST(Optimizers, AdamFirstStepHasLearningRateMagnitude) {
  ParameterStore s;
  s.add("w", make_matrix({{0.0}}));
  s.at("w").grad = make_matrix({{123.0}});
  Adam adam(0.01);
  adam.step(s);
  EXPECT_NEAR(s.at("w").value(0, 0), -0.01, 1e-9);
}

TEST(Optimizers, SgdSkipsFrozenParameters) {
  ParameterStore s;
  s.add("a", make_matrix({{1.0}}));
  s.add("b", make_matrix({{1.0}}), false);
  s.at("a").grad = make_matrix({{2.0}});
  s.at("b").grad = make_matrix({{2.0}});
  Sgd(0.25).step(s);
  EXPECT_DOUBLE_EQ(s.at("a").value(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s.at("b").value(0, 0), 1.0);
}

TEST(GradCheck, DetectsAWrongGradient) {
  ParameterStore s;
  s.add("x", make_matrix({{0.7, -0.3}}));
  // A deliberately broken op: forward x^2, backward claims 3x.
  auto f = [](Tape&, const Binding& b) {
    Var x = b["x"];
    Matrix out(1, 1);
    out(0, 0) = x.value().squaredNorm();
    Var y = x.tape->record(std::move(out), {x}, [x](Tape& t, const Matrix& g) { t.accumulate(x, x.value() * 3.0 * g(0, 0)); });
    return y;
  };
  EXPECT_GT(ad::grad_check(f, s).max_rel_error, 0.1);
}

TEST(TensorFiles, RoundTripIsExact) {
  testing::TempDir dir("tensor");
  TensorFile tf;
  tf.meta["alpha"] = "1";
  tf.meta["name"] = "x y";
  tf.tensors.emplace_back("a", rand(3, 4, 50));
  tf.tensors.emplace_back("empty", Matrix(0, 5));
  Matrix special(1, 3);
  special << 1e-308, -0.0, 1.0 / 3.0;
  tf.tensors.emplace_back("b", special);
  write_tensor_file(dir.file("t.bin"), "TEST", 2, tf);
  const TensorFile back = read_tensor_file(dir.file("t.bin"), "TEST", 2);
  EXPECT_EQ(back.meta, tf.meta);
  ASSERT_EQ(back.tensors.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(back.tensors[k].first, tf.tensors[k].first);
    ASSERT_EQ(back.tensors[k].second.rows(), tf.tensors[k].second.rows());
    ASSERT_EQ(back.tensors[k].second.cols(), tf.tensors[k].second.cols());
    for (Index i = 0; i < tf.tensors[k].second.size(); ++i) {
      EXPECT_EQ(std::signbit(back.tensors[k].second.data()[i]), std::signbit(tf.tensors[k].second.data()[i]));
      EXPECT_EQ(back.tensors[k].second.data()[i], tf.tensors[k].second.data()[i]);
    }
  }
}

TEST(TensorFiles, CorruptionIsDetected) {
  testing::TempDir dir("tensor-bad");
  TensorFile tf;
  tf.tensors.emplace_back("a", rand(2, 2, 51));
  write_tensor_file(dir.file("t.bin"), "TEST", 1, tf);
  const std::string bytes = testing::slurp(dir.file("t.bin"));
  EXPECT_THROW(read_tensor_file(dir.file("t.bin"), "TEST", 2), IoError);
  EXPECT_THROW(read_tensor_file(dir.file("t.bin"), "OTHER", 1), IoError);
  testing::spit(dir.file("short.bin"), bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_tensor_file(dir.file("short.bin"), "TEST", 1), IoError);
  testing::spit(dir.file("long.bin"), bytes + "x");
  EXPECT_THROW(read_tensor_file(dir.file("long.bin"), "TEST", 1), IoError);
  EXPECT_THROW(read_tensor_file(dir.file("absent.bin"), "TEST", 1), IoError);
  EXPECT_THROW(tf.tensor("nope"), IoError);
}

}  // namespace
}  // namespace hyperctr
