#pragma once

#include <memory>
#include <vector>

#include "hyperctr/hypergraph/hypergraph.hpp"
#include "hyperctr/numerics/ops.hpp"

namespace hyperctr::ad {

// Y = A X. A is symmetric, so the adjoint rule is another application of A.
inline Var propagate(std::shared_ptr<const PropagationOperator> op, Var x) {
  Matrix out = op->apply(x.value());
  return x.tape->record(std::move(out), {x}, [op, x](Tape& t, const Matrix& g) { t.accumulate(x, op->apply(g)); });
}

// One convolution layer: ReLU(A X Theta).
inline Var hgcn_layer(Var x, std::shared_ptr<const PropagationOperator> op, Var theta) {
  return relu(matmul(propagate(std::move(op), x), theta));
}

inline Var hgcn_stack(Var x, const std::shared_ptr<const PropagationOperator>& op, const std::vector<Var>& thetas) {
  for (const Var& theta : thetas) x = hgcn_layer(x, op, theta);
  return x;
}

}  // namespace hyperctr::ad
