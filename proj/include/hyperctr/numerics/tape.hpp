#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "hyperctr/numerics/matrix.hpp"

namespace hyperctr::ad {

class Tape;

// Handle to one node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

// Append-only record of primitive operations. Node inputs always precede the
// node, so a reverse sweep over the node list is a valid topological order.
// A tape has a single owner and is not thread safe.
class Tape {
 public:
  // Propagates the node's adjoint into its inputs via Tape::accumulate.
  using Backward = std::function<void(Tape&, const Matrix& adjoint)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }
  Var variable(Matrix value) { return push(std::move(value), true, nullptr); }

  // Records an op result. `inputs` decide whether the node needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    bool needs = false;
    for (const Var& in : inputs) {
      check_owner(in);
      needs = needs || nodes_[in.id].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  const Matrix& value(Var v) const {
    check_owner(v);
    return nodes_[v.id].value;
  }
  bool requires_grad(Var v) const {
    check_owner(v);
    return nodes_[v.id].requires_grad;
  }

  // Adds `delta` into the adjoint of `v`, allocating zeros on first touch.
  void accumulate(Var v, const Matrix& delta) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (delta.rows() != n.value.rows() || delta.cols() != n.value.cols()) {
      throw ShapeError("adjoint " + shape_of(delta) + " for value " + shape_of(n.value));
    }
    if (n.adjoint.size() == 0 && n.value.size() != 0) {
      n.adjoint = delta;
    } else {
      n.adjoint += delta;
    }
  }

  // Mutable adjoint access for sparse scatter rules.
  Matrix& adjoint_for_update(Var v) {
    Node& n = nodes_[v.id];
    if (n.adjoint.rows() != n.value.rows() || n.adjoint.cols() != n.value.cols()) {
      n.adjoint = Matrix::Zero(n.value.rows(), n.value.cols());
    }
    return n.adjoint;
  }

  // Seeds d(root)/d(root) = 1 and sweeps backwards. Root must be 1×1.
  void backward(Var root) {
    check_owner(root);
    const Matrix& rv = nodes_[root.id].value;
    if (rv.rows() != 1 || rv.cols() != 1) {
      throw ContractError("backward from non-scalar node of shape " + shape_of(rv));
    }
    for (Node& n : nodes_) n.adjoint.resize(0, 0);
    nodes_[root.id].adjoint = Matrix::Ones(1, 1);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.adjoint.size() == 0) continue;
      n.backward(*this, n.adjoint);
    }
    // Every differentiable node ends the sweep with an adjoint of its own shape.
    for (Node& n : nodes_) {
      if (n.requires_grad && (n.adjoint.rows() != n.value.rows() || n.adjoint.cols() != n.value.cols())) {
        n.adjoint = Matrix::Zero(n.value.rows(), n.value.cols());
      }
    }
  }

  const Matrix& grad(Var v) const {
    check_owner(v);
    return nodes_[v.id].adjoint;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix adjoint;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backward)});
    return Var{this, nodes_.size() - 1};
  }

  void check_owner(Var v) const {
    if (v.tape != this || v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
  }

  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(*this); }

}  // namespace hyperctr::ad
