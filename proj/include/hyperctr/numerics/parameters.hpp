#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hyperctr/numerics/tape.hpp"

namespace hyperctr {

// A named tensor with a gradient slot and Adam moment accumulators.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix moment1;
  Matrix moment2;
  bool trainable = true;
};

// Ordered collection of parameters. Insertion order is the serialization and
// update order, so iteration is deterministic.
class ParameterStore {
 public:
  Parameter& add(std::string name, Matrix init, bool trainable = true) {
    if (index_.count(name) != 0) throw ContractError("duplicate parameter '" + name + "'");
    if (!init.allFinite()) throw ContractError("non-finite initial value for '" + name + "'");
    Parameter p;
    p.grad = Matrix::Zero(init.rows(), init.cols());
    p.moment1 = Matrix::Zero(init.rows(), init.cols());
    p.moment2 = Matrix::Zero(init.rows(), init.cols());
    p.value = std::move(init);
    p.name = name;
    p.trainable = trainable;
    index_.emplace(std::move(name), params_.size());
    params_.push_back(std::move(p));
    return params_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Parameter& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return params_[it->second];
  }
  const Parameter& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return params_[it->second];
  }

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  void zero_grads() {
    for (auto& p : params_) p.grad.setZero();
  }

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

namespace ad {

// Parameters placed on one tape: trainable ones as variables, frozen ones as
// constants.
class Binding {
 public:
  // `frozen` binds every parameter as a constant (inference).
  Binding(Tape& tape, const ParameterStore& store, bool frozen = false) : tape_(&tape) {
    for (const auto& p : store.all()) {
      Var v = p.trainable && !frozen ? tape.variable(p.value) : tape.constant(p.value);
      vars_.emplace(p.name, v);
      order_.push_back(p.name);
    }
  }

  Var operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw ContractError("parameter '" + name + "' is not bound");
    return it->second;
  }

  bool contains(const std::string& name) const { return vars_.count(name) != 0; }
  Tape& tape() const { return *tape_; }

  // Copies tape adjoints into the store's gradient slots.
  void collect_grads(ParameterStore& store) const {
    for (const auto& name : order_) {
      Parameter& p = store.at(name);
      if (!p.trainable) continue;
      const Matrix& g = tape_->grad(vars_.at(name));
      if (g.size() == 0) {
        p.grad.setZero();
      } else {
        p.grad = g;
      }
    }
  }

 private:
  Tape* tape_;
  std::map<std::string, Var> vars_;
  std::vector<std::string> order_;
};

}  // namespace ad
}  // namespace hyperctr
