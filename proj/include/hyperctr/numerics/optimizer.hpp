#pragma once

#include <cmath>
#include <cstdint>

#include "hyperctr/numerics/parameters.hpp"

namespace hyperctr {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // Applies one update from the gradients currently stored in `params`.
  virtual void step(ParameterStore& params) = 0;
};

class Sgd : public Optimizer {
 public:
  explicit Sgd(double learning_rate) : lr_(learning_rate) {}

  void step(ParameterStore& params) override {
    for (auto& p : params.all()) {
      if (p.trainable) p.value -= lr_ * p.grad;
    }
  }

 private:
  double lr_;
};

// Adam with bias-corrected moments; the moments live in each Parameter.
class Adam : public Optimizer {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterStore& params) override {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& p : params.all()) {
      if (!p.trainable) continue;
      p.moment1 = beta1_ * p.moment1 + (1.0 - beta1_) * p.grad;
      p.moment2 = beta2_ * p.moment2 + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
      const auto m_hat = p.moment1.array() / c1;
      const auto v_hat = p.moment2.array() / c2;
      p.value.array() -= lr_ * m_hat / (v_hat.sqrt() + eps_);
    }
  }

  std::uint64_t steps() const { return t_; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::uint64_t t_ = 0;
};

}  // namespace hyperctr
