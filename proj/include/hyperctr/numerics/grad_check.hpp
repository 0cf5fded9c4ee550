#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "hyperctr/numerics/parameters.hpp"

namespace hyperctr::ad {

// Builds a scalar graph on a fresh tape from the bound parameters.
using ScalarGraph = std::function<Var(Tape&, const Binding&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 checks every coordinate; otherwise a seeded sample per parameter.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

inline double evaluate_scalar(const ScalarGraph& f, const ParameterStore& params) {
  Tape tape;
  Binding bound(tape, params);
  Var out = f(tape, bound);
  if (out.rows() != 1 || out.cols() != 1) {
    throw ContractError("grad_check needs a scalar output, got " + shape_of(out.value()));
  }
  return out.value()(0, 0);
}

// Compares reverse-mode gradients against central differences. Relative error
// per coordinate is |a - c| / max(|a|, |c|, 1e-8).
inline GradCheckResult grad_check(const ScalarGraph& f, ParameterStore& params, const GradCheckOptions& opt = {}) {
  if (!(opt.eps >= 1e-7 && opt.eps <= 1e-4)) {
    throw ContractError("grad_check eps must lie in [1e-7, 1e-4], got " + std::to_string(opt.eps));
  }
  {
    Tape tape;
    Binding bound(tape, params);
    Var out = f(tape, bound);
    if (out.rows() != 1 || out.cols() != 1) {
      throw ContractError("grad_check needs a scalar output, got " + shape_of(out.value()));
    }
    tape.backward(out);
    bound.collect_grads(params);
  }

  GradCheckResult result;
  std::mt19937_64 rng(opt.seed);
  for (auto& p : params.all()) {
    if (!p.trainable) continue;
    const Index n = p.value.size();
    std::vector<Index> coords(static_cast<std::size_t>(n));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (opt.max_coords_per_param != 0 && coords.size() > opt.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    const Matrix analytic = p.grad;
    for (Index c : coords) {
      double& slot = p.value.data()[c];
      const double saved = slot;
      slot = saved + opt.eps;
      const double up = evaluate_scalar(f, params);
      slot = saved - opt.eps;
      const double down = evaluate_scalar(f, params);
      slot = saved;
      const double numeric = (up - down) / (2.0 * opt.eps);
      const double a = analytic.data()[c];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coords_checked;
      if (rel > result.max_rel_error || result.worst_index < 0) {
        result.max_rel_error = rel;
        result.worst_param = p.name;
        result.worst_index = c;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace hyperctr::ad
