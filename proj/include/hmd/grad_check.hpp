#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "hmd/autodiff.hpp"

namespace hmd {

/// A differentiable scalar-valued map. It receives one leaf per input point,
/// in order, and must return a single-element Var.
using ScalarFn = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t components = 0;
};

/// Compares tape gradients with central finite differences, component-wise.
/// Relative error is |a − n| / max(1, |a|, |n|). epsilon must lie in [1e−7, 1e−3].
GradCheckResult grad_check(const ScalarFn& fn, std::span<const Tensor> points, double epsilon = 1e-6);

/// Single-input convenience form; returns the maximum relative error.
double grad_check(const std::function<ad::Var(ad::Tape&, ad::Var)>& fn, const Tensor& point,
                  double epsilon = 1e-6);

}  // namespace hmd
