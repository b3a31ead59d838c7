#include "hmd/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hmd {

namespace {

double evaluate(const ScalarFn& fn, std::span<const Tensor> points) {
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  leaves.reserve(points.size());
  for (const auto& p : points) leaves.push_back(tape.constant(p));
  const ad::Var out = fn(tape, leaves);
  if (out.size() != 1) {
    throw std::invalid_argument("grad_check: function output must be scalar, got " + shape_to_string(out.shape()));
  }
  return out.item();
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& fn, std::span<const Tensor> points, double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
    throw std::invalid_argument("grad_check: epsilon must lie in [1e-7, 1e-3]");
  }

  std::vector<Tensor> analytic;
  {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& p : points) leaves.push_back(tape.parameter(p));
    const ad::Var out = fn(tape, leaves);
    if (out.size() != 1) {
      throw std::invalid_argument("grad_check: function output must be scalar, got " +
                                  shape_to_string(out.shape()));
    }
    tape.backward(out);
    for (const auto& leaf : leaves) analytic.push_back(tape.grad_tensor(leaf));
  }

  GradCheckResult result;
  std::vector<Tensor> probe(points.begin(), points.end());
  for (std::size_t input = 0; input < probe.size(); ++input) {
    for (std::size_t i = 0; i < probe[input].size(); ++i) {
      const double saved = probe[input][i];
      probe[input][i] = saved + epsilon;
      const double plus = evaluate(fn, probe);
      probe[input][i] = saved - epsilon;
      const double minus = evaluate(fn, probe);
      probe[input][i] = saved;

      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double a = analytic[input][i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      const double rel = std::abs(a - numeric) / denom;
      ++result.components;
      if (rel > result.max_rel_error || result.components == 1) {
        result.max_rel_error = rel;
        result.worst_input = input;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

double grad_check(const std::function<ad::Var(ad::Tape&, ad::Var)>& fn, const Tensor& point, double epsilon) {
  const ScalarFn wrapped = [&fn](ad::Tape& tape, std::span<const ad::Var> in) { return fn(tape, in[0]); };
  return grad_check(wrapped, std::span<const Tensor>(&point, 1), epsilon).max_rel_error;
}

}  // namespace hmd
