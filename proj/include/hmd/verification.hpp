#pragma once

// Finite-difference gradient suite: every primitive, the composite blocks,
// and the end-to-end loss of a tiny model (n=8, d_a=4, |Vocab|=11, T=4, m=3).

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hmd {

struct GradSuiteEntry {
  std::string name;
  std::size_t points = 0;
  std::size_t components = 0;
  double max_rel_error = 0.0;
};

struct GradSuiteReport {
  std::vector<GradSuiteEntry> entries;
  double max_rel_error = 0.0;
  double seconds = 0.0;

  bool passed(double tolerance = 1e-4) const { return max_rel_error < tolerance; }
};

struct GradSuiteOptions {
  std::uint64_t seed = 0;
  std::size_t primitive_points = 10;
  std::size_t end_to_end_points = 2;
  double epsilon = 1e-6;
};

GradSuiteReport run_gradient_suite(const GradSuiteOptions& options = {});

std::string format_grad_suite(const GradSuiteReport& report);

}  // namespace hmd
