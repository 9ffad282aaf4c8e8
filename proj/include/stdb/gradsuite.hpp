#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stdb {

struct GradCheckEntry {
  std::string name;
  double max_error = 0.0;
  std::size_t instances = 0;
};

struct GradSuiteResult {
  std::vector<GradCheckEntry> entries;
  double max_error = 0.0;
  double tolerance = 1e-4;

  bool passed() const { return max_error < tolerance; }
};

// Central finite-difference verification of every differentiable operation:
// tensor primitives, attention stages, losses and the full training forward.
// Each entry runs at least ten random instances.
GradSuiteResult run_gradient_suite(std::uint64_t seed, double tolerance = 1e-4,
                                   double eps = 1e-5);

}  // namespace stdb
