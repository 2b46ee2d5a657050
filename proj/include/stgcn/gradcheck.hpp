#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stgcn/tape.hpp"

namespace stgcn {

/// Tolerances for comparing tape gradients with central differences.
struct GradCheckOptions {
  float step = 1e-3f;
  double rel_tol = 1e-2;
  double abs_tol = 1e-3;
  /// Fraction of coordinates that must meet rel_tol; the rest must meet abs_tol.
  double min_rel_fraction = 0.95;
};

struct GradCheckReport {
  std::string name;
  std::size_t coordinates = 0;
  std::size_t within_rel = 0;
  std::size_t within_abs_only = 0;
  std::size_t failures = 0;
  double worst_abs = 0.0;
  /// Coordinates whose forward and backward one-sided differences disagree
  /// beyond the tolerances: the step straddles a ReLU kink there, so the
  /// central difference is not a derivative estimate.
  std::size_t kinks = 0;
  bool passed = false;
};

/// Builds an output from parameter Vars bound on a fresh tape.
using OutputBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Compares backward() against central differences for every coordinate of
/// every parameter.
///
/// The checked scalar is sum(output * R) for a fixed random R in [-1, 1],
/// accumulated in double on the numeric side so that outputs untouched by a
/// perturbation cancel exactly.
GradCheckReport check_gradients(const std::string& name, const OutputBuilder& build,
                                std::vector<Tensor> params, const GradCheckOptions& opts = {},
                                std::uint64_t projection_seed = 0x5eed);

}  // namespace stgcn
