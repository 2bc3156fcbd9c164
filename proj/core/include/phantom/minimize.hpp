#pragma once

#include <functional>
#include <optional>

#include "phantom/linalg.hpp"

namespace phantom::num {

/// Objective callback: returns f(x) and writes the gradient into `grad`.
/// Returning a non-finite value marks x as inadmissible.
using Objective = std::function<double(const Vector& x, Vector& grad)>;

struct Bounds {
  Vector lower;
  Vector upper;
};

struct MinimizerOptions {
  double gradient_tolerance = 1e-6;
  double relative_tolerance = 1e-10;
  int max_iterations = 2000;
  int history = 10;
};

enum class StopReason { gradient, objective_change, max_iterations, line_search };

struct MinimizerResult {
  Vector x;
  double value = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  StopReason reason = StopReason::max_iterations;
};

/// Limited-memory BFGS with Armijo backtracking. Accepted steps never
/// increase the objective. With `bounds`, iterates are projected onto the box
/// and the projected gradient drives the stopping test.
///
/// Throws PreconditionError if f(start) is not finite and NumericalError
/// (carrying the last good point) if no finite trial point can be found
/// along a descent direction.
MinimizerResult minimize(const Objective& objective, const Vector& start,
                         const std::optional<Bounds>& bounds = std::nullopt,
                         const MinimizerOptions& options = {});

}  // namespace phantom::num
