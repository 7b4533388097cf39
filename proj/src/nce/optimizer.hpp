#pragma once

#include <functional>
#include <limits>
#include <span>

#include "nce/matrix.hpp"

namespace nce {

/// Evaluates f at x and writes its gradient into `grad`. May return a
/// non-finite value; the line search treats such points as overshoots.
using ObjectiveFn = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct OptimizerOptions {
  /// Converged once |grad| <= grad_tol * (1 + |f|).
  double grad_tol = 1e-8;
  int max_iterations = 500;
  int max_backtracks = 60;
  /// Largest trial step, as a max-norm in x. Keeps the search inside the
  /// basin it starts in when the objective has deeper wells further out.
  double max_step = std::numeric_limits<double>::infinity();
  /// Gives up (converged = false) after this many consecutive steps that
  /// leave f unchanged, as when pinned against a wall of non-finite values.
  int max_stalled = 20;
};

struct OptimizerResult {
  Vector x;
  double value = 0.0;
  Vector gradient;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// BFGS on the inverse Hessian with a backtracking Armijo line search.
/// Throws NonFiniteObjective if f(x0) is not finite and LineSearchFailed
/// when neither the quasi-Newton nor the steepest-descent direction yields
/// an acceptable step within max_backtracks halvings. Running out of
/// iterations is not an error: the result has converged = false.
OptimizerResult minimize_bfgs(const ObjectiveFn& fn, Vector x0, const OptimizerOptions& options = {});

}  // namespace nce
