#include "nce/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "nce/error.hpp"

namespace nce {

namespace {

bool all_finite(std::span<const double> v) {
  for (double e : v) {
    if (!std::isfinite(e)) return false;
  }
  return true;
}

struct Step {
  bool ok = false;
  Vector x;
  double value = 0.0;
  Vector grad;
};

Step line_search(const ObjectiveFn& fn, const Vector& x, double f, const Vector& g, const Vector& dir,
                 const OptimizerOptions& options) {
  const double slope = dot(g, dir);
  const std::size_t n = x.size();
  Step trial{false, Vector(n), 0.0, Vector(n)};
  double longest = 0.0;
  for (double d : dir) longest = std::max(longest, std::abs(d));
  double t = longest > options.max_step ? options.max_step / longest : 1.0;
  const int max_backtracks = options.max_backtracks;
  for (int k = 0; k < max_backtracks; ++k, t *= 0.5) {
    for (std::size_t i = 0; i < n; ++i) trial.x[i] = x[i] + t * dir[i];
    trial.value = fn(trial.x, trial.grad);
    if (!std::isfinite(trial.value) || !all_finite(trial.grad)) continue;
    if (trial.value <= f + 1e-4 * t * slope) {
      trial.ok = true;
      return trial;
    }
    // Near the minimum the Armijo decrease drowns in rounding; accept a
    // step that does not increase f beyond rounding and flattens the slope.
    if (trial.value <= f + 1e-13 * (1.0 + std::abs(f)) && std::abs(dot(trial.grad, dir)) <= 0.9 * std::abs(slope)) {
      trial.ok = true;
      return trial;
    }
  }
  return trial;
}

}  // namespace

OptimizerResult minimize_bfgs(const ObjectiveFn& fn, Vector x0, const OptimizerOptions& options) {
  const std::size_t n = x0.size();
  OptimizerResult res;
  res.x = std::move(x0);
  res.gradient.assign(n, 0.0);
  res.value = fn(res.x, res.gradient);
  if (!std::isfinite(res.value) || !all_finite(res.gradient)) {
    throw Error(ErrorCode::kNonFiniteObjective, "objective is not finite at the starting point");
  }

  Matrix hinv = Matrix::identity(n);
  bool scaled = false;
  int stalled = 0;
  for (;;) {
    res.gradient_norm = norm2(res.gradient);
    if (res.gradient_norm <= options.grad_tol * (1.0 + std::abs(res.value))) {
      res.converged = true;
      return res;
    }
    if (res.iterations >= options.max_iterations || stalled >= options.max_stalled) return res;

    Vector dir = hinv * std::span<const double>(res.gradient);
    for (double& d : dir) d = -d;
    bool steepest = false;
    if (!(dot(dir, res.gradient) < 0.0)) {
      hinv = Matrix::identity(n);
      scaled = false;
      for (std::size_t i = 0; i < n; ++i) dir[i] = -res.gradient[i];
      steepest = true;
    }
    Step step = line_search(fn, res.x, res.value, res.gradient, dir, options);
    if (!step.ok && !steepest) {
      hinv = Matrix::identity(n);
      scaled = false;
      for (std::size_t i = 0; i < n; ++i) dir[i] = -res.gradient[i];
      step = line_search(fn, res.x, res.value, res.gradient, dir, options);
    }
    if (!step.ok) {
      throw Error(ErrorCode::kLineSearchFailed, "line search found no acceptable step after backtracking");
    }

    Vector s(n);
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = step.x[i] - res.x[i];
      y[i] = step.grad[i] - res.gradient[i];
    }
    stalled = step.value < res.value ? 0 : stalled + 1;
    res.x = std::move(step.x);
    res.value = step.value;
    res.gradient = std::move(step.grad);
    ++res.iterations;

    const double sy = dot(s, y);
    if (sy > 1e-12 * norm2(s) * norm2(y)) {
      if (!scaled) {
        hinv = Matrix::identity(n) * (sy / dot(y, y));
        scaled = true;
      }
      // H+ = (I - rho s y^T) H (I - rho y s^T) + rho s s^T
      const double rho = 1.0 / sy;
      const Vector hy = hinv * std::span<const double>(y);
      const double yhy = dot(y, hy);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          hinv(i, j) += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
      }
    }
  }
}

}  // namespace nce
