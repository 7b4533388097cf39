#pragma once

#include <span>

#include "nce/divergence.hpp"
#include "nce/matrix.hpp"
#include "nce/models.hpp"
#include "nce/optimizer.hpp"

namespace nce {

struct FitResult {
  Alpha alpha_hat;
  double objective_value = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// One NCE fit: model, auxiliary at a fixed beta, divergence and sample.
/// An unbound OptimalJs divergence is bound to m1/m2 of the sample.
/// Features and log n of every point are computed once at construction.
///
/// The objective is normalized by stratum size:
///   J(alpha) = -mean_x f'(r) + mean_y (r f'(r) - f(r)).
class NceProblem {
 public:
  NceProblem(const UnnormalizedModel& model, const AuxiliaryFamily& aux, Vector beta, Divergence divergence,
             const SampleSet& sample);

  const UnnormalizedModel& model() const { return *model_; }
  const AuxiliaryFamily& aux() const { return *aux_; }
  const Vector& beta() const { return beta_; }
  const Divergence& divergence() const { return divergence_; }
  std::size_t m1() const { return m1_; }
  std::size_t m2() const { return m2_; }
  std::size_t alpha_dim() const { return 1 + theta_dim_; }

  /// Multiplies the objective (equivalently f) by `scale` > 0.
  void set_objective_scale(double scale);

  /// Throws NonFiniteObjective.
  double objective(const Alpha& alpha) const;
  /// Gradient of objective() in alpha. Throws NonFiniteGradient.
  Vector objective_gradient(const Alpha& alpha) const;
  /// V1m = (m1 m2 / m^2) (mean_x phi(x) - mean_y r(y) phi(y)), with
  /// phi = psi(r) grad_alpha log p. Equals -(m1 m2 / m^2) grad J.
  Vector estimating_equation(const Alpha& alpha) const;

  /// Objective and gradient at a flat alpha; returns a non-finite value
  /// instead of throwing.
  double evaluate(std::span<const double> alpha_flat, std::span<double> grad) const;

  /// c = -log mean_y exp(-h(y; theta) - log n(y)), the importance-sampling
  /// estimate of the normalizer from the auxiliary stratum.
  double profiled_c(std::span<const double> theta) const;

 private:
  const UnnormalizedModel* model_;
  const AuxiliaryFamily* aux_;
  Vector beta_;
  Divergence divergence_;
  std::size_t theta_dim_;
  std::size_t m1_;
  std::size_t m2_;
  double scale_ = 1.0;
  // Row-major (point, feature) tables and per-point log n.
  Vector x_features_;
  Vector x_log_n_;
  Vector y_features_;
  Vector y_log_n_;
};

/// The model's moment estimate of theta from the x stratum with c from
/// problem.profiled_c.
Alpha default_init(const NceProblem& problem, const SampleSet& sample);

/// Minimizes the objective with beta held fixed, over the model's proper
/// parameter domain and in its free coordinates. Points outside the domain
/// count as non-finite. For gauss1d a minimum at the theta -> 0 boundary
/// converges to a tiny positive theta.
FitResult fit_nc(const NceProblem& problem, const Alpha& init, const OptimizerOptions& options = {});

/// Fit used by the CLI and the experiments: fit_nc from default_init with
/// steps capped at 0.5 in free coordinates (unless options sets a cap).
/// If that fit throws or does not converge, theta is rescaled by 1.25, 1.5,
/// 2 and 0.8 in turn, c re-profiled, and the first converged fit returned.
/// Otherwise the last attempt's result or error.
FitResult fit_default(const NceProblem& problem, const SampleSet& sample, const OptimizerOptions& options = {});

struct PluginFit {
  FitResult fit;
  Vector beta_hat;
};

/// Re-estimates beta by MLE on the y stratum, then fits as fit_nc.
PluginFit fit_pl(const UnnormalizedModel& model, const AuxiliaryFamily& aux, const Divergence& divergence,
                 const SampleSet& sample, const Alpha& init, const OptimizerOptions& options = {});
/// As above, through fit_default at the re-estimated beta.
PluginFit fit_pl(const UnnormalizedModel& model, const AuxiliaryFamily& aux, const Divergence& divergence,
                 const SampleSet& sample, const OptimizerOptions& options = {});

}  // namespace nce
