#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nce/divergence.hpp"
#include "nce/matrix.hpp"
#include "nce/models.hpp"

namespace nce {

enum class BackendKind { kQuadrature, kMonteCarlo };

/// How expectations under the truth and the auxiliary are evaluated.
/// Quadrature (Simpson) is available for one-dimensional models only.
/// Monte Carlo splits the draws into fixed chunks with derived seeds and
/// reduces them in chunk order, so results do not depend on `workers`.
struct ExpectationBackend {
  BackendKind kind = BackendKind::kQuadrature;
  std::size_t draws = 1000000;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::size_t panels = 10000;
};

/// The point (alpha, beta) and sampling fraction lambda1 = m1/m at which
/// the asymptotic quantities are evaluated. Expectations under p use the
/// normalized density exp(-h(x; theta)) / Z(theta); r uses the given c.
struct TheorySetting {
  const UnnormalizedModel& model;
  const AuxiliaryFamily& aux;
  Alpha alpha;
  Vector beta;
  double lambda1;

  double lambda2() const { return 1.0 - lambda1; }
};

/// Blocks of the stratified sandwich with k = lambda1 lambda2:
///   A = -k E_p[psi g g^T],   g = grad_alpha log p = (1, -grad h)
///   B =  k E_n[psi r g s^T], s = grad_beta log n
///   C =  k E_n[s s^T]
///   G =  k (E_p[psi^2 g g^T (lambda2 + lambda1 r)] - E_p[psi g] E_p[psi g]^T)
struct SandwichMatrices {
  Matrix A;
  Matrix B;
  Matrix C;
  Matrix G;
  Vector mean_phi;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

enum class Scaling { kM, kM1 };

/// Asymptotic covariances of sqrt(m)(alpha_hat - alpha*), or of
/// sqrt(m1)(...) when scaled_by = kM1 (every matrix times m1/m).
struct AsvarReport {
  Matrix asvar_nc;
  Matrix asvar_pl;
  /// lambda1 A^-1 B C^-1 B^T A^-1, also the asymptotic covariance of
  /// sqrt(m)(alpha_NC - alpha_PL).
  Matrix reduction;
  Scaling scaled_by = Scaling::kM;
};

/// Calls fn(x, weight, acc) over a discretization of p (truth) or n (aux),
/// where acc has `width` slots; returns acc, an expectation when fn adds
/// weight * value.
enum class Stratum { kTruth, kAux };
using Integrand = std::function<void(std::span<const double> x, double weight, std::span<double> acc)>;
Vector expectation(const TheorySetting& setting, Stratum stratum, std::size_t width, const Integrand& fn,
                   const ExpectationBackend& backend);

/// An unbound OptimalJs divergence is bound to lambda1 / lambda2.
SandwichMatrices sandwich_matrices(const TheorySetting& setting, const Divergence& divergence,
                                   const ExpectationBackend& backend);

/// Throws SingularA when -A is not positive definite.
AsvarReport asvar(const SandwichMatrices& sm, Scaling scaled_by = Scaling::kM);

/// E_p[Omega], Omega = g g^T.
Matrix omega_mean(const TheorySetting& setting, const ExpectationBackend& backend);

/// H = E_p[Omega / (lambda2 + lambda1 r)].
Matrix optimal_H(const TheorySetting& setting, const ExpectationBackend& backend);

/// (H^-1 - Lambda) / (lambda1 lambda2), Lambda = e1 e1^T. Throws SingularH.
Matrix variance_from_H(const Matrix& h, double lambda1);

/// Smallest asymptotic covariance (m-scaled) over all divergences for the
/// non-plug-in estimator.
Matrix optimal_nc_variance(const TheorySetting& setting, const ExpectationBackend& backend);

/// (lambda2 E_p[Omega]^-1 - Lambda) / (lambda1 lambda2), m-scaled. Throws
/// SingularOmega.
Matrix pl_lower_bound(const TheorySetting& setting, const ExpectationBackend& backend);

/// Pooled-sample estimate of H: mean over x and y of
/// Omega(z) r(z) / (lambda2 + lambda1 r(z))^2, with r at (alpha_hat, beta).
Matrix empirical_H(const SampleSet& sample, const UnnormalizedModel& model, const AuxiliaryFamily& aux,
                   const Alpha& alpha_hat, std::span<const double> beta);

/// m (a - a0)^T asvar^-1 (a - a0).
double wald_statistic(const Alpha& alpha_hat, const Alpha& alpha0, const Matrix& asvar_hat, std::size_t m);

struct IdentityCheck {
  std::string name;
  Matrix lhs;
  Matrix rhs;
  /// |lhs - rhs|_F / max(|rhs|_F, 1e-300).
  double relative_residual = 0.0;
};

struct IdentityReport {
  std::vector<IdentityCheck> checks;
  double max_residual = 0.0;
};

/// Evaluates both sides of the special-case variance identities at the
/// setting: MLE variance, the KL sandwich, the true-auxiliary case (the
/// setting's beta is replaced by the auxiliary that equals the truth), the
/// block inverse of E[Omega], the lambda2 -> 1 limit and the e/(1-e) form
/// of the c variance. Variances here are scaled by m1.
IdentityReport variance_identities(const TheorySetting& setting, const ExpectationBackend& backend);

/// beta of the auxiliary family that coincides with the model at alpha;
/// throws InvalidArgument when the family cannot represent it.
Vector matching_aux_beta(const UnnormalizedModel& model, const AuxiliaryFamily& aux, const Alpha& alpha);

}  // namespace nce
