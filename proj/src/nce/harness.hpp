#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nce/divergence.hpp"
#include "nce/estimator.hpp"
#include "nce/inference.hpp"
#include "nce/models.hpp"

namespace nce {

/// Model, auxiliary family, truth and the fixed auxiliary parameter.
struct ProblemSetup {
  std::shared_ptr<const UnnormalizedModel> model;
  std::shared_ptr<const AuxiliaryFamily> aux;
  Alpha truth;
  Vector beta;
};

/// A divergence as named in plans: "OJS", "JS", "KL", "Chi", "DPOW:<b>",
/// optionally prefixed with "P" for the plug-in estimator ("POJS").
struct MethodSpec {
  std::string label;
  Divergence divergence;
  bool plugin = false;

  static MethodSpec parse(const std::string& label);
};

struct Contamination {
  Vector value;
  std::size_t count = 0;
};

enum class PlanType { kSweep, kContamination, kTruncated, kVarianceValidation, kWald };

struct ExperimentPlan {
  std::string name = "experiment";
  PlanType type = PlanType::kSweep;
  ProblemSetup setup;
  std::vector<MethodSpec> methods;
  std::vector<std::size_t> sample_sizes;
  double ratio1 = 1.0;
  double ratio2 = 1.0;
  std::size_t replications = 100;
  std::optional<Contamination> contamination;
  std::uint64_t base_seed = 1;
  unsigned workers = 1;
  /// Draws for the Monte Carlo backend where quadrature is unavailable.
  std::size_t mc_draws = 200000;

  /// m1 = round(m r1 / (r1 + r2)), m2 = m - m1.
  std::pair<std::size_t, std::size_t> split(std::size_t m) const;
  /// Throws Config on an unusable plan.
  void validate() const;
};

/// Names of the error components: ("c", "theta") for gauss1d and ("c", "D")
/// for the 3-D model, where D sums the squared errors of the six free
/// precision entries.
std::vector<std::string> error_components(const UnnormalizedModel& model);
/// Squared error of each component.
Vector squared_errors(const UnnormalizedModel& model, const Alpha& estimate, const Alpha& truth);

struct MseRow {
  std::string divergence;
  std::size_t m = 0;
  std::string component;
  double mse = 0.0;
  double std_error = 0.0;
  std::size_t n_used = 0;
  std::size_t n_excluded = 0;
};

struct MseTable {
  std::string name;
  std::vector<MseRow> rows;

  // Per-replication squared errors, NaN where the replication was excluded.
  std::vector<std::string> methods;
  std::vector<std::size_t> sample_sizes;
  std::vector<std::string> components;
  std::size_t replications = 0;
  std::vector<double> squared_error;

  double error(std::size_t method, std::size_t size, std::size_t component, std::size_t rep) const;
  /// Per-replication errors of one cell (NaN for exclusions).
  Vector cell_errors(std::size_t method, std::size_t size, std::size_t component) const;
  const MseRow& row(const std::string& method, std::size_t m, const std::string& component) const;
  std::size_t method_index(const std::string& label) const;
  bool any_cell_fully_excluded() const;
};

/// Replication r at sample size m draws its data from
/// derive_seed(base_seed, m, r); every method sees the same data.
/// Failed fits are counted as exclusions and never abort the sweep.
MseTable run_mse_sweep(const ExperimentPlan& plan);
/// run_mse_sweep with a required contamination entry.
MseTable run_contamination(const ExperimentPlan& plan);
/// run_mse_sweep on the truncated 3-D model.
MseTable run_truncated_experiment(const ExperimentPlan& plan);

struct VarianceValidation {
  std::string method;
  std::size_t m = 0;
  std::size_t replications = 0;
  std::size_t n_used = 0;
  std::vector<std::string> components;
  /// m * MSE per component and its standard error.
  Vector empirical;
  Vector empirical_std_error;
  /// Matching diagonal sum of the asymptotic covariance.
  Vector analytic;
  Vector relative_gap;
};

/// Runs the plan's first method at one sample size and compares m * MSE
/// with the analytic asymptotic variance.
VarianceValidation run_variance_validation(const ExperimentPlan& plan, std::size_t m, std::size_t reps);

struct WaldCalibration {
  std::size_t m = 0;
  std::size_t replications = 0;
  std::size_t n_used = 0;
  double critical_value = 0.0;
  double rejection_rate = 0.0;
  Vector statistics;
};

/// Fits the plan's first (non-plug-in) method, estimates the variance from
/// the pooled-sample H at the fit and tests alpha = truth at level `level`.
WaldCalibration run_wald_calibration(const ExperimentPlan& plan, std::size_t m, std::size_t reps,
                                     double level = 0.05);

struct ReductionCheck {
  std::string method;
  double lambda1 = 0.0;
  /// Smallest eigenvalue and Frobenius norm of lambda1 A^-1 B C^-1 B^T A^-1.
  double min_eigenvalue = 0.0;
  double norm = 0.0;
};

/// The plug-in variance reduction at the truth for every method and
/// distinct m1/m of the plan (quadrature for gauss1d, else Monte Carlo).
std::vector<ReductionCheck> reduction_checks(const ExperimentPlan& plan);

/// Paired one-sided bootstrap over replications where both entries are
/// finite: fraction of resamples in which mean(a) < mean(b).
double paired_bootstrap_confidence(std::span<const double> a, std::span<const double> b, std::size_t resamples,
                                   std::uint64_t seed);

}  // namespace nce
