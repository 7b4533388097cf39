#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nce/matrix.hpp"
#include "nce/rng.hpp"

namespace nce {

/// Parameters of the extended model p(x; alpha) = exp(c - h(x; theta)).
struct Alpha {
  double c = 0.0;
  Vector theta;

  std::size_t size() const { return 1 + theta.size(); }
  Vector flat() const;
  static Alpha from_flat(std::span<const double> values);
};

/// A list of points of fixed dimension, stored contiguously.
class PointSet {
 public:
  PointSet() = default;
  explicit PointSet(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : coords_.size() / dim_; }
  bool empty() const { return coords_.empty(); }

  std::span<const double> operator[](std::size_t i) const { return {coords_.data() + i * dim_, dim_}; }
  void push_back(std::span<const double> point);
  void reserve(std::size_t count) { coords_.reserve(count * dim_); }
  std::span<const double> coords() const { return coords_; }

 private:
  std::size_t dim_ = 0;
  Vector coords_;
};

/// Stratified sample: x from the target, y from the auxiliary density.
struct SampleSet {
  PointSet x;
  PointSet y;

  std::size_t m1() const { return x.size(); }
  std::size_t m2() const { return y.size(); }
  std::size_t m() const { return m1() + m2(); }
};

enum class ModelKind { kGauss1D, kTruncPrecision3D };

/// Unnormalized target model. Both supported models are linear in theta:
/// h(x; theta) = theta . features(x), so features(x) is also grad_theta h.
class UnnormalizedModel {
 public:
  virtual ~UnnormalizedModel() = default;

  virtual ModelKind kind() const = 0;
  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::size_t theta_dim() const = 0;
  virtual bool in_support(std::span<const double> x) const = 0;
  virtual void features(std::span<const double> x, std::span<double> out) const = 0;
  /// log of the integral of exp(-h(x; theta)) over the support.
  virtual double log_partition(std::span<const double> theta) const = 0;
  virtual PointSet sample(const Alpha& truth, std::size_t count, Rng& rng) const = 0;
  /// Deterministic method-of-moments starting value for theta.
  virtual Vector moment_theta(const PointSet& x) const = 0;
  /// Throws InvalidArgument unless theta describes a proper density.
  virtual void validate_theta(std::span<const double> theta) const = 0;
  /// Whether exp(-h) is integrable over the support: the domain fits search.
  /// validate_theta may be stricter where sampling needs more.
  virtual bool theta_in_domain(std::span<const double> theta) const = 0;
  /// Coordinates the optimizer works in. theta = map(free) elementwise;
  /// `jacobian` receives d theta_i / d free_i. Identity by default.
  virtual void theta_from_free(std::span<const double> free, std::span<double> theta,
                               std::span<double> jacobian) const;
  virtual Vector free_from_theta(std::span<const double> theta) const;

  double h(std::span<const double> x, std::span<const double> theta) const;
  double log_p(std::span<const double> x, const Alpha& alpha) const;
  /// grad_alpha log p = (1, -grad_theta h).
  Vector grad_log_p(std::span<const double> x) const;
  /// c that normalizes exp(c - h(x; theta)).
  double normalizing_c(std::span<const double> theta) const { return -log_partition(theta); }
};

/// exp(c - theta x^2) on the real line.
class Gauss1DModel final : public UnnormalizedModel {
 public:
  ModelKind kind() const override { return ModelKind::kGauss1D; }
  std::string name() const override { return "gauss1d"; }
  std::size_t dim() const override { return 1; }
  std::size_t theta_dim() const override { return 1; }
  bool in_support(std::span<const double> x) const override;
  void features(std::span<const double> x, std::span<double> out) const override;
  double log_partition(std::span<const double> theta) const override;
  PointSet sample(const Alpha& truth, std::size_t count, Rng& rng) const override;
  /// 0.5 * median(chi2_1) / median(x^2); a single gross outlier barely moves it.
  Vector moment_theta(const PointSet& x) const override;
  void validate_theta(std::span<const double> theta) const override;
  bool theta_in_domain(std::span<const double> theta) const override;
  /// theta = exp(free).
  void theta_from_free(std::span<const double> free, std::span<double> theta,
                       std::span<double> jacobian) const override;
  Vector free_from_theta(std::span<const double> theta) const override;
};

/// exp(c - x^T D x / 2) on {x in R^3 : x_i > lower}. theta holds the upper
/// triangle of D: (D11, D12, D13, D22, D23, D33).
class TruncPrecision3DModel final : public UnnormalizedModel {
 public:
  explicit TruncPrecision3DModel(double lower = 0.3) : lower_(lower) {}

  ModelKind kind() const override { return ModelKind::kTruncPrecision3D; }
  std::string name() const override { return "trunc_precision3d"; }
  std::size_t dim() const override { return 3; }
  std::size_t theta_dim() const override { return 6; }
  bool in_support(std::span<const double> x) const override;
  void features(std::span<const double> x, std::span<double> out) const override;
  double log_partition(std::span<const double> theta) const override;
  PointSet sample(const Alpha& truth, std::size_t count, Rng& rng) const override;
  Vector moment_theta(const PointSet& x) const override;
  /// Requires D positive definite, which the sampler needs.
  void validate_theta(std::span<const double> theta) const override;
  /// D strictly copositive.
  bool theta_in_domain(std::span<const double> theta) const override;

  double lower() const { return lower_; }

  static Matrix precision_from_theta(std::span<const double> theta);
  static Vector theta_from_precision(const Matrix& d);

 private:
  double lower_;
};

enum class AuxKind { kGaussMeanVar1D, kTruncDiagNormal3D };

/// Normalized auxiliary ("noise") family n(x; beta).
class AuxiliaryFamily {
 public:
  virtual ~AuxiliaryFamily() = default;

  virtual AuxKind kind() const = 0;
  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::size_t beta_dim() const = 0;
  virtual bool in_support(std::span<const double> x) const = 0;
  virtual void validate_beta(std::span<const double> beta) const = 0;
  virtual double log_density(std::span<const double> x, std::span<const double> beta) const = 0;
  virtual void grad_log_density(std::span<const double> x, std::span<const double> beta,
                                std::span<double> out) const = 0;
  virtual PointSet sample(std::span<const double> beta, std::size_t count, Rng& rng) const = 0;
  /// Maximum-likelihood estimate of beta from `y`.
  virtual Vector mle(const PointSet& y) const = 0;
};

/// N(mu, var) with beta = (mu, var).
class GaussMeanVar1D final : public AuxiliaryFamily {
 public:
  AuxKind kind() const override { return AuxKind::kGaussMeanVar1D; }
  std::string name() const override { return "gauss_mean_var_1d"; }
  std::size_t dim() const override { return 1; }
  std::size_t beta_dim() const override { return 2; }
  bool in_support(std::span<const double> x) const override;
  void validate_beta(std::span<const double> beta) const override;
  double log_density(std::span<const double> x, std::span<const double> beta) const override;
  void grad_log_density(std::span<const double> x, std::span<const double> beta,
                        std::span<double> out) const override;
  PointSet sample(std::span<const double> beta, std::size_t count, Rng& rng) const override;
  Vector mle(const PointSet& y) const override;
};

/// Product of three independent normals, each truncated below at `lower`.
/// beta = (mu1, var1, mu2, var2, mu3, var3) are the untruncated parameters.
class TruncDiagNormal3D final : public AuxiliaryFamily {
 public:
  explicit TruncDiagNormal3D(double lower = 0.3) : lower_(lower) {}

  AuxKind kind() const override { return AuxKind::kTruncDiagNormal3D; }
  std::string name() const override { return "trunc_diag_normal3d"; }
  std::size_t dim() const override { return 3; }
  std::size_t beta_dim() const override { return 6; }
  bool in_support(std::span<const double> x) const override;
  void validate_beta(std::span<const double> beta) const override;
  double log_density(std::span<const double> x, std::span<const double> beta) const override;
  void grad_log_density(std::span<const double> x, std::span<const double> beta,
                        std::span<double> out) const override;
  PointSet sample(std::span<const double> beta, std::size_t count, Rng& rng) const override;
  Vector mle(const PointSet& y) const override;

  double lower() const { return lower_; }

 private:
  double lower_;
};

/// One-dimensional normal truncated below; the building block of
/// TruncDiagNormal3D, exposed for testing.
namespace truncated_normal {
double log_density(double x, double mu, double var, double lower);
/// (d/dmu, d/dvar) of log_density.
std::pair<double, double> score(double x, double mu, double var, double lower);
double sample(double mu, double var, double lower, Rng& rng);
/// Raw moments E[X^k], k = 1..4.
std::array<double, 4> raw_moments(double mu, double var, double lower);
/// MLE of (mu, var) from the values; Newton in natural parameters with up
/// to 10 restarts of 200 iterations each. Throws MleDiverged.
std::pair<double, double> mle(std::span<const double> values, double lower);
}  // namespace truncated_normal

double log_density_ratio(const UnnormalizedModel& model, const AuxiliaryFamily& aux, std::span<const double> x,
                         const Alpha& alpha, std::span<const double> beta);

}  // namespace nce
