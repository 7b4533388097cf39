#pragma once

#include <string>
#include <string_view>

namespace nce {

enum class DivergenceKind { kKl, kChiSquare, kJensenShannon, kOptimalJs, kDensityPower };

/// Value and log-r derivative of one objective term: `weight` is
/// d(value)/d(log r).
struct TermEval {
  double value;
  double weight;
};

/// A strictly convex f defining one NCE objective.
///
/// KL:           f(x) = x log x
/// ChiSquare:    f(x) = x^2 / 2
/// JensenShannon f(x) = x log x - (1 + x) log(1 + x)
/// OptimalJs(nu) f(x) = x log x - (1/nu + x) log(1 + nu x),  nu = m1 / m2
/// DensityPower  f(x) = x^(b+1) / (b+1)
///
/// The induced estimating-equation weight is psi(r) = f''(r) r.
class Divergence {
 public:
  static Divergence kl();
  static Divergence chi_square();
  static Divergence jensen_shannon();
  /// A non-positive `nu` leaves the ratio unbound until bind_ratio().
  static Divergence optimal_js(double nu = 0.0);
  static Divergence density_power(double beta);

  /// Parses "kl", "chi2", "js", "ojs", "ojs:<nu>" or "dpow:<beta>".
  static Divergence parse(std::string_view name);

  DivergenceKind kind() const { return kind_; }
  /// nu for OptimalJs, beta for DensityPower, 0 otherwise.
  double parameter() const { return param_; }
  bool needs_ratio() const { return kind_ == DivergenceKind::kOptimalJs && !(param_ > 0.0); }
  /// Returns a copy with nu = m1 / m2 bound (no-op for other kinds).
  Divergence bind_ratio(double nu) const;
  std::string name() const;

  double f(double x) const;
  double second_derivative(double x) const;
  double psi(double r) const;
  /// psi evaluated from log r; stays finite where r itself would overflow.
  double psi_from_log(double log_r) const;

  /// True iff f'' is bounded on (0, bound].
  bool is_robust(double bound) const;

  /// Data-stratum term f'(r) of the objective.
  TermEval data_term(double log_r) const;
  /// Auxiliary-stratum term r f'(r) - f(r) of the objective.
  TermEval aux_term(double log_r) const;

 private:
  Divergence(DivergenceKind kind, double param);
  void require_bound() const;

  DivergenceKind kind_;
  double param_;
  double log_param_;
};

}  // namespace nce
