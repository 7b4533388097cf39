#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace nce {

double std_normal_pdf(double x);
double std_normal_log_pdf(double x);
/// Phi(x), computed as erfc(-x / sqrt 2) / 2.
double std_normal_cdf(double x);
/// 1 - Phi(x) without cancellation in the upper tail.
double std_normal_sf(double x);
double std_normal_log_sf(double x);
double std_normal_quantile(double p);
/// phi(x) / (1 - Phi(x)), the inverse Mills ratio.
double std_normal_hazard(double x);

/// Upper quantile of the chi-squared distribution with `dof` degrees.
double chi_squared_quantile(double p, double dof);

/// Composite Simpson rule with `panels` (rounded up to even) sub-intervals.
double simpson(const std::function<double(double)>& f, double lo, double hi, std::size_t panels);

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre rule with `order` nodes on [lo, hi].
QuadratureRule gauss_legendre(std::size_t order, double lo, double hi);
/// Composite Gauss-Legendre: `panels` equal panels of `order` nodes each.
QuadratureRule composite_gauss_legendre(std::size_t order, std::size_t panels, double lo, double hi);

}  // namespace nce
