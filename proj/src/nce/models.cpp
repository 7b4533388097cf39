#include "nce/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "nce/error.hpp"
#include "nce/special.hpp"

namespace nce {

namespace {

constexpr std::size_t kMaxFeatures = 8;

void require_size(std::span<const double> v, std::size_t n, const char* what) {
  if (v.size() != n) {
    std::ostringstream os;
    os << what << " must have " << n << " entries, got " << v.size();
    throw Error(ErrorCode::kInvalidArgument, os.str());
  }
}

void require_finite(std::span<const double> v, const char* what) {
  for (double e : v) {
    if (!std::isfinite(e)) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " has a non-finite entry");
  }
}

void require_in_support(bool ok, const std::string& who) {
  if (!ok) throw Error(ErrorCode::kOutOfSupport, "point outside the support of " + who);
}

}  // namespace

Vector Alpha::flat() const {
  Vector out;
  out.reserve(size());
  out.push_back(c);
  out.insert(out.end(), theta.begin(), theta.end());
  return out;
}

Alpha Alpha::from_flat(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::kInvalidArgument, "alpha needs at least the c entry");
  return {values[0], Vector(values.begin() + 1, values.end())};
}

void PointSet::push_back(std::span<const double> point) {
  if (point.size() != dim_) throw Error(ErrorCode::kInvalidArgument, "point dimension mismatch");
  coords_.insert(coords_.end(), point.begin(), point.end());
}

// ---- UnnormalizedModel ----------------------------------------------------

double UnnormalizedModel::h(std::span<const double> x, std::span<const double> theta) const {
  std::array<double, kMaxFeatures> feat{};
  const std::span<double> f(feat.data(), theta_dim());
  features(x, f);
  return dot(f, theta);
}

double UnnormalizedModel::log_p(std::span<const double> x, const Alpha& alpha) const {
  require_in_support(in_support(x), name());
  return alpha.c - h(x, alpha.theta);
}

Vector UnnormalizedModel::grad_log_p(std::span<const double> x) const {
  Vector g(1 + theta_dim());
  g[0] = 1.0;
  features(x, std::span<double>(g).subspan(1));
  for (std::size_t i = 1; i < g.size(); ++i) g[i] = -g[i];
  return g;
}

void UnnormalizedModel::theta_from_free(std::span<const double> free, std::span<double> theta,
                                        std::span<double> jacobian) const {
  for (std::size_t i = 0; i < free.size(); ++i) {
    theta[i] = free[i];
    jacobian[i] = 1.0;
  }
}

Vector UnnormalizedModel::free_from_theta(std::span<const double> theta) const {
  return Vector(theta.begin(), theta.end());
}

// ---- Gauss1DModel ---------------------------------------------------------

namespace {
// Median of the chi-square distribution with one degree of freedom.
constexpr double kChi2OneMedian = 0.45493642311957283;
}  // namespace

bool Gauss1DModel::in_support(std::span<const double> x) const { return x.size() == 1 && std::isfinite(x[0]); }

void Gauss1DModel::features(std::span<const double> x, std::span<double> out) const { out[0] = x[0] * x[0]; }

void Gauss1DModel::validate_theta(std::span<const double> theta) const {
  require_size(theta, 1, "gauss1d theta");
  if (!(theta[0] > 0.0) || !std::isfinite(theta[0])) {
    throw Error(ErrorCode::kInvalidArgument, "gauss1d needs theta > 0 for a proper density");
  }
}

double Gauss1DModel::log_partition(std::span<const double> theta) const {
  validate_theta(theta);
  return 0.5 * std::log(std::numbers::pi / theta[0]);
}

PointSet Gauss1DModel::sample(const Alpha& truth, std::size_t count, Rng& rng) const {
  validate_theta(truth.theta);
  const double sd = 1.0 / std::sqrt(2.0 * truth.theta[0]);
  PointSet out(1);
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double x = sd * rng.std_normal();
    out.push_back({&x, 1});
  }
  return out;
}

Vector Gauss1DModel::moment_theta(const PointSet& x) const {
  const std::size_t n = x.size();
  if (n < 2) return {0.5};
  std::vector<double> sq;
  sq.reserve(n);
  for (double v : x.coords()) sq.push_back(v * v);
  const auto mid = sq.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(sq.begin(), mid, sq.end());
  const double med = *mid;
  return {med > 0.0 && std::isfinite(med) ? 0.5 * kChi2OneMedian / med : 0.5};
}

bool Gauss1DModel::theta_in_domain(std::span<const double> theta) const {
  return theta.size() == 1 && theta[0] > 0.0 && std::isfinite(theta[0]);
}

void Gauss1DModel::theta_from_free(std::span<const double> free, std::span<double> theta,
                                   std::span<double> jacobian) const {
  theta[0] = std::exp(free[0]);
  jacobian[0] = theta[0];
}

Vector Gauss1DModel::free_from_theta(std::span<const double> theta) const {
  validate_theta(theta);
  return {std::log(theta[0])};
}

// ---- TruncPrecision3DModel ------------------------------------------------

Matrix TruncPrecision3DModel::precision_from_theta(std::span<const double> theta) {
  require_size(theta, 6, "trunc_precision3d theta");
  return Matrix{{theta[0], theta[1], theta[2]}, {theta[1], theta[3], theta[4]}, {theta[2], theta[4], theta[5]}};
}

Vector TruncPrecision3DModel::theta_from_precision(const Matrix& d) {
  if (d.rows() != 3 || d.cols() != 3) throw Error(ErrorCode::kInvalidArgument, "precision must be 3x3");
  return {d(0, 0), 0.5 * (d(0, 1) + d(1, 0)), 0.5 * (d(0, 2) + d(2, 0)),
          d(1, 1), 0.5 * (d(1, 2) + d(2, 1)), d(2, 2)};
}

bool TruncPrecision3DModel::in_support(std::span<const double> x) const {
  return x.size() == 3 && x[0] > lower_ && x[1] > lower_ && x[2] > lower_ && std::isfinite(x[0]) &&
         std::isfinite(x[1]) && std::isfinite(x[2]);
}

// h = x^T D x / 2 over the upper-triangle entries; off-diagonals appear twice
// in the quadratic form, so their features carry no 1/2.
void TruncPrecision3DModel::features(std::span<const double> x, std::span<double> out) const {
  out[0] = 0.5 * x[0] * x[0];
  out[1] = x[0] * x[1];
  out[2] = x[0] * x[2];
  out[3] = 0.5 * x[1] * x[1];
  out[4] = x[1] * x[2];
  out[5] = 0.5 * x[2] * x[2];
}

void TruncPrecision3DModel::validate_theta(std::span<const double> theta) const {
  require_size(theta, 6, "trunc_precision3d theta");
  require_finite(theta, "trunc_precision3d theta");
  try {
    cholesky(precision_from_theta(theta));
  } catch (const Error&) {
    throw Error(ErrorCode::kInvalidArgument, "trunc_precision3d needs a positive-definite precision matrix");
  }
}

// exp(-x^T D x / 2) is integrable on the shifted orthant iff D is strictly
// copositive. For 3 x 3 this has a closed form (Hadeler).
bool TruncPrecision3DModel::theta_in_domain(std::span<const double> theta) const {
  if (theta.size() != 6) return false;
  for (double t : theta) {
    if (!std::isfinite(t)) return false;
  }
  const double a11 = theta[0];
  const double a12 = theta[1];
  const double a13 = theta[2];
  const double a22 = theta[3];
  const double a23 = theta[4];
  const double a33 = theta[5];
  if (!(a11 > 0.0 && a22 > 0.0 && a33 > 0.0)) return false;
  const double s1 = std::sqrt(a11);
  const double s2 = std::sqrt(a22);
  const double s3 = std::sqrt(a33);
  const double b12 = a12 + s1 * s2;
  const double b13 = a13 + s1 * s3;
  const double b23 = a23 + s2 * s3;
  if (!(b12 > 0.0 && b13 > 0.0 && b23 > 0.0)) return false;
  return s1 * s2 * s3 + a12 * s3 + a13 * s2 + a23 * s1 + std::sqrt(2.0 * b12 * b13 * b23) > 0.0;
}

// The x3 integral has a closed form; the remaining 2-D integral uses
// composite Gauss-Legendre over [lower, lower + 12 sd].
double TruncPrecision3DModel::log_partition(std::span<const double> theta) const {
  validate_theta(theta);
  const Matrix d = precision_from_theta(theta);
  const Matrix cov = cholesky_inverse(d);
  const double sd = std::sqrt(std::max(cov(0, 0), cov(1, 1)));
  const QuadratureRule rule = composite_gauss_legendre(10, 48, lower_, lower_ + 12.0 * sd);
  const double d33 = d(2, 2);
  const double log_inner_const = 0.5 * std::log(2.0 * std::numbers::pi / d33);
  const double root33 = std::sqrt(d33);

  auto log_integrand = [&](double x1, double x2) {
    const double b = d(0, 2) * x1 + d(1, 2) * x2;
    const double quad = d(0, 0) * x1 * x1 + 2.0 * d(0, 1) * x1 * x2 + d(1, 1) * x2 * x2;
    return -0.5 * quad + 0.5 * b * b / d33 + log_inner_const + std_normal_log_sf(root33 * (lower_ + b / d33));
  };
  // Scale by the corner value so the sum stays in range.
  const double shift = log_integrand(lower_, lower_);
  double total = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
      row += rule.weights[j] * std::exp(log_integrand(rule.nodes[i], rule.nodes[j]) - shift);
    }
    total += rule.weights[i] * row;
  }
  return shift + std::log(total);
}

PointSet TruncPrecision3DModel::sample(const Alpha& truth, std::size_t count, Rng& rng) const {
  validate_theta(truth.theta);
  const Matrix chol = cholesky(cholesky_inverse(precision_from_theta(truth.theta)));
  constexpr std::size_t kWindow = 100000;
  constexpr double kMinRate = 1e-4;
  PointSet out(3);
  out.reserve(count);
  std::size_t proposals = 0;
  std::size_t accepted_in_window = 0;
  while (out.size() < count) {
    const double z0 = rng.std_normal();
    const double z1 = rng.std_normal();
    const double z2 = rng.std_normal();
    const std::array<double, 3> x{chol(0, 0) * z0, chol(1, 0) * z0 + chol(1, 1) * z1,
                                  chol(2, 0) * z0 + chol(2, 1) * z1 + chol(2, 2) * z2};
    if (in_support(x)) {
      out.push_back(x);
      ++accepted_in_window;
    }
    if (++proposals % kWindow == 0) {
      if (static_cast<double>(accepted_in_window) < kMinRate * kWindow) {
        throw Error(ErrorCode::kRejectionStall, "truncated-normal rejection sampler acceptance rate below 1e-4");
      }
      accepted_in_window = 0;
    }
  }
  return out;
}

Vector TruncPrecision3DModel::moment_theta(const PointSet& x) const {
  const std::size_t n = x.size();
  const Vector fallback{1.0, 0.0, 0.0, 1.0, 0.0, 1.0};
  if (n < 4) return fallback;
  std::array<double, 3> mean{};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < 3; ++k) mean[k] += x[i][k];
  }
  for (double& v : mean) v /= static_cast<double>(n);
  Matrix cov(3, 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = 0; b < 3; ++b) cov(a, b) += (x[i][a] - mean[a]) * (x[i][b] - mean[b]);
    }
  }
  cov *= 1.0 / static_cast<double>(n);
  try {
    Matrix d = cholesky_inverse(cov);
    d.symmetrize();
    return theta_from_precision(d);
  } catch (const Error&) {
    return fallback;
  }
}

// ---- GaussMeanVar1D -------------------------------------------------------

bool GaussMeanVar1D::in_support(std::span<const double> x) const { return x.size() == 1 && std::isfinite(x[0]); }

void GaussMeanVar1D::validate_beta(std::span<const double> beta) const {
  require_size(beta, 2, "gauss_mean_var_1d beta");
  require_finite(beta, "gauss_mean_var_1d beta");
  if (!(beta[1] > 0.0)) throw Error(ErrorCode::kInvalidArgument, "auxiliary variance must be positive");
}

double GaussMeanVar1D::log_density(std::span<const double> x, std::span<const double> beta) const {
  require_in_support(in_support(x), name());
  const double d = x[0] - beta[0];
  return -0.5 * std::log(2.0 * std::numbers::pi * beta[1]) - 0.5 * d * d / beta[1];
}

void GaussMeanVar1D::grad_log_density(std::span<const double> x, std::span<const double> beta,
                                      std::span<double> out) const {
  require_in_support(in_support(x), name());
  const double d = x[0] - beta[0];
  const double v = beta[1];
  out[0] = d / v;
  out[1] = -0.5 / v + 0.5 * d * d / (v * v);
}

PointSet GaussMeanVar1D::sample(std::span<const double> beta, std::size_t count, Rng& rng) const {
  validate_beta(beta);
  const double sd = std::sqrt(beta[1]);
  PointSet out(1);
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double x = beta[0] + sd * rng.std_normal();
    out.push_back({&x, 1});
  }
  return out;
}

Vector GaussMeanVar1D::mle(const PointSet& y) const {
  const std::size_t n = y.size();
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "auxiliary MLE needs at least two points");
  double mean = 0.0;
  for (double v : y.coords()) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : y.coords()) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(n);
  if (!(var > 0.0)) throw Error(ErrorCode::kMleDiverged, "auxiliary MLE: sample variance is zero");
  return {mean, var};
}

// ---- truncated_normal -----------------------------------------------------

namespace truncated_normal {

double log_density(double x, double mu, double var, double lower) {
  if (!(x > lower)) throw Error(ErrorCode::kOutOfSupport, "point below the truncation bound");
  const double sd = std::sqrt(var);
  return std_normal_log_pdf((x - mu) / sd) - std::log(sd) - std_normal_log_sf((lower - mu) / sd);
}

std::pair<double, double> score(double x, double mu, double var, double lower) {
  if (!(x > lower)) throw Error(ErrorCode::kOutOfSupport, "point below the truncation bound");
  const double sd = std::sqrt(var);
  const double z = (x - mu) / sd;
  const double a = (lower - mu) / sd;
  const double lam = std_normal_hazard(a);
  return {(z - lam) / sd, (z * z - 1.0 - lam * a) / (2.0 * var)};
}

double sample(double mu, double var, double lower, Rng& rng) {
  const double sd = std::sqrt(var);
  const double a = (lower - mu) / sd;
  // Inverse CDF on the upper tail: z = Phi^-1(1 - u S(a)) lies in (a, inf).
  const double tail = rng.uniform() * std_normal_sf(a);
  const double z = -std_normal_quantile(tail);
  return std::max(mu + sd * z, std::nextafter(lower, std::numeric_limits<double>::infinity()));
}

std::array<double, 4> raw_moments(double mu, double var, double lower) {
  const double sd = std::sqrt(var);
  const double a = (lower - mu) / sd;
  const double lam = std_normal_hazard(a);
  // Moments of Z given Z > a: z_k = (k-1) z_{k-2} + a^(k-1) lambda.
  const double z1 = lam;
  const double z2 = 1.0 + a * lam;
  const double z3 = 2.0 * z1 + a * a * lam;
  const double z4 = 3.0 * z2 + a * a * a * lam;
  const double mu2 = mu * mu;
  return {mu + sd * z1, mu2 + 2.0 * mu * sd * z1 + var * z2,
          mu2 * mu + 3.0 * mu2 * sd * z1 + 3.0 * mu * var * z2 + var * sd * z3,
          mu2 * mu2 + 4.0 * mu2 * mu * sd * z1 + 6.0 * mu2 * var * z2 + 4.0 * mu * var * sd * z3 + var * var * z4};
}

namespace {

struct NewtonOutcome {
  bool ok = false;
  double mu = 0.0;
  double var = 0.0;
};

// Mean log-likelihood in natural parameters given the first two sample
// moments s1, s2.
double mean_loglik(double eta1, double eta2, double s1, double s2, double lower) {
  const double var = -0.5 / eta2;
  const double mu = eta1 * var;
  const double sd = std::sqrt(var);
  const double log_norm = 0.5 * mu * mu / var + 0.5 * std::log(2.0 * std::numbers::pi * var) +
                          std_normal_log_sf((lower - mu) / sd);
  return eta1 * s1 + eta2 * s2 - log_norm;
}

NewtonOutcome newton(double s1, double s2, double lower, double mu0, double var0) {
  constexpr int kMaxIter = 200;
  constexpr double kTol = 1e-9;
  double eta1 = mu0 / var0;
  double eta2 = -0.5 / var0;
  double ll = mean_loglik(eta1, eta2, s1, s2, lower);
  for (int iter = 0; iter < kMaxIter; ++iter) {
    const double var = -0.5 / eta2;
    const double mu = eta1 * var;
    const auto m = raw_moments(mu, var, lower);
    const double g1 = s1 - m[0];
    const double g2 = s2 - m[1];
    const double score_mu = g1 / var;
    const double score_var = -g1 * mu / (var * var) + 0.5 * g2 / (var * var);
    if (!std::isfinite(score_mu) || !std::isfinite(score_var)) return {};
    if (std::hypot(score_mu, score_var) <= kTol) return {true, mu, var};

    const Matrix cov{{m[1] - m[0] * m[0], m[2] - m[0] * m[1]}, {m[2] - m[0] * m[1], m[3] - m[1] * m[1]}};
    Vector step;
    try {
      step = cholesky_solve(cov, std::array<double, 2>{g1, g2});
    } catch (const Error&) {
      step = {g1, g2};
    }
    double t = 1.0;
    bool moved = false;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      const double e1 = eta1 + t * step[0];
      const double e2 = eta2 + t * step[1];
      if (!(e2 < 0.0)) continue;
      const double trial = mean_loglik(e1, e2, s1, s2, lower);
      if (std::isfinite(trial) && trial >= ll - 1e-14 * (1.0 + std::abs(ll))) {
        eta1 = e1;
        eta2 = e2;
        ll = trial;
        moved = true;
        break;
      }
    }
    if (!moved) return {};
  }
  return {};
}

}  // namespace

// The likelihood is affine-equivariant, so the fit runs on standardized
// values and maps back.
std::pair<double, double> mle(std::span<const double> values, double lower) {
  const std::size_t n = values.size();
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "truncated-normal MLE needs at least two points");
  double mean = 0.0;
  for (double v : values) {
    if (!(v > lower)) throw Error(ErrorCode::kOutOfSupport, "MLE input below the truncation bound");
    mean += v;
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double scale = std::sqrt(ss / static_cast<double>(n));
  if (!(scale > 0.0)) throw Error(ErrorCode::kMleDiverged, "truncated-normal MLE: sample variance is zero");
  const double std_lower = (lower - mean) / scale;

  constexpr int kRestarts = 10;
  Rng restart_rng(0x7f4a7c15u);
  double mu0 = 0.0;
  double var0 = 1.0;
  for (int attempt = 0; attempt <= kRestarts; ++attempt) {
    const NewtonOutcome out = newton(0.0, 1.0, std_lower, mu0, var0);
    if (out.ok) return {mean + scale * out.mu, scale * scale * out.var};
    mu0 = restart_rng.std_normal();
    var0 = std::exp(restart_rng.std_normal());
  }
  throw Error(ErrorCode::kMleDiverged, "truncated-normal MLE did not converge after 10 restarts");
}

}  // namespace truncated_normal

// ---- TruncDiagNormal3D ----------------------------------------------------

bool TruncDiagNormal3D::in_support(std::span<const double> x) const {
  return x.size() == 3 && x[0] > lower_ && x[1] > lower_ && x[2] > lower_ && std::isfinite(x[0]) &&
         std::isfinite(x[1]) && std::isfinite(x[2]);
}

void TruncDiagNormal3D::validate_beta(std::span<const double> beta) const {
  require_size(beta, 6, "trunc_diag_normal3d beta");
  require_finite(beta, "trunc_diag_normal3d beta");
  for (std::size_t k = 0; k < 3; ++k) {
    if (!(beta[2 * k + 1] > 0.0)) throw Error(ErrorCode::kInvalidArgument, "auxiliary variances must be positive");
  }
}

double TruncDiagNormal3D::log_density(std::span<const double> x, std::span<const double> beta) const {
  require_in_support(in_support(x), name());
  double total = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    total += truncated_normal::log_density(x[k], beta[2 * k], beta[2 * k + 1], lower_);
  }
  return total;
}

void TruncDiagNormal3D::grad_log_density(std::span<const double> x, std::span<const double> beta,
                                         std::span<double> out) const {
  require_in_support(in_support(x), name());
  for (std::size_t k = 0; k < 3; ++k) {
    const auto [dmu, dvar] = truncated_normal::score(x[k], beta[2 * k], beta[2 * k + 1], lower_);
    out[2 * k] = dmu;
    out[2 * k + 1] = dvar;
  }
}

PointSet TruncDiagNormal3D::sample(std::span<const double> beta, std::size_t count, Rng& rng) const {
  validate_beta(beta);
  PointSet out(3);
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::array<double, 3> x{};
    for (std::size_t k = 0; k < 3; ++k) x[k] = truncated_normal::sample(beta[2 * k], beta[2 * k + 1], lower_, rng);
    out.push_back(x);
  }
  return out;
}

Vector TruncDiagNormal3D::mle(const PointSet& y) const {
  Vector beta(6);
  Vector column(y.size());
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < y.size(); ++i) column[i] = y[i][k];
    const auto [mu, var] = truncated_normal::mle(column, lower_);
    beta[2 * k] = mu;
    beta[2 * k + 1] = var;
  }
  return beta;
}

double log_density_ratio(const UnnormalizedModel& model, const AuxiliaryFamily& aux, std::span<const double> x,
                         const Alpha& alpha, std::span<const double> beta) {
  return model.log_p(x, alpha) - aux.log_density(x, beta);
}

}  // namespace nce
