#include "nce/divergence.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "nce/error.hpp"

namespace nce {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Powers of r are formed as exp(k log r); beyond this exponent the term is
// reported as non-finite instead of silently overflowing.
constexpr double kMaxExponent = 700.0;

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double exp_checked(double exponent) { return exponent > kMaxExponent ? kInf : std::exp(exponent); }

void require_positive(double x, const char* what) {
  if (!(x > 0.0)) {
    std::ostringstream os;
    os << what << " requires a positive argument, got " << x;
    throw Error(ErrorCode::kDomain, os.str());
  }
}

}  // namespace

Divergence::Divergence(DivergenceKind kind, double param)
    : kind_(kind), param_(param), log_param_(param > 0.0 ? std::log(param) : 0.0) {}

Divergence Divergence::kl() { return {DivergenceKind::kKl, 0.0}; }
Divergence Divergence::chi_square() { return {DivergenceKind::kChiSquare, 0.0}; }
Divergence Divergence::jensen_shannon() { return {DivergenceKind::kJensenShannon, 0.0}; }
Divergence Divergence::optimal_js(double nu) { return {DivergenceKind::kOptimalJs, nu > 0.0 ? nu : 0.0}; }

Divergence Divergence::density_power(double beta) {
  if (!(beta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "density-power divergence needs beta > 0");
  return {DivergenceKind::kDensityPower, beta};
}

Divergence Divergence::parse(std::string_view name) {
  if (name == "kl") return kl();
  if (name == "chi2") return chi_square();
  if (name == "js") return jensen_shannon();
  if (name == "ojs") return optimal_js();
  auto parameter = [name](std::size_t skip) {
    const std::string_view arg = name.substr(skip);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), value);
    if (arg.empty() || ec != std::errc() || ptr != arg.data() + arg.size()) {
      throw Error(ErrorCode::kInvalidArgument, "malformed divergence parameter in '" + std::string(name) + "'");
    }
    return value;
  };
  if (name.starts_with("ojs:")) {
    const double nu = parameter(4);
    require_positive(nu, "optimal Jensen-Shannon ratio");
    return optimal_js(nu);
  }
  if (name.starts_with("dpow:")) return density_power(parameter(5));
  throw Error(ErrorCode::kInvalidArgument,
              "unknown divergence '" + std::string(name) + "' (expected kl, chi2, js, ojs[:<nu>] or dpow:<beta>)");
}

Divergence Divergence::bind_ratio(double nu) const {
  if (kind_ != DivergenceKind::kOptimalJs) return *this;
  require_positive(nu, "optimal Jensen-Shannon ratio");
  return {kind_, nu};
}

void Divergence::require_bound() const {
  if (needs_ratio()) {
    throw Error(ErrorCode::kInvalidArgument, "optimal Jensen-Shannon divergence used before m1/m2 was bound");
  }
}

std::string Divergence::name() const {
  switch (kind_) {
    case DivergenceKind::kKl: return "kl";
    case DivergenceKind::kChiSquare: return "chi2";
    case DivergenceKind::kJensenShannon: return "js";
    case DivergenceKind::kOptimalJs: return "ojs";
    case DivergenceKind::kDensityPower: {
      std::ostringstream os;
      os << "dpow:" << param_;
      return os.str();
    }
  }
  return "?";
}

double Divergence::f(double x) const {
  require_positive(x, "f");
  switch (kind_) {
    case DivergenceKind::kKl: return x * std::log(x);
    case DivergenceKind::kChiSquare: return 0.5 * x * x;
    case DivergenceKind::kJensenShannon: return x * std::log(x) - (1.0 + x) * std::log1p(x);
    case DivergenceKind::kOptimalJs:
      require_bound();
      return x * std::log(x) - (1.0 / param_ + x) * std::log1p(param_ * x);
    case DivergenceKind::kDensityPower: return std::pow(x, param_ + 1.0) / (param_ + 1.0);
  }
  return 0.0;
}

double Divergence::second_derivative(double x) const {
  require_positive(x, "f''");
  switch (kind_) {
    case DivergenceKind::kKl: return 1.0 / x;
    case DivergenceKind::kChiSquare: return 1.0;
    case DivergenceKind::kJensenShannon: return 1.0 / (x * (1.0 + x));
    case DivergenceKind::kOptimalJs:
      require_bound();
      return 1.0 / (x * (1.0 + param_ * x));
    case DivergenceKind::kDensityPower: return param_ * std::pow(x, param_ - 1.0);
  }
  return 0.0;
}

double Divergence::psi(double r) const {
  require_positive(r, "psi");
  return psi_from_log(std::log(r));
}

double Divergence::psi_from_log(double log_r) const {
  switch (kind_) {
    case DivergenceKind::kKl: return 1.0;
    case DivergenceKind::kChiSquare: return exp_checked(log_r);
    case DivergenceKind::kJensenShannon: return sigmoid(-log_r);
    case DivergenceKind::kOptimalJs:
      require_bound();
      return sigmoid(-(log_r + log_param_));
    case DivergenceKind::kDensityPower: return param_ * exp_checked(param_ * log_r);
  }
  return 0.0;
}

bool Divergence::is_robust(double bound) const {
  require_positive(bound, "is_robust");
  switch (kind_) {
    case DivergenceKind::kChiSquare: return true;
    case DivergenceKind::kDensityPower: return param_ >= 1.0;
    case DivergenceKind::kKl:
    case DivergenceKind::kJensenShannon:
    case DivergenceKind::kOptimalJs: return false;
  }
  return false;
}

// Each case gives f'(r) and r f'(r) - f(r) in closed form as functions of
// log r. KL uses x log x - x, which has the same f'' and drops the constant
// -1 from f'(r), so the objective is exactly -mean log r + mean r.
TermEval Divergence::data_term(double log_r) const {
  switch (kind_) {
    case DivergenceKind::kKl: return {log_r, 1.0};
    case DivergenceKind::kChiSquare: {
      const double r = exp_checked(log_r);
      return {r, r};
    }
    case DivergenceKind::kJensenShannon:
      return {-softplus(-log_r), sigmoid(-log_r)};
    case DivergenceKind::kOptimalJs: {
      require_bound();
      const double z = log_r + log_param_;
      return {log_r - softplus(z), sigmoid(-z)};
    }
    case DivergenceKind::kDensityPower: {
      const double rb = exp_checked(param_ * log_r);
      return {rb, param_ * rb};
    }
  }
  return {0.0, 0.0};
}

TermEval Divergence::aux_term(double log_r) const {
  switch (kind_) {
    case DivergenceKind::kKl: {
      const double r = exp_checked(log_r);
      return {r, r};
    }
    case DivergenceKind::kChiSquare: {
      const double r2 = exp_checked(2.0 * log_r);
      return {0.5 * r2, r2};
    }
    case DivergenceKind::kJensenShannon:
      return {softplus(log_r), sigmoid(log_r)};
    case DivergenceKind::kOptimalJs: {
      require_bound();
      const double z = log_r + log_param_;
      return {softplus(z) / param_, sigmoid(z) / param_};
    }
    case DivergenceKind::kDensityPower: {
      const double rb1 = exp_checked((param_ + 1.0) * log_r);
      return {param_ / (param_ + 1.0) * rb1, param_ * rb1};
    }
  }
  return {0.0, 0.0};
}

}  // namespace nce
