#include "nce/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include "nce/error.hpp"

namespace nce {

namespace {

void fill_stratum(const UnnormalizedModel& model, const AuxiliaryFamily& aux, std::span<const double> beta,
                  const PointSet& points, Vector& features, Vector& log_n) {
  const std::size_t k = model.theta_dim();
  features.assign(points.size() * k, 0.0);
  log_n.assign(points.size(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto x = points[i];
    if (!model.in_support(x)) throw Error(ErrorCode::kOutOfSupport, "sample point outside the model support");
    model.features(x, std::span<double>(features).subspan(i * k, k));
    log_n[i] = aux.log_density(x, beta);
  }
}

}  // namespace

NceProblem::NceProblem(const UnnormalizedModel& model, const AuxiliaryFamily& aux, Vector beta,
                       Divergence divergence, const SampleSet& sample)
    : model_(&model),
      aux_(&aux),
      beta_(std::move(beta)),
      divergence_(divergence),
      theta_dim_(model.theta_dim()),
      m1_(sample.m1()),
      m2_(sample.m2()) {
  if (m1_ == 0 || m2_ == 0) throw Error(ErrorCode::kInvalidArgument, "both strata must be nonempty");
  if (sample.x.dim() != model.dim() || sample.y.dim() != model.dim() || aux.dim() != model.dim()) {
    throw Error(ErrorCode::kInvalidArgument, "sample, model and auxiliary dimensions disagree");
  }
  aux.validate_beta(beta_);
  const double nu = static_cast<double>(m1_) / static_cast<double>(m2_);
  if (divergence_.kind() == DivergenceKind::kOptimalJs) {
    if (divergence_.needs_ratio()) {
      divergence_ = divergence_.bind_ratio(nu);
    } else if (std::abs(divergence_.parameter() - nu) > 1e-12 * nu) {
      throw Error(ErrorCode::kInvalidArgument, "optimal Jensen-Shannon ratio does not match m1/m2 of the sample");
    }
  }
  fill_stratum(model, aux, beta_, sample.x, x_features_, x_log_n_);
  fill_stratum(model, aux, beta_, sample.y, y_features_, y_log_n_);
}

void NceProblem::set_objective_scale(double scale) {
  if (!(scale > 0.0)) throw Error(ErrorCode::kInvalidArgument, "objective scale must be positive");
  scale_ = scale;
}

double NceProblem::evaluate(std::span<const double> alpha_flat, std::span<double> grad) const {
  const std::size_t k = theta_dim_;
  const double c = alpha_flat[0];
  const std::span<const double> theta = alpha_flat.subspan(1, k);
  for (double& g : grad) g = 0.0;

  // Data stratum: -f'(r), whose alpha-gradient is -psi * (1, -features).
  double data_sum = 0.0;
  double data_w = 0.0;
  Vector data_feat(k, 0.0);
  for (std::size_t i = 0; i < m1_; ++i) {
    const double* f = x_features_.data() + i * k;
    double h = 0.0;
    for (std::size_t j = 0; j < k; ++j) h += theta[j] * f[j];
    const TermEval t = divergence_.data_term(c - h - x_log_n_[i]);
    data_sum += t.value;
    data_w += t.weight;
    for (std::size_t j = 0; j < k; ++j) data_feat[j] += t.weight * f[j];
  }
  // Auxiliary stratum: r f'(r) - f(r), with alpha-gradient psi r (1, -features).
  double aux_sum = 0.0;
  double aux_w = 0.0;
  Vector aux_feat(k, 0.0);
  for (std::size_t i = 0; i < m2_; ++i) {
    const double* f = y_features_.data() + i * k;
    double h = 0.0;
    for (std::size_t j = 0; j < k; ++j) h += theta[j] * f[j];
    const TermEval t = divergence_.aux_term(c - h - y_log_n_[i]);
    aux_sum += t.value;
    aux_w += t.weight;
    for (std::size_t j = 0; j < k; ++j) aux_feat[j] += t.weight * f[j];
  }
  const double inv1 = scale_ / static_cast<double>(m1_);
  const double inv2 = scale_ / static_cast<double>(m2_);
  grad[0] = -data_w * inv1 + aux_w * inv2;
  for (std::size_t j = 0; j < k; ++j) grad[1 + j] = data_feat[j] * inv1 - aux_feat[j] * inv2;
  return -data_sum * inv1 + aux_sum * inv2;
}

double NceProblem::objective(const Alpha& alpha) const {
  const Vector flat = alpha.flat();
  if (flat.size() != alpha_dim()) throw Error(ErrorCode::kInvalidArgument, "alpha has the wrong dimension");
  Vector grad(alpha_dim());
  const double value = evaluate(flat, grad);
  if (!std::isfinite(value)) throw Error(ErrorCode::kNonFiniteObjective, "objective overflowed");
  return value;
}

Vector NceProblem::objective_gradient(const Alpha& alpha) const {
  const Vector flat = alpha.flat();
  if (flat.size() != alpha_dim()) throw Error(ErrorCode::kInvalidArgument, "alpha has the wrong dimension");
  Vector grad(alpha_dim());
  evaluate(flat, grad);
  for (double g : grad) {
    if (!std::isfinite(g)) throw Error(ErrorCode::kNonFiniteGradient, "objective gradient overflowed");
  }
  return grad;
}

Vector NceProblem::estimating_equation(const Alpha& alpha) const {
  Vector v = objective_gradient(alpha);
  const double m = static_cast<double>(m1_ + m2_);
  const double factor = -static_cast<double>(m1_) * static_cast<double>(m2_) / (m * m * scale_);
  for (double& e : v) e *= factor;
  return v;
}

double NceProblem::profiled_c(std::span<const double> theta) const {
  const std::size_t k = theta_dim_;
  if (theta.size() != k) throw Error(ErrorCode::kInvalidArgument, "theta has the wrong dimension");
  // log-sum-exp over the auxiliary points.
  Vector terms(m2_);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m2_; ++i) {
    const double* f = y_features_.data() + i * k;
    double h = 0.0;
    for (std::size_t j = 0; j < k; ++j) h += theta[j] * f[j];
    terms[i] = -h - y_log_n_[i];
    top = std::max(top, terms[i]);
  }
  if (!std::isfinite(top)) throw Error(ErrorCode::kNonFiniteObjective, "normalizer estimate overflowed");
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - top);
  return -(top + std::log(sum / static_cast<double>(m2_)));
}

Alpha default_init(const NceProblem& problem, const SampleSet& sample) {
  Vector theta = problem.model().moment_theta(sample.x);
  if (!problem.model().theta_in_domain(theta)) {
    throw Error(ErrorCode::kInvalidArgument, "moment estimate of theta is outside the model domain");
  }
  return {problem.profiled_c(theta), std::move(theta)};
}

FitResult fit_nc(const NceProblem& problem, const Alpha& init, const OptimizerOptions& options) {
  const Vector start = init.flat();
  if (start.size() != problem.alpha_dim()) throw Error(ErrorCode::kInvalidArgument, "initial alpha has the wrong dimension");
  for (double e : start) {
    if (!std::isfinite(e)) throw Error(ErrorCode::kInvalidArgument, "initial alpha is not finite");
  }
  const UnnormalizedModel& model = problem.model();
  if (!model.theta_in_domain(init.theta)) throw Error(ErrorCode::kInvalidArgument, "initial theta is outside the model domain");

  const std::size_t k = init.theta.size();
  Vector x0(1 + k);
  x0[0] = init.c;
  const Vector free0 = model.free_from_theta(init.theta);
  std::copy(free0.begin(), free0.end(), x0.begin() + 1);

  Vector alpha(1 + k);
  Vector jac(k);
  const auto to_alpha = [&](std::span<const double> x) {
    alpha[0] = x[0];
    model.theta_from_free(x.subspan(1), std::span<double>(alpha).subspan(1), jac);
  };
  const OptimizerResult opt = minimize_bfgs(
      [&](std::span<const double> x, std::span<double> g) {
        to_alpha(x);
        if (!model.theta_in_domain(std::span<const double>(alpha).subspan(1))) {
          return std::numeric_limits<double>::quiet_NaN();
        }
        const double value = problem.evaluate(alpha, g);
        for (std::size_t j = 0; j < k; ++j) g[1 + j] *= jac[j];
        return value;
      },
      x0, options);
  to_alpha(opt.x);
  return {Alpha::from_flat(alpha), opt.value, opt.gradient_norm, opt.iterations, opt.converged};
}

FitResult fit_default(const NceProblem& problem, const SampleSet& sample, const OptimizerOptions& options) {
  OptimizerOptions capped = options;
  if (!std::isfinite(capped.max_step)) capped.max_step = 0.5;
  const Alpha base = default_init(problem, sample);
  FitResult last;
  std::exception_ptr error;
  for (double scale : {1.0, 1.25, 1.5, 2.0, 0.8}) {
    Vector theta = base.theta;
    for (double& t : theta) t *= scale;
    try {
      const Alpha start{problem.profiled_c(theta), theta};
      last = fit_nc(problem, start, capped);
      error = nullptr;
      if (last.converged) return last;
    } catch (const Error&) {
      error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return last;
}

PluginFit fit_pl(const UnnormalizedModel& model, const AuxiliaryFamily& aux, const Divergence& divergence,
                 const SampleSet& sample, const Alpha& init, const OptimizerOptions& options) {
  Vector beta_hat = aux.mle(sample.y);
  const NceProblem problem(model, aux, beta_hat, divergence, sample);
  return {fit_nc(problem, init, options), std::move(beta_hat)};
}

PluginFit fit_pl(const UnnormalizedModel& model, const AuxiliaryFamily& aux, const Divergence& divergence,
                 const SampleSet& sample, const OptimizerOptions& options) {
  Vector beta_hat = aux.mle(sample.y);
  const NceProblem problem(model, aux, beta_hat, divergence, sample);
  return {fit_default(problem, sample, options), std::move(beta_hat)};
}

}  // namespace nce
