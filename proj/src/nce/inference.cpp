#include "nce/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nce/error.hpp"
#include "nce/parallel.hpp"
#include "nce/special.hpp"

namespace nce {

namespace {

constexpr std::size_t kChunk = 1 << 16;

Matrix lambda_matrix(std::size_t n) {
  Matrix l(n, n);
  l(0, 0) = 1.0;
  return l;
}

void check_lambda(double lambda1) {
  if (!(lambda1 > 0.0 && lambda1 < 1.0)) throw Error(ErrorCode::kInvalidArgument, "lambda1 must lie in (0, 1)");
}

// Integration interval for the one-dimensional quadrature backend: the
// union of +-12 sd around the truth and the auxiliary.
std::pair<double, double> quadrature_range(const TheorySetting& s) {
  if (s.model.kind() != ModelKind::kGauss1D || s.aux.kind() != AuxKind::kGaussMeanVar1D) {
    throw Error(ErrorCode::kInvalidArgument, "the quadrature backend supports gauss1d with gauss_mean_var_1d only");
  }
  const double sd_p = 1.0 / std::sqrt(2.0 * s.alpha.theta.at(0));
  const double sd_n = std::sqrt(s.beta.at(1));
  const double lo = std::min(-12.0 * sd_p, s.beta[0] - 12.0 * sd_n);
  const double hi = std::max(12.0 * sd_p, s.beta[0] + 12.0 * sd_n);
  return {lo, hi};
}

double log_ratio(const TheorySetting& s, std::span<const double> x) {
  return s.alpha.c - s.model.h(x, s.alpha.theta) - s.aux.log_density(x, s.beta);
}

void add_outer(std::span<double> acc, double w, std::span<const double> a, std::span<const double> b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) acc[i * b.size() + j] += w * a[i] * b[j];
  }
}

Matrix to_matrix(std::span<const double> flat, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(rows * cols), m.data().begin());
  return m;
}

Matrix negative_definite_inverse(const Matrix& a) {
  try {
    return -1.0 * cholesky_inverse(-1.0 * a);
  } catch (const Error&) {
    throw Error(ErrorCode::kSingularA, "sandwich block A is singular (not negative definite)");
  }
}

double relative_residual(const Matrix& lhs, const Matrix& rhs) {
  return norm_frobenius(lhs - rhs) / std::max(norm_frobenius(rhs), 1e-300);
}

Matrix theta_block(const Matrix& m) {
  Matrix out(m.rows() - 1, m.cols() - 1);
  for (std::size_t i = 1; i < m.rows(); ++i) {
    for (std::size_t j = 1; j < m.cols(); ++j) out(i - 1, j - 1) = m(i, j);
  }
  return out;
}

}  // namespace

Vector expectation(const TheorySetting& setting, Stratum stratum, std::size_t width, const Integrand& fn,
                   const ExpectationBackend& backend) {
  check_lambda(setting.lambda1);
  setting.aux.validate_beta(setting.beta);
  setting.model.validate_theta(setting.alpha.theta);

  if (backend.kind == BackendKind::kQuadrature) {
    const auto [lo, hi] = quadrature_range(setting);
    std::size_t panels = std::max<std::size_t>(backend.panels, 2);
    if (panels % 2 != 0) ++panels;
    const double step = (hi - lo) / static_cast<double>(panels);
    const double log_z = setting.model.log_partition(setting.alpha.theta);
    Vector acc(width, 0.0);
    for (std::size_t i = 0; i <= panels; ++i) {
      const double x = lo + step * static_cast<double>(i);
      const double coef = (i == 0 || i == panels) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      const std::span<const double> pt(&x, 1);
      const double log_density = stratum == Stratum::kTruth ? -setting.model.h(pt, setting.alpha.theta) - log_z
                                                            : setting.aux.log_density(pt, setting.beta);
      fn(pt, coef * step / 3.0 * std::exp(log_density), acc);
    }
    return acc;
  }

  if (backend.draws == 0) throw Error(ErrorCode::kInvalidArgument, "Monte Carlo backend needs draws > 0");
  const std::size_t chunks = (backend.draws + kChunk - 1) / kChunk;
  const double weight = 1.0 / static_cast<double>(backend.draws);
  std::vector<Vector> partial(chunks, Vector(width, 0.0));
  parallel_for(chunks, backend.workers, [&](std::size_t c) {
    const std::size_t count = std::min(kChunk, backend.draws - c * kChunk);
    Rng rng(derive_seed(backend.seed, stratum == Stratum::kTruth ? 1 : 2, c));
    const PointSet pts = stratum == Stratum::kTruth ? setting.model.sample(setting.alpha, count, rng)
                                                    : setting.aux.sample(setting.beta, count, rng);
    for (std::size_t i = 0; i < pts.size(); ++i) fn(pts[i], weight, partial[c]);
  });
  Vector acc(width, 0.0);
  for (const Vector& p : partial) {
    for (std::size_t k = 0; k < width; ++k) acc[k] += p[k];
  }
  return acc;
}

SandwichMatrices sandwich_matrices(const TheorySetting& setting, const Divergence& divergence,
                                   const ExpectationBackend& backend) {
  check_lambda(setting.lambda1);
  const double l1 = setting.lambda1;
  const double l2 = setting.lambda2();
  const Divergence div = divergence.needs_ratio() ? divergence.bind_ratio(l1 / l2) : divergence;
  const std::size_t da = 1 + setting.model.theta_dim();
  const std::size_t db = setting.aux.beta_dim();

  // Truth stratum: [psi g g^T | psi g | psi^2 (l2 + l1 r) g g^T].
  const Vector truth = expectation(
      setting, Stratum::kTruth, 2 * da * da + da,
      [&](std::span<const double> x, double w, std::span<double> acc) {
        const Vector g = setting.model.grad_log_p(x);
        const double lr = log_ratio(setting, x);
        const double psi = div.psi_from_log(lr);
        const double r = std::exp(lr);
        add_outer(acc.subspan(0, da * da), w * psi, g, g);
        for (std::size_t i = 0; i < da; ++i) acc[da * da + i] += w * psi * g[i];
        add_outer(acc.subspan(da * da + da, da * da), w * psi * psi * (l2 + l1 * r), g, g);
      },
      backend);
  // Auxiliary stratum: [psi r g s^T | s s^T].
  const Vector aux = expectation(
      setting, Stratum::kAux, da * db + db * db,
      [&](std::span<const double> x, double w, std::span<double> acc) {
        const Vector g = setting.model.grad_log_p(x);
        Vector s(db);
        setting.aux.grad_log_density(x, setting.beta, s);
        const double lr = log_ratio(setting, x);
        const double psi_r = div.psi_from_log(lr) * std::exp(lr);
        add_outer(acc.subspan(0, da * db), w * psi_r, g, s);
        add_outer(acc.subspan(da * db, db * db), w, s, s);
      },
      backend);
  for (double v : truth) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFiniteObjective, "sandwich expectation under p overflowed");
  }
  for (double v : aux) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFiniteObjective, "sandwich expectation under n overflowed");
  }

  const double k = l1 * l2;
  SandwichMatrices sm;
  sm.lambda1 = l1;
  sm.lambda2 = l2;
  sm.A = -k * to_matrix(truth, da, da);
  sm.mean_phi.assign(truth.begin() + static_cast<std::ptrdiff_t>(da * da),
                     truth.begin() + static_cast<std::ptrdiff_t>(da * da + da));
  sm.G = k * (to_matrix(std::span<const double>(truth).subspan(da * da + da), da, da) - outer(sm.mean_phi, sm.mean_phi));
  sm.B = k * to_matrix(aux, da, db);
  sm.C = k * to_matrix(std::span<const double>(aux).subspan(da * db), db, db);
  sm.A.symmetrize();
  sm.G.symmetrize();
  sm.C.symmetrize();
  return sm;
}

AsvarReport asvar(const SandwichMatrices& sm, Scaling scaled_by) {
  const Matrix a_inv = negative_definite_inverse(sm.A);
  AsvarReport rep;
  rep.scaled_by = scaled_by;
  rep.asvar_nc = a_inv * sm.G * a_inv;
  const Matrix c_inv = cholesky_inverse(sm.C);
  const Matrix ab = a_inv * sm.B;
  rep.reduction = sm.lambda1 * (ab * c_inv * ab.transpose());
  rep.asvar_nc.symmetrize();
  rep.reduction.symmetrize();
  rep.asvar_pl = rep.asvar_nc - rep.reduction;
  if (scaled_by == Scaling::kM1) {
    rep.asvar_nc *= sm.lambda1;
    rep.asvar_pl *= sm.lambda1;
    rep.reduction *= sm.lambda1;
  }
  return rep;
}

Matrix omega_mean(const TheorySetting& setting, const ExpectationBackend& backend) {
  const std::size_t da = 1 + setting.model.theta_dim();
  const Vector e = expectation(
      setting, Stratum::kTruth, da * da,
      [&](std::span<const double> x, double w, std::span<double> acc) {
        const Vector g = setting.model.grad_log_p(x);
        add_outer(acc, w, g, g);
      },
      backend);
  Matrix m = to_matrix(e, da, da);
  m.symmetrize();
  return m;
}

Matrix optimal_H(const TheorySetting& setting, const ExpectationBackend& backend) {
  const std::size_t da = 1 + setting.model.theta_dim();
  const double l1 = setting.lambda1;
  const double l2 = setting.lambda2();
  const Vector e = expectation(
      setting, Stratum::kTruth, da * da,
      [&](std::span<const double> x, double w, std::span<double> acc) {
        const Vector g = setting.model.grad_log_p(x);
        const double r = std::exp(log_ratio(setting, x));
        add_outer(acc, w / (l2 + l1 * r), g, g);
      },
      backend);
  Matrix m = to_matrix(e, da, da);
  m.symmetrize();
  return m;
}

Matrix variance_from_H(const Matrix& h, double lambda1) {
  check_lambda(lambda1);
  Matrix h_inv;
  try {
    h_inv = cholesky_inverse(h);
  } catch (const Error&) {
    throw Error(ErrorCode::kSingularH, "H is singular");
  }
  Matrix v = (h_inv - lambda_matrix(h.rows())) * (1.0 / (lambda1 * (1.0 - lambda1)));
  v.symmetrize();
  return v;
}

Matrix optimal_nc_variance(const TheorySetting& setting, const ExpectationBackend& backend) {
  return variance_from_H(optimal_H(setting, backend), setting.lambda1);
}

Matrix pl_lower_bound(const TheorySetting& setting, const ExpectationBackend& backend) {
  const Matrix e_omega = omega_mean(setting, backend);
  Matrix inv;
  try {
    inv = cholesky_inverse(e_omega);
  } catch (const Error&) {
    throw Error(ErrorCode::kSingularOmega, "E[Omega] is singular");
  }
  const double l1 = setting.lambda1;
  const double l2 = setting.lambda2();
  Matrix bound = (l2 * inv - lambda_matrix(inv.rows())) * (1.0 / (l1 * l2));
  bound.symmetrize();
  return bound;
}

Matrix empirical_H(const SampleSet& sample, const UnnormalizedModel& model, const AuxiliaryFamily& aux,
                   const Alpha& alpha_hat, std::span<const double> beta) {
  const std::size_t m = sample.m();
  if (sample.m1() == 0 || sample.m2() == 0) throw Error(ErrorCode::kInvalidArgument, "both strata must be nonempty");
  const double l1 = static_cast<double>(sample.m1()) / static_cast<double>(m);
  const double l2 = 1.0 - l1;
  const std::size_t da = 1 + model.theta_dim();
  Matrix h(da, da);
  auto add = [&](const PointSet& pts) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto z = pts[i];
      const double lr = model.log_p(z, alpha_hat) - aux.log_density(z, beta);
      // r / (l2 + l1 r)^2, rewritten in 1/r for large r.
      double w;
      if (lr > 0.0) {
        const double inv = std::exp(-lr);
        w = inv / ((l2 * inv + l1) * (l2 * inv + l1));
      } else {
        const double r = std::exp(lr);
        w = r / ((l2 + l1 * r) * (l2 + l1 * r));
      }
      const Vector g = model.grad_log_p(z);
      for (std::size_t a = 0; a < da; ++a) {
        for (std::size_t b = 0; b < da; ++b) h(a, b) += w * g[a] * g[b];
      }
    }
  };
  add(sample.x);
  add(sample.y);
  h *= 1.0 / static_cast<double>(m);
  h.symmetrize();
  return h;
}

double wald_statistic(const Alpha& alpha_hat, const Alpha& alpha0, const Matrix& asvar_hat, std::size_t m) {
  const Vector a = alpha_hat.flat();
  const Vector b = alpha0.flat();
  if (a.size() != b.size() || a.size() != asvar_hat.rows()) {
    throw Error(ErrorCode::kInvalidArgument, "Wald statistic dimensions disagree");
  }
  Vector d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const Vector x = cholesky_solve(asvar_hat, d);
  return static_cast<double>(m) * dot(d, x);
}

Vector matching_aux_beta(const UnnormalizedModel& model, const AuxiliaryFamily& aux, const Alpha& alpha) {
  if (model.kind() == ModelKind::kGauss1D && aux.kind() == AuxKind::kGaussMeanVar1D) {
    model.validate_theta(alpha.theta);
    return {0.0, 0.5 / alpha.theta[0]};
  }
  throw Error(ErrorCode::kInvalidArgument, "the auxiliary family cannot represent the model's truth");
}

IdentityReport variance_identities(const TheorySetting& setting, const ExpectationBackend& backend) {
  const std::size_t da = 1 + setting.model.theta_dim();
  const std::size_t dt = da - 1;
  const double l1 = setting.lambda1;
  const double l2 = setting.lambda2();
  const Matrix lam = lambda_matrix(da);
  IdentityReport rep;
  auto record = [&rep](std::string name, Matrix lhs, Matrix rhs) {
    const double res = relative_residual(lhs, rhs);
    rep.max_residual = std::max(rep.max_residual, res);
    rep.checks.push_back({std::move(name), std::move(lhs), std::move(rhs), res});
  };

  // Moments of grad h under the (normalized) truth.
  const Matrix e_omega = omega_mean(setting, backend);
  const Matrix e_omega_inv = cholesky_inverse(e_omega);
  Vector mean_grad(dt);
  for (std::size_t i = 0; i < dt; ++i) mean_grad[i] = -e_omega(1 + i, 0);
  const Matrix second = theta_block(e_omega);
  const Matrix var_grad = second - outer(mean_grad, mean_grad);
  const Matrix var_grad_inv = cholesky_inverse(var_grad);

  // MLE variance: the Fisher information of the normalized model is the
  // Hessian of log Z, here by central differences.
  {
    const Vector theta = setting.alpha.theta;
    Matrix fisher(dt, dt);
    auto log_z = [&](std::size_t i, double di, std::size_t j, double dj) {
      Vector t = theta;
      t[i] += di;
      t[j] += dj;
      return setting.model.log_partition(t);
    };
    for (std::size_t i = 0; i < dt; ++i) {
      for (std::size_t j = 0; j < dt; ++j) {
        const double hi = 1e-4 * std::max(1.0, std::abs(theta[i]));
        const double hj = 1e-4 * std::max(1.0, std::abs(theta[j]));
        fisher(i, j) = (log_z(i, hi, j, hj) - log_z(i, hi, j, -hj) - log_z(i, -hi, j, hj) + log_z(i, -hi, j, -hj)) /
                       (4.0 * hi * hj);
      }
    }
    fisher.symmetrize();
    record("mle_variance", cholesky_inverse(fisher), var_grad_inv);
  }

  // KL sandwich at the setting's auxiliary.
  {
    const AsvarReport kl = asvar(sandwich_matrices(setting, Divergence::kl(), backend), Scaling::kM1);
    const Vector e = expectation(
        setting, Stratum::kTruth, da * da,
        [&](std::span<const double> x, double w, std::span<double> acc) {
          const Vector g = setting.model.grad_log_p(x);
          add_outer(acc, w * (l2 + l1 * std::exp(log_ratio(setting, x))), g, g);
        },
        backend);
    Matrix rhs = (e_omega_inv * to_matrix(e, da, da) * e_omega_inv - lam) * (1.0 / l2);
    rhs.symmetrize();
    record("kl_sandwich", kl.asvar_nc, rhs);
  }

  // Auxiliary equal to the truth: r = 1 everywhere.
  {
    TheorySetting truth_aux{setting.model, setting.aux, setting.alpha,
                            matching_aux_beta(setting.model, setting.aux, setting.alpha), l1};
    truth_aux.alpha.c = setting.model.normalizing_c(setting.alpha.theta);
    const AsvarReport rep_truth = asvar(sandwich_matrices(truth_aux, Divergence::kl(), backend), Scaling::kM1);
    record("true_aux_nc", rep_truth.asvar_nc, (e_omega_inv - lam) * (1.0 / l2));
    // Only the theta block of the plug-in variance reaches the bound; the c
    // entry stays at E[Omega]^-1 - Lambda, above (l2 E[Omega]^-1 - Lambda) / l2.
    record("true_aux_pl", rep_truth.asvar_pl, e_omega_inv - lam);
    record("true_aux_pl_theta_equals_mle", theta_block(rep_truth.asvar_pl), var_grad_inv);
  }

  // Block inverse of E[Omega] with Omega = g g^T, g = (1, -grad h).
  {
    Matrix rhs(da, da);
    const Vector vm = var_grad_inv * std::span<const double>(mean_grad);
    rhs(0, 0) = 1.0 + dot(mean_grad, vm);
    for (std::size_t i = 0; i < dt; ++i) {
      rhs(0, 1 + i) = vm[i];
      rhs(1 + i, 0) = vm[i];
      for (std::size_t j = 0; j < dt; ++j) rhs(1 + i, 1 + j) = var_grad_inv(i, j);
    }
    record("omega_block_inverse", e_omega_inv, rhs);
  }

  // lambda2 -> 1: both estimators approach E[Omega]^-1 - Lambda.
  {
    TheorySetting limit{setting.model, setting.aux, setting.alpha, setting.beta, 1e-6};
    const AsvarReport rep_limit = asvar(sandwich_matrices(limit, Divergence::optimal_js(), backend), Scaling::kM1);
    record("limit_nc", rep_limit.asvar_nc, e_omega_inv - lam);
    record("limit_pl", rep_limit.asvar_pl, e_omega_inv - lam);
  }

  // c variance in the limit equals e / (1 - e).
  {
    const Vector sm = cholesky_inverse(second) * std::span<const double>(mean_grad);
    const double e = dot(mean_grad, sm);
    const Matrix limit = e_omega_inv - lam;
    record("c_variance_ratio", Matrix{{e / (1.0 - e)}}, Matrix{{limit(0, 0)}});
  }
  return rep;
}

}  // namespace nce
