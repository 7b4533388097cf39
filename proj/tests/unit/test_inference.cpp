#include <doctest.h>

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "nce/error.hpp"
#include "nce/estimator.hpp"
#include "nce/inference.hpp"
#include "oracles.hpp"

using namespace nce;

namespace {

const Gauss1DModel kModel;
const GaussMeanVar1D kAux;
const Alpha kTruth{-0.5 * std::log(2.0 * std::numbers::pi), {0.5}};
const Vector kClose{0.2, 1.2};
const Vector kFar{1.6, 1.2};
constexpr double kL1 = 1.0 / 3.0;

ExpectationBackend quad() { return {}; }

ExpectationBackend mc(std::size_t draws = 1000000) {
  ExpectationBackend b;
  b.kind = BackendKind::kMonteCarlo;
  b.draws = draws;
  b.seed = 5;
  return b;
}

TheorySetting setting(const Vector& beta, double l1 = kL1) { return {kModel, kAux, kTruth, beta, l1}; }

// 2x2 oracle integral of p(x) w(x) v(x) v(x)^T with v = (1, -x^2).
Matrix gram(const std::function<double(double)>& w, const std::function<double(double)>& density) {
  Matrix out(2, 2);
  const std::function<double(double)> fs[3] = {
      [&](double x) { return density(x) * w(x); }, [&](double x) { return -density(x) * w(x) * x * x; },
      [&](double x) { return density(x) * w(x) * x * x * x * x; }};
  out(0, 0) = oracle::integrate(fs[0], -30, 30, 60000);
  out(0, 1) = out(1, 0) = oracle::integrate(fs[1], -30, 30, 60000);
  out(1, 1) = oracle::integrate(fs[2], -30, 30, 60000);
  return out;
}

double p_density(double x) { return oracle::normal_pdf(x, 0.0, 1.0); }

// Ratio model / auxiliary at the truth.
double ratio(double x, const Vector& beta) {
  return std::exp(kTruth.c - 0.5 * x * x) / oracle::normal_pdf(x, beta[0], beta[1]);
}

double rel(const Matrix& a, const Matrix& b) { return norm_frobenius(a - b) / norm_frobenius(b); }

}  // namespace

TEST_CASE("sandwich blocks match oracle integrals (OJS, Close)") {
  const double l2 = 1.0 - kL1;
  const double nu = kL1 / l2;
  const double k = kL1 * l2;
  const SandwichMatrices sm = sandwich_matrices(setting(kClose), Divergence::optimal_js(), quad());
  auto psi = [&](double x) { return 1.0 / (1.0 + nu * ratio(x, kClose)); };
  const Matrix a = -k * gram(psi, p_density);
  CHECK(rel(sm.A, a) < 1e-9);

  const double mphi0 = oracle::integrate([&](double x) { return p_density(x) * psi(x); }, -30, 30, 60000);
  const double mphi1 = oracle::integrate([&](double x) { return -p_density(x) * psi(x) * x * x; }, -30, 30, 60000);
  Matrix g = k * gram([&](double x) { return psi(x) * psi(x) * (l2 + kL1 * ratio(x, kClose)); }, p_density);
  g -= k * outer(Vector{mphi0, mphi1}, Vector{mphi0, mphi1});
  CHECK(rel(sm.G, g) < 1e-9);

  // C is k times the Fisher information of N(mu, v): diag(1/v, 1/(2 v^2)).
  const Matrix c{{k / 1.2, 0.0}, {0.0, k / (2.0 * 1.44)}};
  CHECK(rel(sm.C, c) < 1e-9);

  // B = k E_p[psi g s^T].
  Matrix b(2, 2);
  auto s0 = [](double x) { return (x - 0.2) / 1.2; };
  auto s1 = [](double x) { return -0.5 / 1.2 + 0.5 * (x - 0.2) * (x - 0.2) / 1.44; };
  b(0, 0) = k * oracle::integrate([&](double x) { return p_density(x) * psi(x) * s0(x); }, -30, 30, 60000);
  b(0, 1) = k * oracle::integrate([&](double x) { return p_density(x) * psi(x) * s1(x); }, -30, 30, 60000);
  b(1, 0) = k * oracle::integrate([&](double x) { return -p_density(x) * psi(x) * x * x * s0(x); }, -30, 30, 60000);
  b(1, 1) = k * oracle::integrate([&](double x) { return -p_density(x) * psi(x) * x * x * s1(x); }, -30, 30, 60000);
  CHECK(rel(sm.B, b) < 1e-9);
}

TEST_CASE("OJS asymptotic variance for the Gaussian settings") {
  const AsvarReport close = asvar(sandwich_matrices(setting(kClose), Divergence::optimal_js(), quad()));
  CHECK(close.asvar_nc(0, 0) == doctest::Approx(2.343).epsilon(1e-3));
  CHECK(close.asvar_nc(1, 1) == doctest::Approx(2.083).epsilon(1e-3));
  const AsvarReport far = asvar(sandwich_matrices(setting(kFar), Divergence::optimal_js(), quad()));
  CHECK(far.asvar_nc(0, 0) == doctest::Approx(6.437).epsilon(1e-3));
  CHECK(far.asvar_nc(1, 1) == doctest::Approx(3.169).epsilon(1e-3));
  // m1 scaling.
  const AsvarReport m1 = asvar(sandwich_matrices(setting(kClose), Divergence::optimal_js(), quad()), Scaling::kM1);
  CHECK(rel(m1.asvar_nc, kL1 * close.asvar_nc) < 1e-14);
}

TEST_CASE("OJS attains the optimal variance and the others do not beat it") {
  for (const Vector& beta : {kClose, kFar}) {
    const TheorySetting st = setting(beta);
    const Matrix opt = optimal_nc_variance(st, quad());
    const AsvarReport ojs = asvar(sandwich_matrices(st, Divergence::optimal_js(), quad()));
    CHECK(rel(ojs.asvar_nc, opt) < 1e-6);
    for (const Divergence& d : {Divergence::kl(), Divergence::chi_square(), Divergence::jensen_shannon()}) {
      const AsvarReport r = asvar(sandwich_matrices(st, d, quad()));
      CHECK(min_eigenvalue(r.asvar_nc - opt) >= -1e-8);
    }
  }
}

TEST_CASE("optimal variance from H and the oracle") {
  const TheorySetting st = setting(kClose);
  const Matrix h = optimal_H(st, quad());
  const double l2 = 1.0 - kL1;
  const Matrix href = gram([&](double x) { return 1.0 / (l2 + kL1 * ratio(x, kClose)); }, p_density);
  CHECK(rel(h, href) < 1e-9);
  Matrix expected = cholesky_inverse(href);
  expected(0, 0) -= 1.0;
  expected *= 1.0 / (kL1 * l2);
  CHECK(rel(variance_from_H(h, kL1), expected) < 1e-9);
  CHECK_THROWS_AS(variance_from_H(Matrix{{1.0, 1.0}, {1.0, 1.0}}, kL1), Error);
}

TEST_CASE("plug-in reduction is PSD and the lower bound sits below asvar_pl") {
  for (const Vector& beta : {kClose, kFar}) {
    for (const Divergence& d : {Divergence::kl(), Divergence::chi_square(), Divergence::jensen_shannon(),
                                Divergence::optimal_js(), Divergence::density_power(1.0)}) {
      const TheorySetting st = setting(beta);
      const AsvarReport r = asvar(sandwich_matrices(st, d, quad()));
      CHECK(min_eigenvalue(r.reduction) >= -1e-8 * norm_frobenius(r.reduction));
      CHECK(rel(r.asvar_nc - r.reduction, r.asvar_pl) < 1e-12);
      CHECK(min_eigenvalue(r.asvar_pl - pl_lower_bound(st, quad())) >= -1e-8);
    }
  }
  // The bound tends to E[Omega]^-1 - Lambda as lambda2 -> 1 (m1-scaled).
  const TheorySetting limit = setting(kClose, 1e-7);
  Matrix target = cholesky_inverse(omega_mean(limit, quad()));
  target(0, 0) -= 1.0;
  CHECK(rel(1e-7 * pl_lower_bound(limit, quad()), target) < 1e-5);
}

TEST_CASE("variance identities hold on the Gaussian settings") {
  for (const Vector& beta : {kClose, kFar}) {
    const IdentityReport rep = variance_identities(setting(beta), quad());
    CHECK(rep.checks.size() >= 8);
    for (const auto& c : rep.checks) {
      CAPTURE(c.name);
      CHECK(c.relative_residual <= 1e-4);
    }
  }
  // MLE variance for theta = 1/2: var[x^2] = 2, so 0.5.
  const IdentityReport rep = variance_identities(setting(kClose), quad());
  for (const auto& c : rep.checks) {
    if (c.name == "mle_variance") CHECK(c.rhs(0, 0) == doctest::Approx(0.5).epsilon(1e-8));
  }
  CHECK(matching_aux_beta(kModel, kAux, kTruth) == Vector{0.0, 1.0});
}

TEST_CASE("Monte Carlo backend agrees with quadrature and is worker-independent") {
  const TheorySetting st = setting(kClose);
  const AsvarReport q = asvar(sandwich_matrices(st, Divergence::optimal_js(), quad()));
  const AsvarReport m = asvar(sandwich_matrices(st, Divergence::optimal_js(), mc()));
  CHECK(rel(m.asvar_nc, q.asvar_nc) < 0.02);
  ExpectationBackend four = mc(300000);
  four.workers = 4;
  const SandwichMatrices a = sandwich_matrices(st, Divergence::kl(), mc(300000));
  const SandwichMatrices b = sandwich_matrices(st, Divergence::kl(), four);
  CHECK(max_abs(a.G - b.G) == 0.0);
  CHECK(max_abs(a.A - b.A) == 0.0);
}

TEST_CASE("Monte Carlo backend on the truncated model is consistent with the optimum") {
  auto model = std::make_shared<TruncPrecision3DModel>(0.3);
  const TruncDiagNormal3D aux(0.3);
  Matrix d = cholesky_inverse(Matrix{{0.8, 0.2, 0.2}, {0.2, 0.8, 0.2}, {0.2, 0.2, 0.8}});
  d.symmetrize();
  const Vector t = TruncPrecision3DModel::theta_from_precision(d);
  const TheorySetting st{*model, aux, {model->normalizing_c(t), t}, {0, 1, 0, 1, 0, 1}, 0.5};
  const ExpectationBackend b = mc(200000);
  const AsvarReport ojs = asvar(sandwich_matrices(st, Divergence::optimal_js(), b));
  const Matrix opt = optimal_nc_variance(st, b);
  CHECK(rel(ojs.asvar_nc, opt) < 0.02);
  CHECK(min_eigenvalue(ojs.reduction) >= -1e-8 * norm_frobenius(ojs.reduction));
}

TEST_CASE("singular sandwich is reported") {
  SandwichMatrices sm;
  sm.A = Matrix{{1.0, 0.0}, {0.0, 1.0}};
  sm.G = Matrix::identity(2);
  sm.B = Matrix(2, 2);
  sm.C = Matrix::identity(2);
  sm.lambda1 = 0.5;
  sm.lambda2 = 0.5;
  try {
    asvar(sm);
    FAIL("expected SingularA");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSingularA);
  }
}

TEST_CASE("Wald statistic") {
  const Matrix v{{2.0, 0.3}, {0.3, 1.0}};
  const Alpha a0{0.0, {0.5}};
  CHECK(wald_statistic(a0, a0, v, 100) == 0.0);
  const Alpha a{0.1, {0.45}};
  const double w = wald_statistic(a, a0, v, 100);
  const Vector dlt{0.1, -0.05};
  const Vector sol = cholesky_inverse(v) * std::span<const double>(dlt);
  CHECK(w == doctest::Approx(100.0 * dot(dlt, sol)));
  CHECK(wald_statistic(a, a0, 4.0 * v, 100) == doctest::Approx(w / 4.0));
}

TEST_CASE("pooled empirical H converges to H") {
  Rng rng(12);
  const std::size_t m1 = 100000;
  const std::size_t m2 = 200000;
  SampleSet s{kModel.sample(kTruth, m1, rng), kAux.sample(kClose, m2, rng)};
  const Matrix he = empirical_H(s, kModel, kAux, kTruth, kClose);
  const Matrix h = optimal_H(setting(kClose), quad());
  CHECK(rel(he, h) < 0.02);
}

TEST_CASE("NC minus PL spread matches the reduction term") {
  const TheorySetting st = setting(kClose);
  const AsvarReport r = asvar(sandwich_matrices(st, Divergence::optimal_js(), quad()));
  const std::size_t m1 = 1000;
  const std::size_t m2 = 2000;
  const double m = 3000.0;
  std::vector<double> dc;
  std::vector<double> dt;
  for (int rep = 0; rep < 1000; ++rep) {
    Rng rng(derive_seed(77, rep));
    const SampleSet s{kModel.sample(kTruth, m1, rng), kAux.sample(kClose, m2, rng)};
    const NceProblem p(kModel, kAux, kClose, Divergence::optimal_js(), s);
    const Alpha init = default_init(p, s);
    const FitResult nc = fit_nc(p, init);
    const PluginFit pl = fit_pl(kModel, kAux, Divergence::optimal_js(), s, init);
    dc.push_back(std::sqrt(m) * (nc.alpha_hat.c - pl.fit.alpha_hat.c));
    dt.push_back(std::sqrt(m) * (nc.alpha_hat.theta[0] - pl.fit.alpha_hat.theta[0]));
  }
  CHECK(oracle::variance(dc) == doctest::Approx(r.reduction(0, 0)).epsilon(0.15));
  CHECK(oracle::variance(dt) == doctest::Approx(r.reduction(1, 1)).epsilon(0.15));
}
