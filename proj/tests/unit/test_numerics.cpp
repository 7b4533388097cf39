#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "nce/error.hpp"
#include "nce/matrix.hpp"
#include "nce/parallel.hpp"
#include "nce/rng.hpp"
#include "nce/special.hpp"
#include "oracles.hpp"

using namespace nce;

TEST_CASE("matrix products and transpose") {
  const Matrix a{{1, 2, 3}, {4, 5, 6}};
  const Matrix b{{1, 0}, {0, 1}, {1, 1}};
  const Matrix c = a * b;
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 2);
  CHECK(c(0, 0) == 4);
  CHECK(c(0, 1) == 5);
  CHECK(c(1, 0) == 10);
  CHECK(c(1, 1) == 11);
  CHECK(a.transpose()(2, 1) == 6);
  const Vector x{1.0, -1.0, 2.0};
  const Vector y = a * std::span<const double>(x);
  CHECK(y[0] == 5);
  CHECK(y[1] == 11);
}

TEST_CASE("cholesky reproduces the matrix and its inverse") {
  const Matrix m{{4, 2, 0.6}, {2, 3, 0.4}, {0.6, 0.4, 2}};
  const Matrix l = cholesky(m);
  CHECK(max_abs(l * l.transpose() - m) < 1e-14);
  CHECK(l(0, 1) == 0.0);
  const Matrix inv = cholesky_inverse(m);
  CHECK(max_abs(inv * m - Matrix::identity(3)) < 1e-13);
  const Vector b{1.0, 2.0, 3.0};
  const Vector x = cholesky_solve(m, b);
  const Vector back = m * std::span<const double>(x);
  for (int i = 0; i < 3; ++i) CHECK(back[i] == doctest::Approx(b[i]).epsilon(1e-13));
}

TEST_CASE("cholesky rejects indefinite matrices") {
  const Matrix m{{1, 2}, {2, 1}};
  try {
    cholesky(m);
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNotPositiveDefinite);
  }
}

TEST_CASE("symmetric eigenvalues match the characteristic polynomial") {
  // 2x2: roots of t^2 - tr t + det.
  const Matrix m2{{2.0, 0.7}, {0.7, -1.0}};
  const double tr = 1.0;
  const double det = -2.0 - 0.49;
  const double disc = std::sqrt(tr * tr - 4 * det);
  const Vector ev2 = symmetric_eigenvalues(m2);
  CHECK(ev2[0] == doctest::Approx((tr - disc) / 2).epsilon(1e-13));
  CHECK(ev2[1] == doctest::Approx((tr + disc) / 2).epsilon(1e-13));

  // 3x3: every eigenvalue is a root of det(M - t I).
  const Matrix m3{{0.8, 0.2, 0.2}, {0.2, 0.8, 0.2}, {0.2, 0.2, 0.8}};
  const Vector ev3 = symmetric_eigenvalues(m3);
  REQUIRE(ev3.size() == 3);
  CHECK(ev3[0] == doctest::Approx(0.6));
  CHECK(ev3[1] == doctest::Approx(0.6));
  CHECK(ev3[2] == doctest::Approx(1.2));
  const Matrix m4{{3, 1, -0.5}, {1, 2, 0.3}, {-0.5, 0.3, -1}};
  for (double t : symmetric_eigenvalues(m4)) {
    const Matrix s = m4 - t * Matrix::identity(3);
    const double d = s(0, 0) * (s(1, 1) * s(2, 2) - s(1, 2) * s(2, 1)) -
                     s(0, 1) * (s(1, 0) * s(2, 2) - s(1, 2) * s(2, 0)) +
                     s(0, 2) * (s(1, 0) * s(2, 1) - s(1, 1) * s(2, 0));
    CHECK(std::abs(d) < 1e-11);
  }
  CHECK(min_eigenvalue(m4) == doctest::Approx(symmetric_eigenvalues(m4)[0]));
}

TEST_CASE("rng is a pure function of the seed") {
  Rng a(42);
  Rng b(42);
  Rng c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
}

TEST_CASE("rng normal and uniform moments") {
  Rng rng(7);
  std::vector<double> z;
  std::vector<double> u;
  for (int i = 0; i < 200000; ++i) {
    z.push_back(rng.std_normal());
    u.push_back(rng.uniform());
  }
  // 5 standard errors.
  CHECK(std::abs(oracle::mean(z)) < 5.0 / std::sqrt(2e5));
  CHECK(std::abs(oracle::variance(z) - 1.0) < 5.0 * std::sqrt(2.0 / 2e5));
  CHECK(std::abs(oracle::mean(u) - 0.5) < 5.0 * std::sqrt(1.0 / 12 / 2e5));
  for (double v : u) {
    REQUIRE(v > 0.0);
    REQUIRE(v < 1.0);
  }
}

TEST_CASE("normal distribution functions") {
  CHECK(std_normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(std_normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
  CHECK(std_normal_sf(-1.0) == doctest::Approx(std_normal_cdf(1.0)));
  CHECK(std_normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(std_normal_quantile(std_normal_cdf(-3.3)) == doctest::Approx(-3.3).epsilon(1e-10));
  CHECK(std_normal_log_pdf(0.3) == doctest::Approx(std::log(std_normal_pdf(0.3))));
  // The log survival function is continuous across the series switch and
  // matches the direct value where that is still accurate.
  for (double x : {-5.0, 0.0, 3.0, 8.0, 20.0, 30.0}) {
    CHECK(std_normal_log_sf(x) == doctest::Approx(std::log(0.5 * std::erfc(x / std::numbers::sqrt2))).epsilon(1e-9));
  }
  for (double x = 5.0; x < 60.0; x += 0.37) {
    const double step = std_normal_log_sf(x + 1e-6) - std_normal_log_sf(x);
    CHECK(step < 0.0);
    CHECK(step / 1e-6 == doctest::Approx(-std_normal_hazard(x)).epsilon(1e-4));
  }
  // Hazard = pdf / sf by the oracle integral of the tail.
  const double tail = oracle::integrate([](double t) { return oracle::normal_pdf(t, 0, 1); }, 1.5, 15.0);
  CHECK(std_normal_hazard(1.5) == doctest::Approx(std_normal_pdf(1.5) / tail).epsilon(1e-9));
}

TEST_CASE("chi-squared quantiles") {
  CHECK(chi_squared_quantile(0.95, 1) == doctest::Approx(3.841458820694124).epsilon(1e-10));
  CHECK(chi_squared_quantile(0.95, 2) == doctest::Approx(-2.0 * std::log(0.05)).epsilon(1e-12));
}

TEST_CASE("simpson and gauss-legendre integrate polynomials exactly") {
  CHECK(simpson([](double x) { return x * x * x - x; }, -1.0, 2.0, 4) == doctest::Approx(2.25));
  const QuadratureRule r = gauss_legendre(10, 0.0, 2.0);
  double s = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * std::pow(r.nodes[i], 19);
  CHECK(s == doctest::Approx(std::pow(2.0, 20) / 20).epsilon(1e-13));
  const QuadratureRule c = composite_gauss_legendre(10, 7, -3.0, 4.0);
  CHECK(c.nodes.size() == 70);
  double g = 0.0;
  for (std::size_t i = 0; i < c.nodes.size(); ++i) g += c.weights[i] * std::exp(-c.nodes[i] * c.nodes[i]);
  const double ref = oracle::integrate([](double x) { return std::exp(-x * x); }, -3.0, 4.0);
  CHECK(g == doctest::Approx(ref).epsilon(1e-11));
}

TEST_CASE("parallel_for visits every index once and rethrows") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 5) throw Error(ErrorCode::kDomain, "boom");
                  }),
                  Error);
}
