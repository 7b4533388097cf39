#include <doctest.h>

#include <cmath>
#include <vector>

#include "nce/divergence.hpp"
#include "nce/error.hpp"
#include "oracles.hpp"

using namespace nce;

namespace {

std::vector<Divergence> menu() {
  return {Divergence::kl(), Divergence::chi_square(), Divergence::jensen_shannon(), Divergence::optimal_js(0.5),
          Divergence::optimal_js(3.0), Divergence::density_power(0.5), Divergence::density_power(2.0)};
}

const std::vector<double> kGrid{0.01, 0.1, 0.5, 1.0, 2.0, 7.5, 40.0};

}  // namespace

TEST_CASE("second derivative and psi agree with finite differences of f") {
  for (const Divergence& d : menu()) {
    CAPTURE(d.name());
    for (double x : kGrid) {
      const double h = 1e-4 * x;
      const double fd = (d.f(x + h) - 2.0 * d.f(x) + d.f(x - h)) / (h * h);
      CHECK(d.second_derivative(x) == doctest::Approx(fd).epsilon(1e-5));
      CHECK(d.psi(x) == doctest::Approx(d.second_derivative(x) * x).epsilon(1e-12));
      CHECK(d.psi_from_log(std::log(x)) == doctest::Approx(d.psi(x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("objective terms are f'(r) and r f'(r) - f(r)") {
  for (const Divergence& d : menu()) {
    CAPTURE(d.name());
    // KL's data term drops f's affine part, a constant shift of f'.
    const double shift = d.kind() == DivergenceKind::kKl ? 1.0 : 0.0;
    for (double r : kGrid) {
      const double fprime = oracle::derivative4([&](double t) { return d.f(t); }, r, 1e-3 * r);
      const TermEval data = d.data_term(std::log(r));
      const TermEval aux = d.aux_term(std::log(r));
      CHECK(data.value + shift == doctest::Approx(fprime).epsilon(1e-7));
      CHECK(aux.value == doctest::Approx(r * fprime - d.f(r)).epsilon(1e-7));
    }
  }
}

TEST_CASE("term weights are derivatives in log r") {
  for (const Divergence& d : menu()) {
    CAPTURE(d.name());
    for (double r : kGrid) {
      const double lr = std::log(r);
      const double dd = oracle::derivative([&](double t) { return d.data_term(t).value; }, lr, 1e-5);
      const double da = oracle::derivative([&](double t) { return d.aux_term(t).value; }, lr, 1e-5);
      CHECK(d.data_term(lr).weight == doctest::Approx(dd).epsilon(1e-7));
      CHECK(d.aux_term(lr).weight == doctest::Approx(da).epsilon(1e-7));
      // psi and r psi.
      CHECK(d.data_term(lr).weight == doctest::Approx(d.psi(r)).epsilon(1e-12));
      CHECK(d.aux_term(lr).weight == doctest::Approx(r * d.psi(r)).epsilon(1e-12));
    }
  }
}

TEST_CASE("log-space terms stay finite for extreme ratios") {
  for (const Divergence& d : {Divergence::jensen_shannon(), Divergence::optimal_js(0.5), Divergence::kl()}) {
    CHECK(std::isfinite(d.data_term(-700.0).value));
    CHECK(std::isfinite(d.data_term(600.0).value));
    CHECK(std::isfinite(d.aux_term(-700.0).value));
  }
  CHECK(Divergence::optimal_js(0.5).data_term(-800.0).value == doctest::Approx(-800.0));
}

TEST_CASE("optimal JS at nu = 1 is JS and tends to KL as nu -> 0") {
  const Divergence ojs1 = Divergence::optimal_js(1.0);
  const Divergence js = Divergence::jensen_shannon();
  for (double x : kGrid) {
    CHECK(ojs1.f(x) == doctest::Approx(js.f(x)).epsilon(1e-13));
    CHECK(ojs1.psi(x) == doctest::Approx(js.psi(x)).epsilon(1e-13));
  }
  const Divergence tiny = Divergence::optimal_js(1e-8);
  for (double x = 0.05; x <= 10.0; x += 0.05) {
    CHECK(std::abs(tiny.second_derivative(x) - 1.0 / x) <= 1e-6);
  }
}

TEST_CASE("optimal JS psi is 1 / (1 + nu r)") {
  const Divergence d = Divergence::optimal_js(0.5);
  for (double r : kGrid) CHECK(d.psi(r) == doctest::Approx(1.0 / (1.0 + 0.5 * r)).epsilon(1e-13));
}

TEST_CASE("robustness flags") {
  CHECK(Divergence::chi_square().is_robust(1e6));
  CHECK(Divergence::density_power(1.0).is_robust(1e6));
  CHECK(Divergence::density_power(2.5).is_robust(1e6));
  CHECK_FALSE(Divergence::density_power(0.5).is_robust(1e6));
  CHECK_FALSE(Divergence::kl().is_robust(1e6));
  CHECK_FALSE(Divergence::jensen_shannon().is_robust(1e6));
  CHECK_FALSE(Divergence::optimal_js(0.5).is_robust(1e6));
}

TEST_CASE("parsing names") {
  CHECK(Divergence::parse("kl").kind() == DivergenceKind::kKl);
  CHECK(Divergence::parse("chi2").kind() == DivergenceKind::kChiSquare);
  CHECK(Divergence::parse("js").kind() == DivergenceKind::kJensenShannon);
  CHECK(Divergence::parse("ojs").needs_ratio());
  CHECK(Divergence::parse("ojs:0.25").parameter() == 0.25);
  CHECK(Divergence::parse("dpow:1.5").parameter() == 1.5);
  CHECK(Divergence::parse("ojs").bind_ratio(2.0).parameter() == 2.0);
  for (const char* bad : {"", "KLD", "dpow:", "dpow:-1", "dpow:abc", "ojs:0", "ojs:x", "chi"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(Divergence::parse(bad), Error);
  }
  for (const Divergence& d : menu()) CHECK(Divergence::parse(d.name()).name() == d.name());
}

TEST_CASE("domain errors") {
  CHECK_THROWS_AS(Divergence::kl().f(0.0), Error);
  CHECK_THROWS_AS(Divergence::kl().psi(-1.0), Error);
  CHECK_THROWS_AS(Divergence::optimal_js().f(1.0), Error);
}
