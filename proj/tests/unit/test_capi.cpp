#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <string>

#include "nce/nce.h"

using nlohmann::json;

namespace {

const char* kConfig = R"({"model": {"kind": "gauss1d", "true_theta": [0.5]},
  "aux": {"kind": "gauss_mean_var_1d", "beta": [0.2, 1.2]}, "m1": 500, "m2": 1000})";

}  // namespace

TEST_CASE("status strings and version") {
  CHECK(std::string(nce_status_string(NCE_OK)) == "ok");
  for (int s = 0; s <= NCE_ERR_INTERNAL; ++s) CHECK(std::strlen(nce_status_string(static_cast<nce_status>(s))) > 0);
  CHECK(std::strlen(nce_version()) > 0);
}

TEST_CASE("config parsing reports errors through status codes") {
  nce_config* cfg = nullptr;
  CHECK(nce_config_parse("{", &cfg) == NCE_ERR_CONFIG);
  CHECK(cfg == nullptr);
  CHECK(std::strlen(nce_last_error()) > 0);
  CHECK(nce_config_parse(nullptr, &cfg) == NCE_ERR_INVALID_ARGUMENT);
  CHECK(nce_config_load("/nonexistent/file.json", &cfg) != NCE_OK);
  REQUIRE(nce_config_parse(kConfig, &cfg) == NCE_OK);
  const json resolved = json::parse(nce_config_resolved_json(cfg));
  CHECK(resolved["model"]["true_alpha"][0].get<double>() == doctest::Approx(-0.9189385332046727));
  nce_config_free(cfg);
}

TEST_CASE("fit through the C API is reproducible") {
  nce_config* cfg = nullptr;
  REQUIRE(nce_config_parse(kConfig, &cfg) == NCE_OK);
  nce_fit_options o;
  nce_fit_options_init(&o);
  o.has_seed = 1;
  o.seed = 7;
  nce_result* a = nullptr;
  nce_result* b = nullptr;
  REQUIRE(nce_fit(cfg, &o, &a) == NCE_OK);
  REQUIRE(nce_fit(cfg, &o, &b) == NCE_OK);
  CHECK(std::string(nce_result_json(a)) == nce_result_json(b));
  const json doc = json::parse(nce_result_json(a));
  CHECK(doc["converged"].get<bool>());
  CHECK(doc["m1"] == 500);
  CHECK(std::abs(doc["alpha_hat"]["theta"][0].get<double>() - 0.5) < 0.15);
  CHECK_FALSE(doc.contains("beta_hat"));
  nce_result_free(a);
  nce_result_free(b);

  o.plugin = 1;
  o.divergence = "kl";
  REQUIRE(nce_fit(cfg, &o, &a) == NCE_OK);
  CHECK(json::parse(nce_result_json(a)).contains("beta_hat"));
  nce_result_free(a);

  o.divergence = "bogus";
  CHECK(nce_fit(cfg, &o, &a) == NCE_ERR_INVALID_ARGUMENT);
  CHECK(a == nullptr);
  CHECK(nce_fit(nullptr, &o, &a) == NCE_ERR_INVALID_ARGUMENT);
  nce_config_free(cfg);
}

TEST_CASE("asvar and validate") {
  nce_config* cfg = nullptr;
  REQUIRE(nce_config_parse(kConfig, &cfg) == NCE_OK);
  nce_asvar_options o;
  nce_asvar_options_init(&o);
  o.divergence = "ojs";
  nce_result* r = nullptr;
  REQUIRE(nce_asvar(cfg, &o, &r) == NCE_OK);
  const json doc = json::parse(nce_result_json(r));
  CHECK(doc["asvar_nc"][0][0].get<double>() == doctest::Approx(2.343).epsilon(1e-3));
  CHECK(doc["asvar_nc"][1][1].get<double>() == doctest::Approx(2.083).epsilon(1e-3));
  CHECK(doc["lambda1"].get<double>() == doctest::Approx(1.0 / 3.0));
  CHECK(doc.contains("identities"));
  nce_result_free(r);

  o.scaled_by = "m1";
  REQUIRE(nce_asvar(cfg, &o, &r) == NCE_OK);
  CHECK(json::parse(nce_result_json(r))["asvar_nc"][1][1].get<double>() == doctest::Approx(2.083 / 3).epsilon(1e-3));
  nce_result_free(r);
  o.scaled_by = "x";
  CHECK(nce_asvar(cfg, &o, &r) == NCE_ERR_INVALID_ARGUMENT);

  nce_asvar_options_init(&o);
  REQUIRE(nce_validate(cfg, &o, &r) == NCE_OK);
  CHECK(json::parse(nce_result_json(r))["all_within_tolerance"].get<bool>());
  nce_result_free(r);
  nce_config_free(cfg);
}

TEST_CASE("divergence handles") {
  nce_divergence* d = nullptr;
  REQUIRE(nce_divergence_parse("ojs:0.5", &d) == NCE_OK);
  double f = 0.0;
  double fpp = 0.0;
  double psi = 0.0;
  REQUIRE(nce_divergence_eval(d, 2.0, &f, &fpp, &psi) == NCE_OK);
  CHECK(psi == doctest::Approx(0.5));
  CHECK(fpp == doctest::Approx(0.25));
  CHECK(nce_divergence_eval(d, -1.0, &f, nullptr, nullptr) == NCE_ERR_DOMAIN);
  int robust = 1;
  REQUIRE(nce_divergence_is_robust(d, 100.0, &robust) == NCE_OK);
  CHECK(robust == 0);
  nce_divergence_free(d);
  REQUIRE(nce_divergence_parse("chi2", &d) == NCE_OK);
  REQUIRE(nce_divergence_is_robust(d, 100.0, &robust) == NCE_OK);
  CHECK(robust == 1);
  nce_divergence_free(d);
  CHECK(nce_divergence_parse("nope", &d) == NCE_ERR_INVALID_ARGUMENT);
}

TEST_CASE("experiment on a missing plan") {
  nce_result* r = nullptr;
  CHECK(nce_experiment("/nonexistent/plan.json", nullptr, &r) == NCE_ERR_IO);
  CHECK(r == nullptr);
}
