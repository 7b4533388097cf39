#include "nce/nce.h"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <string>

#include "nce/config.hpp"
#include "nce/error.hpp"
#include "nce/estimator.hpp"
#include "nce/harness.hpp"
#include "nce/inference.hpp"
#include "nce/report.hpp"

struct nce_result {
  std::string text;
};

struct nce_config {
  nce::RunConfig config;
  std::string resolved;
};

struct nce_divergence {
  nce::Divergence divergence;
};

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

nce_status status_of(nce::ErrorCode code) {
  using nce::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidArgument: return NCE_ERR_INVALID_ARGUMENT;
    case ErrorCode::kConfig: return NCE_ERR_CONFIG;
    case ErrorCode::kDomain: return NCE_ERR_DOMAIN;
    case ErrorCode::kOutOfSupport: return NCE_ERR_OUT_OF_SUPPORT;
    case ErrorCode::kNotPositiveDefinite: return NCE_ERR_NOT_POSITIVE_DEFINITE;
    case ErrorCode::kSingularA: return NCE_ERR_SINGULAR_A;
    case ErrorCode::kSingularH: return NCE_ERR_SINGULAR_H;
    case ErrorCode::kSingularOmega: return NCE_ERR_SINGULAR_OMEGA;
    case ErrorCode::kNonFiniteObjective: return NCE_ERR_NON_FINITE_OBJECTIVE;
    case ErrorCode::kNonFiniteGradient: return NCE_ERR_NON_FINITE_GRADIENT;
    case ErrorCode::kDidNotConverge: return NCE_ERR_DID_NOT_CONVERGE;
    case ErrorCode::kLineSearchFailed: return NCE_ERR_LINE_SEARCH_FAILED;
    case ErrorCode::kMleDiverged: return NCE_ERR_MLE_DIVERGED;
    case ErrorCode::kRejectionStall: return NCE_ERR_REJECTION_STALL;
    case ErrorCode::kIo: return NCE_ERR_IO;
  }
  return NCE_ERR_INTERNAL;
}

// Runs fn, translating exceptions into a status and the thread's message.
template <typename Fn>
nce_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const nce::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NCE_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return NCE_ERR_INTERNAL;
  }
}

nce_status null_argument(const char* what) {
  g_last_error = std::string(what) + " must not be NULL";
  return NCE_ERR_INVALID_ARGUMENT;
}

json real_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json matrix_json(const nce::Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(real_or_null(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

json alpha_json(const nce::Alpha& a) { return {{"c", a.c}, {"theta", a.theta}}; }

nce_result* make_result(const json& doc) { return new nce_result{doc.dump(2) + "\n"}; }

std::string default_divergence(const nce::RunConfig& cfg, const char* given) {
  if (given && *given) return given;
  return cfg.divergence.value_or("ojs");
}

double resolve_lambda1(const nce::RunConfig& cfg, double given) {
  if (given > 0.0) return given;
  if (cfg.lambda1) return *cfg.lambda1;
  if (cfg.m1 && cfg.m2 && *cfg.m1 + *cfg.m2 > 0) {
    return static_cast<double>(*cfg.m1) / static_cast<double>(*cfg.m1 + *cfg.m2);
  }
  return 0.5;
}

bool quadrature_capable(const nce::ProblemSetup& st) {
  return st.model->kind() == nce::ModelKind::kGauss1D && st.aux->kind() == nce::AuxKind::kGaussMeanVar1D;
}

nce::ExpectationBackend make_backend(const nce::ProblemSetup& st, const nce_asvar_options& o) {
  nce::ExpectationBackend b;
  const std::string kind = o.backend ? o.backend : (quadrature_capable(st) ? "quad" : "mc");
  if (kind == "quad") {
    b.kind = nce::BackendKind::kQuadrature;
  } else if (kind == "mc") {
    b.kind = nce::BackendKind::kMonteCarlo;
  } else {
    throw nce::Error(nce::ErrorCode::kInvalidArgument, "backend must be quad or mc");
  }
  b.draws = o.draws;
  b.seed = o.seed;
  b.workers = o.workers == 0 ? 1 : o.workers;
  return b;
}

json identities_json(const nce::IdentityReport& rep) {
  json checks = json::array();
  for (const auto& c : rep.checks) {
    checks.push_back({{"name", c.name},
                      {"relative_residual", c.relative_residual},
                      {"lhs", matrix_json(c.lhs)},
                      {"rhs", matrix_json(c.rhs)}});
  }
  return {{"checks", checks}, {"max_residual", rep.max_residual}, {"all_within_tolerance", rep.max_residual <= 1e-4}};
}

}  // namespace

extern "C" {

const char* nce_status_string(nce_status status) {
  switch (status) {
    case NCE_OK: return "ok";
    case NCE_ERR_INVALID_ARGUMENT: return "invalid argument";
    case NCE_ERR_CONFIG: return "config error";
    case NCE_ERR_DOMAIN: return "domain error";
    case NCE_ERR_OUT_OF_SUPPORT: return "point out of support";
    case NCE_ERR_NOT_POSITIVE_DEFINITE: return "matrix not positive definite";
    case NCE_ERR_SINGULAR_A: return "singular A";
    case NCE_ERR_SINGULAR_H: return "singular H";
    case NCE_ERR_SINGULAR_OMEGA: return "singular E[Omega]";
    case NCE_ERR_NON_FINITE_OBJECTIVE: return "non-finite objective";
    case NCE_ERR_NON_FINITE_GRADIENT: return "non-finite gradient";
    case NCE_ERR_DID_NOT_CONVERGE: return "did not converge";
    case NCE_ERR_LINE_SEARCH_FAILED: return "line search failed";
    case NCE_ERR_MLE_DIVERGED: return "auxiliary MLE diverged";
    case NCE_ERR_REJECTION_STALL: return "rejection sampler stalled";
    case NCE_ERR_IO: return "i/o error";
    case NCE_PARTIAL_FAILURE: return "partial failure";
    case NCE_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* nce_last_error(void) { return g_last_error.c_str(); }

const char* nce_version(void) { return "0.1.0"; }

const char* nce_result_json(const nce_result* result) { return result ? result->text.c_str() : ""; }

void nce_result_free(nce_result* result) { delete result; }

nce_status nce_config_parse(const char* json_text, nce_config** out) {
  if (!json_text) return null_argument("json_text");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    auto cfg = std::make_unique<nce_config>();
    cfg->config = nce::parse_run_config(json_text);
    cfg->resolved = nce::resolved_config_json(cfg->config);
    *out = cfg.release();
    return NCE_OK;
  });
}

nce_status nce_config_load(const char* path, nce_config** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  *out = nullptr;
  std::string text;
  const nce_status st = guarded([&] {
    text = nce::read_text_file(path);
    return NCE_OK;
  });
  if (st != NCE_OK) return st;
  return nce_config_parse(text.c_str(), out);
}

const char* nce_config_resolved_json(const nce_config* config) { return config ? config->resolved.c_str() : ""; }

void nce_config_free(nce_config* config) { delete config; }

void nce_fit_options_init(nce_fit_options* options) {
  if (!options) return;
  *options = nce_fit_options{nullptr, 0, 0, 0, 0, 0};
}

nce_status nce_fit(const nce_config* config, const nce_fit_options* options, nce_result** out) {
  if (!config) return null_argument("config");
  if (!out) return null_argument("out");
  *out = nullptr;
  nce_fit_options opts;
  nce_fit_options_init(&opts);
  if (options) opts = *options;
  return guarded([&] {
    const nce::RunConfig& cfg = config->config;
    const nce::ProblemSetup& st = cfg.setup;
    const std::string div_name = default_divergence(cfg, opts.divergence);
    const nce::Divergence div = nce::Divergence::parse(div_name);
    const std::size_t m1 = opts.m1 ? opts.m1 : cfg.m1.value_or(1000);
    const std::size_t m2 = opts.m2 ? opts.m2 : cfg.m2.value_or(1000);
    const std::uint64_t seed = opts.has_seed ? opts.seed : cfg.seed.value_or(1);
    if (m1 < 2 || m2 < 2) throw nce::Error(nce::ErrorCode::kInvalidArgument, "m1 and m2 must be at least 2");

    nce::Rng rng(seed);
    const nce::SampleSet sample{st.model->sample(st.truth, m1, rng), st.aux->sample(st.beta, m2, rng)};
    json doc{{"divergence", div_name}, {"plugin", opts.plugin != 0}, {"seed", seed}, {"m1", m1}, {"m2", m2}};
    nce::FitResult fit;
    if (opts.plugin) {
      const nce::PluginFit pf = nce::fit_pl(*st.model, *st.aux, div, sample);
      fit = pf.fit;
      doc["beta_hat"] = pf.beta_hat;
    } else {
      const nce::NceProblem problem(*st.model, *st.aux, st.beta, div, sample);
      fit = nce::fit_default(problem, sample);
    }
    doc["alpha_hat"] = alpha_json(fit.alpha_hat);
    doc["true_alpha"] = alpha_json(st.truth);
    doc["objective"] = real_or_null(fit.objective_value);
    doc["gradient_norm"] = real_or_null(fit.gradient_norm);
    doc["iterations"] = fit.iterations;
    doc["converged"] = fit.converged;
    *out = make_result(doc);
    return NCE_OK;
  });
}

void nce_asvar_options_init(nce_asvar_options* options) {
  if (!options) return;
  *options = nce_asvar_options{nullptr, 0.0, nullptr, 1000000, 1, 1, "m"};
}

nce_status nce_asvar(const nce_config* config, const nce_asvar_options* options, nce_result** out) {
  if (!config) return null_argument("config");
  if (!out) return null_argument("out");
  *out = nullptr;
  nce_asvar_options opts;
  nce_asvar_options_init(&opts);
  if (options) opts = *options;
  return guarded([&] {
    const nce::RunConfig& cfg = config->config;
    const nce::ProblemSetup& st = cfg.setup;
    const std::string div_name = default_divergence(cfg, opts.divergence);
    const nce::Divergence div = nce::Divergence::parse(div_name);
    const double lambda1 = resolve_lambda1(cfg, opts.lambda1);
    const std::string scaled = opts.scaled_by ? opts.scaled_by : "m";
    if (scaled != "m" && scaled != "m1") throw nce::Error(nce::ErrorCode::kInvalidArgument, "scaled_by must be m or m1");
    const nce::Scaling scaling = scaled == "m1" ? nce::Scaling::kM1 : nce::Scaling::kM;
    const double factor = scaled == "m1" ? lambda1 : 1.0;
    const nce::ExpectationBackend backend = make_backend(st, opts);
    const nce::TheorySetting setting{*st.model, *st.aux, st.truth, st.beta, lambda1};

    const nce::SandwichMatrices sm = nce::sandwich_matrices(setting, div, backend);
    const nce::AsvarReport rep = nce::asvar(sm, scaling);
    const nce::Matrix optimal = factor * nce::optimal_nc_variance(setting, backend);
    const nce::Matrix bound = factor * nce::pl_lower_bound(setting, backend);
    json doc{{"divergence", div_name},
             {"lambda1", lambda1},
             {"backend", backend.kind == nce::BackendKind::kQuadrature ? "quad" : "mc"},
             {"scaled_by", scaled},
             {"A", matrix_json(sm.A)},
             {"B", matrix_json(sm.B)},
             {"C", matrix_json(sm.C)},
             {"G", matrix_json(sm.G)},
             {"asvar_nc", matrix_json(rep.asvar_nc)},
             {"asvar_pl", matrix_json(rep.asvar_pl)},
             {"reduction", matrix_json(rep.reduction)},
             {"optimal_nc_variance", matrix_json(optimal)},
             {"pl_lower_bound", matrix_json(bound)},
             {"eigen",
              {{"reduction_min", nce::min_eigenvalue(rep.reduction)},
               {"asvar_nc_minus_optimal_min", nce::min_eigenvalue(rep.asvar_nc - optimal)},
               {"asvar_pl_minus_bound_min", nce::min_eigenvalue(rep.asvar_pl - bound)},
               {"minus_A_min", nce::min_eigenvalue(-1.0 * sm.A)}}}};
    if (backend.kind == nce::BackendKind::kQuadrature) {
      doc["identities"] = identities_json(nce::variance_identities(setting, backend));
    }
    *out = make_result(doc);
    return NCE_OK;
  });
}

nce_status nce_validate(const nce_config* config, const nce_asvar_options* options, nce_result** out) {
  if (!config) return null_argument("config");
  if (!out) return null_argument("out");
  *out = nullptr;
  nce_asvar_options opts;
  nce_asvar_options_init(&opts);
  if (options) opts = *options;
  return guarded([&] {
    const nce::RunConfig& cfg = config->config;
    const nce::ProblemSetup& st = cfg.setup;
    const double lambda1 = resolve_lambda1(cfg, opts.lambda1);
    const nce::ExpectationBackend backend = make_backend(st, opts);
    const nce::TheorySetting setting{*st.model, *st.aux, st.truth, st.beta, lambda1};
    json doc = identities_json(nce::variance_identities(setting, backend));
    doc["lambda1"] = lambda1;
    doc["backend"] = backend.kind == nce::BackendKind::kQuadrature ? "quad" : "mc";
    *out = make_result(doc);
    return NCE_OK;
  });
}

void nce_experiment_options_init(nce_experiment_options* options) {
  if (!options) return;
  *options = nce_experiment_options{0, 0, nullptr, "csv"};
}

nce_status nce_experiment(const char* plan_path, const nce_experiment_options* options, nce_result** out) {
  if (!plan_path) return null_argument("plan_path");
  if (!out) return null_argument("out");
  *out = nullptr;
  nce_experiment_options opts;
  nce_experiment_options_init(&opts);
  if (options) opts = *options;
  return guarded([&] {
    const std::filesystem::path path(plan_path);
    nce::ExperimentPlan plan = nce::parse_plan(nce::read_text_file(path), path.parent_path(), opts.full != 0);
    if (opts.workers > 0) plan.workers = opts.workers;
    const std::string format = opts.format ? opts.format : "csv";
    if (format != "csv" && format != "json" && format != "svg") {
      throw nce::Error(nce::ErrorCode::kInvalidArgument, "format must be csv, json or svg");
    }
    std::filesystem::path dir;
    if (opts.out_dir) {
      dir = opts.out_dir;
      std::error_code ec;
      std::filesystem::create_directories(dir, ec);
      if (ec) throw nce::Error(nce::ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
      nce::write_text_file(dir / "resolved_plan.json", nce::resolved_plan_json(plan));
    }

    json doc{{"name", plan.name}, {"type", nce::plan_type_name(plan.type)}};
    json files = json::array();
    bool partial = false;
    if (plan.type == nce::PlanType::kVarianceValidation || plan.type == nce::PlanType::kWald) {
      const std::size_t m = plan.sample_sizes.front();
      std::string text;
      if (plan.type == nce::PlanType::kVarianceValidation) {
        const nce::VarianceValidation rec = nce::run_variance_validation(plan, m, plan.replications);
        text = nce::to_json(rec);
        partial = rec.n_used == 0;
      } else {
        const nce::WaldCalibration rec = nce::run_wald_calibration(plan, m, plan.replications);
        text = nce::to_json(rec);
        partial = rec.n_used == 0;
      }
      doc["record"] = json::parse(text);
      if (!dir.empty()) {
        nce::write_text_file(dir / (plan.name + ".json"), text);
        files.push_back((dir / (plan.name + ".json")).string());
      }
    } else {
      const nce::MseTable table = nce::run_mse_sweep(plan);
      partial = table.any_cell_fully_excluded();
      doc["table"] = json::parse(nce::to_json(table));
      json checks = json::array();
      for (const auto& c : nce::reduction_checks(plan)) {
        checks.push_back({{"divergence", c.method},
                          {"lambda1", c.lambda1},
                          {"min_eigenvalue", c.min_eigenvalue},
                          {"norm", c.norm}});
      }
      doc["reduction_checks"] = checks;
      if (!dir.empty()) {
        if (format == "csv") {
          nce::write_text_file(dir / (plan.name + ".csv"), nce::to_csv(table));
          files.push_back((dir / (plan.name + ".csv")).string());
        } else if (format == "json") {
          nce::write_text_file(dir / (plan.name + ".json"), nce::to_json(table));
          files.push_back((dir / (plan.name + ".json")).string());
        } else {
          for (const std::string& comp : table.components) {
            const auto file = dir / (plan.name + "_" + comp + ".svg");
            nce::write_text_file(file, nce::to_svg(table, comp));
            files.push_back(file.string());
          }
        }
      }
    }
    doc["files"] = files;
    doc["partial_failure"] = partial;
    *out = make_result(doc);
    if (partial) {
      g_last_error = "at least one cell had no usable replication";
      return NCE_PARTIAL_FAILURE;
    }
    return NCE_OK;
  });
}

nce_status nce_divergence_parse(const char* name, nce_divergence** out) {
  if (!name) return null_argument("name");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    *out = new nce_divergence{nce::Divergence::parse(name)};
    return NCE_OK;
  });
}

nce_status nce_divergence_eval(const nce_divergence* d, double x, double* f, double* fpp, double* psi) {
  if (!d) return null_argument("divergence");
  return guarded([&] {
    const double v = d->divergence.f(x);
    const double s = d->divergence.second_derivative(x);
    const double p = d->divergence.psi(x);
    if (f) *f = v;
    if (fpp) *fpp = s;
    if (psi) *psi = p;
    return NCE_OK;
  });
}

nce_status nce_divergence_is_robust(const nce_divergence* d, double bound, int* robust) {
  if (!d) return null_argument("divergence");
  if (!robust) return null_argument("robust");
  return guarded([&] {
    *robust = d->divergence.is_robust(bound) ? 1 : 0;
    return NCE_OK;
  });
}

void nce_divergence_free(nce_divergence* d) { delete d; }

}  // extern "C"
