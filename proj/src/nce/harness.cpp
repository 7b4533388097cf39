#include "nce/harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

#include "nce/error.hpp"
#include "nce/parallel.hpp"
#include "nce/special.hpp"

namespace nce {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string lower_case(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return s;
}

Divergence divergence_from_label(const std::string& base) {
  const std::string lc = lower_case(base);
  if (lc == "ojs") return Divergence::optimal_js();
  if (lc == "js") return Divergence::jensen_shannon();
  if (lc == "kl") return Divergence::kl();
  if (lc == "chi" || lc == "chi2") return Divergence::chi_square();
  if (lc.starts_with("dpow:")) return Divergence::parse(lc);
  throw Error(ErrorCode::kConfig, "unknown method label '" + base + "'");
}

SampleSet draw_sample(const ExperimentPlan& plan, std::size_t m, std::size_t rep) {
  const auto [m1, m2] = plan.split(m);
  Rng rng(derive_seed(plan.base_seed, m, rep));
  SampleSet s{plan.setup.model->sample(plan.setup.truth, m1, rng), plan.setup.aux->sample(plan.setup.beta, m2, rng)};
  if (plan.contamination) {
    for (std::size_t i = 0; i < plan.contamination->count; ++i) s.x.push_back(plan.contamination->value);
  }
  return s;
}

// Fits one method; nullopt when the fit fails or does not converge.
std::optional<Alpha> fit_method(const ExperimentPlan& plan, const MethodSpec& method, const SampleSet& sample) {
  const ProblemSetup& st = plan.setup;
  try {
    FitResult fit;
    if (method.plugin) {
      fit = fit_pl(*st.model, *st.aux, method.divergence, sample).fit;
    } else {
      const NceProblem problem(*st.model, *st.aux, st.beta, method.divergence, sample);
      fit = fit_default(problem, sample);
    }
    if (!fit.converged) return std::nullopt;
    return fit.alpha_hat;
  } catch (const Error&) {
    return std::nullopt;
  }
}

struct CellStats {
  double mean = kNaN;
  double std_error = kNaN;
  std::size_t used = 0;
};

CellStats summarize(std::span<const double> values) {
  CellStats st;
  double sum = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) {
      sum += v;
      ++st.used;
    }
  }
  if (st.used == 0) return st;
  st.mean = sum / static_cast<double>(st.used);
  if (st.used == 1) {
    st.std_error = std::numeric_limits<double>::infinity();
    return st;
  }
  double ss = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) ss += (v - st.mean) * (v - st.mean);
  }
  st.std_error = std::sqrt(ss / static_cast<double>(st.used - 1) / static_cast<double>(st.used));
  return st;
}

}  // namespace

MethodSpec MethodSpec::parse(const std::string& label) {
  const bool plugin = label.size() > 1 && (label[0] == 'P' || label[0] == 'p');
  const std::string base = plugin ? label.substr(1) : label;
  return {label, divergence_from_label(base), plugin};
}

std::pair<std::size_t, std::size_t> ExperimentPlan::split(std::size_t m) const {
  const auto m1 = static_cast<std::size_t>(std::llround(static_cast<double>(m) * ratio1 / (ratio1 + ratio2)));
  return {m1, m - m1};
}

void ExperimentPlan::validate() const {
  if (!setup.model || !setup.aux) throw Error(ErrorCode::kConfig, "plan has no model or auxiliary family");
  if (methods.empty()) throw Error(ErrorCode::kConfig, "plan lists no divergences");
  if (sample_sizes.empty()) throw Error(ErrorCode::kConfig, "plan lists no sample sizes");
  if (replications < 1) throw Error(ErrorCode::kConfig, "replications must be at least 1");
  if (!(ratio1 > 0.0 && ratio2 > 0.0)) throw Error(ErrorCode::kConfig, "ratio entries must be positive");
  for (std::size_t m : sample_sizes) {
    const auto [m1, m2] = split(m);
    if (m1 < 2 || m2 < 2) throw Error(ErrorCode::kConfig, "sample size too small for the m1:m2 ratio");
  }
  if (contamination) {
    if (contamination->value.size() != setup.model->dim()) {
      throw Error(ErrorCode::kConfig, "contamination value has the wrong dimension");
    }
    for (double v : contamination->value) {
      if (!std::isfinite(v)) throw Error(ErrorCode::kConfig, "contamination value must be finite");
    }
  }
  std::vector<std::string> seen;
  for (const MethodSpec& mth : methods) {
    if (std::find(seen.begin(), seen.end(), mth.label) != seen.end()) {
      throw Error(ErrorCode::kConfig, "divergence '" + mth.label + "' listed twice");
    }
    seen.push_back(mth.label);
  }
}

std::vector<std::string> error_components(const UnnormalizedModel& model) {
  if (model.kind() == ModelKind::kTruncPrecision3D) return {"c", "D"};
  return {"c", "theta"};
}

Vector squared_errors(const UnnormalizedModel&, const Alpha& estimate, const Alpha& truth) {
  const double dc = estimate.c - truth.c;
  double dt = 0.0;
  for (std::size_t i = 0; i < truth.theta.size(); ++i) {
    const double d = estimate.theta[i] - truth.theta[i];
    dt += d * d;
  }
  return {dc * dc, dt};
}

double MseTable::error(std::size_t method, std::size_t size, std::size_t component, std::size_t rep) const {
  return squared_error[((method * sample_sizes.size() + size) * components.size() + component) * replications + rep];
}

Vector MseTable::cell_errors(std::size_t method, std::size_t size, std::size_t component) const {
  Vector out(replications);
  for (std::size_t r = 0; r < replications; ++r) out[r] = error(method, size, component, r);
  return out;
}

const MseRow& MseTable::row(const std::string& method, std::size_t m, const std::string& component) const {
  for (const MseRow& r : rows) {
    if (r.divergence == method && r.m == m && r.component == component) return r;
  }
  throw Error(ErrorCode::kInvalidArgument, "no table row for " + method + "/" + std::to_string(m) + "/" + component);
}

std::size_t MseTable::method_index(const std::string& label) const {
  const auto it = std::find(methods.begin(), methods.end(), label);
  if (it == methods.end()) throw Error(ErrorCode::kInvalidArgument, "no method " + label + " in the table");
  return static_cast<std::size_t>(it - methods.begin());
}

bool MseTable::any_cell_fully_excluded() const {
  return std::any_of(rows.begin(), rows.end(), [](const MseRow& r) { return r.n_used == 0; });
}

MseTable run_mse_sweep(const ExperimentPlan& plan) {
  plan.validate();
  MseTable table;
  table.name = plan.name;
  for (const MethodSpec& m : plan.methods) table.methods.push_back(m.label);
  table.sample_sizes = plan.sample_sizes;
  table.components = error_components(*plan.setup.model);
  table.replications = plan.replications;
  const std::size_t nm = table.methods.size();
  const std::size_t ns = table.sample_sizes.size();
  const std::size_t nc = table.components.size();
  const std::size_t reps = plan.replications;
  table.squared_error.assign(nm * ns * nc * reps, kNaN);

  // One task per (sample size, replication); every method reuses its data.
  parallel_for(ns * reps, plan.workers, [&](std::size_t task) {
    const std::size_t si = task / reps;
    const std::size_t rep = task % reps;
    const SampleSet sample = draw_sample(plan, plan.sample_sizes[si], rep);
    for (std::size_t mi = 0; mi < nm; ++mi) {
      const std::optional<Alpha> est = fit_method(plan, plan.methods[mi], sample);
      if (!est) continue;
      const Vector se = squared_errors(*plan.setup.model, *est, plan.setup.truth);
      for (std::size_t ci = 0; ci < nc; ++ci) {
        table.squared_error[((mi * ns + si) * nc + ci) * reps + rep] = se[ci];
      }
    }
  });

  for (std::size_t mi = 0; mi < nm; ++mi) {
    for (std::size_t si = 0; si < ns; ++si) {
      for (std::size_t ci = 0; ci < nc; ++ci) {
        const Vector errs = table.cell_errors(mi, si, ci);
        const CellStats st = summarize(errs);
        table.rows.push_back({table.methods[mi], table.sample_sizes[si], table.components[ci], st.mean, st.std_error,
                              st.used, reps - st.used});
      }
    }
  }
  return table;
}

MseTable run_contamination(const ExperimentPlan& plan) {
  if (!plan.contamination) throw Error(ErrorCode::kConfig, "contamination plan needs a contamination entry");
  return run_mse_sweep(plan);
}

MseTable run_truncated_experiment(const ExperimentPlan& plan) {
  if (!plan.setup.model || plan.setup.model->kind() != ModelKind::kTruncPrecision3D) {
    throw Error(ErrorCode::kConfig, "truncated experiment needs the trunc_precision3d model");
  }
  return run_mse_sweep(plan);
}

VarianceValidation run_variance_validation(const ExperimentPlan& plan, std::size_t m, std::size_t reps) {
  ExperimentPlan single = plan;
  single.methods = {plan.methods.at(0)};
  single.sample_sizes = {m};
  single.replications = reps;
  const MseTable table = run_mse_sweep(single);

  VarianceValidation out;
  out.method = single.methods[0].label;
  out.m = m;
  out.replications = reps;
  out.components = table.components;

  const auto [m1, m2] = single.split(m);
  const double lambda1 = static_cast<double>(m1) / static_cast<double>(m);
  const ProblemSetup& st = plan.setup;
  ExpectationBackend backend;
  if (st.model->kind() != ModelKind::kGauss1D || st.aux->kind() != AuxKind::kGaussMeanVar1D) {
    backend.kind = BackendKind::kMonteCarlo;
    backend.draws = plan.mc_draws;
    backend.seed = derive_seed(plan.base_seed, 0x5eed, m);
    backend.workers = plan.workers;
  }
  const TheorySetting setting{*st.model, *st.aux, st.truth, st.beta, lambda1};
  const AsvarReport rep = asvar(sandwich_matrices(setting, single.methods[0].divergence, backend));
  const Matrix& cov = single.methods[0].plugin ? rep.asvar_pl : rep.asvar_nc;
  double theta_trace = 0.0;
  for (std::size_t i = 1; i < cov.rows(); ++i) theta_trace += cov(i, i);
  const Vector analytic{cov(0, 0), theta_trace};

  for (std::size_t ci = 0; ci < table.components.size(); ++ci) {
    const MseRow& row = table.rows[ci];
    out.n_used = row.n_used;
    const double scaled = static_cast<double>(m) * row.mse;
    out.empirical.push_back(scaled);
    out.empirical_std_error.push_back(static_cast<double>(m) * row.std_error);
    out.analytic.push_back(analytic[ci]);
    out.relative_gap.push_back(std::abs(scaled - analytic[ci]) / analytic[ci]);
  }
  return out;
}

WaldCalibration run_wald_calibration(const ExperimentPlan& plan, std::size_t m, std::size_t reps, double level) {
  plan.validate();
  const MethodSpec& method = plan.methods.at(0);
  if (method.plugin) throw Error(ErrorCode::kConfig, "Wald calibration uses the non-plug-in estimator");
  const ProblemSetup& st = plan.setup;
  WaldCalibration out;
  out.m = m;
  out.replications = reps;
  out.critical_value = chi_squared_quantile(1.0 - level, static_cast<double>(st.truth.size()));
  out.statistics.assign(reps, kNaN);

  parallel_for(reps, plan.workers, [&](std::size_t rep) {
    const SampleSet sample = draw_sample(plan, m, rep);
    const std::optional<Alpha> est = fit_method(plan, method, sample);
    if (!est) return;
    try {
      const Matrix h = empirical_H(sample, *st.model, *st.aux, *est, st.beta);
      const double l1 = static_cast<double>(sample.m1()) / static_cast<double>(sample.m());
      out.statistics[rep] = wald_statistic(*est, st.truth, variance_from_H(h, l1), sample.m());
    } catch (const Error&) {
    }
  });
  std::size_t rejected = 0;
  for (double s : out.statistics) {
    if (!std::isfinite(s)) continue;
    ++out.n_used;
    if (s > out.critical_value) ++rejected;
  }
  out.rejection_rate = out.n_used == 0 ? kNaN : static_cast<double>(rejected) / static_cast<double>(out.n_used);
  return out;
}

std::vector<ReductionCheck> reduction_checks(const ExperimentPlan& plan) {
  plan.validate();
  const ProblemSetup& st = plan.setup;
  std::vector<double> lambdas;
  for (std::size_t m : plan.sample_sizes) {
    const auto [m1, m2] = plan.split(m);
    const double l1 = static_cast<double>(m1) / static_cast<double>(m);
    if (std::find(lambdas.begin(), lambdas.end(), l1) == lambdas.end()) lambdas.push_back(l1);
  }
  ExpectationBackend backend;
  if (st.model->kind() != ModelKind::kGauss1D || st.aux->kind() != AuxKind::kGaussMeanVar1D) {
    backend.kind = BackendKind::kMonteCarlo;
    backend.draws = plan.mc_draws;
    backend.seed = derive_seed(plan.base_seed, 0xb0b);
    backend.workers = plan.workers;
  }
  std::vector<ReductionCheck> out;
  for (double l1 : lambdas) {
    const TheorySetting setting{*st.model, *st.aux, st.truth, st.beta, l1};
    for (const MethodSpec& method : plan.methods) {
      const AsvarReport rep = asvar(sandwich_matrices(setting, method.divergence, backend));
      out.push_back({method.label, l1, min_eigenvalue(rep.reduction), norm_frobenius(rep.reduction)});
    }
  }
  return out;
}

double paired_bootstrap_confidence(std::span<const double> a, std::span<const double> b, std::size_t resamples,
                                   std::uint64_t seed) {
  if (a.size() != b.size()) throw Error(ErrorCode::kInvalidArgument, "paired bootstrap needs equal lengths");
  Vector diff;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isfinite(a[i]) && std::isfinite(b[i])) diff.push_back(a[i] - b[i]);
  }
  if (diff.empty() || resamples == 0) return 0.0;
  Rng rng(seed);
  const std::size_t n = diff.size();
  std::size_t wins = 0;
  for (std::size_t k = 0; k < resamples; ++k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += diff[rng.next_u64() % n];
    if (sum < 0.0) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(resamples);
}

}  // namespace nce
