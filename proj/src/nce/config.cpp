#include "nce/config.hpp"

#include <json.hpp>

#include <set>

#include "nce/error.hpp"
#include "nce/report.hpp"

namespace nce {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorCode::kConfig, msg); }

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("invalid JSON: ") + e.what());
  }
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) fail(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) fail("unknown key '" + key + "' in " + where);
  }
}

double get_real(const json& v, const std::string& what) {
  if (!v.is_number()) fail(what + " must be a number");
  return v.get<double>();
}

Vector get_vector(const json& v, const std::string& what) {
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) fail(what + " must be an array of numbers");
  Vector out;
  for (const auto& e : v) out.push_back(get_real(e, what));
  return out;
}

Matrix get_matrix3(const json& v, const std::string& what) {
  if (!v.is_array() || v.size() != 3) fail(what + " must be a 3x3 array");
  Matrix m(3, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const Vector row = get_vector(v[i], what);
    if (row.size() != 3) fail(what + " must be a 3x3 array");
    for (std::size_t j = 0; j < 3; ++j) m(i, j) = row[j];
  }
  if (!m.is_symmetric()) fail(what + " must be symmetric");
  return m;
}

std::size_t get_count(const json& v, const std::string& what) {
  if (!v.is_number_integer() || v.get<long long>() < 0) fail(what + " must be a non-negative integer");
  return v.get<std::size_t>();
}

std::uint64_t get_seed(const json& v, const std::string& what) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
    fail(what + " must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

ProblemSetup parse_setup(const json& doc) {
  if (!doc.contains("model")) fail("config needs a \"model\" entry");
  if (!doc.contains("aux")) fail("config needs an \"aux\" entry");
  const json& mj = doc["model"];
  const json& aj = doc["aux"];
  check_keys(mj, {"kind", "true_alpha", "true_theta", "true_precision", "true_covariance", "lower"}, "model");
  check_keys(aj, {"kind", "beta", "lower"}, "aux");
  if (!mj.contains("kind") || !mj["kind"].is_string()) fail("model.kind must be a string");
  if (!aj.contains("kind") || !aj["kind"].is_string()) fail("aux.kind must be a string");

  ProblemSetup st;
  const std::string mkind = mj["kind"];
  const int truth_keys = static_cast<int>(mj.contains("true_alpha")) + static_cast<int>(mj.contains("true_theta")) +
                         static_cast<int>(mj.contains("true_precision")) +
                         static_cast<int>(mj.contains("true_covariance"));
  if (truth_keys != 1) fail("model needs exactly one of true_alpha, true_theta, true_precision, true_covariance");
  std::optional<double> given_c;
  Vector theta;
  if (mkind == "gauss1d") {
    if (mj.contains("lower")) fail("gauss1d takes no lower bound");
    if (mj.contains("true_precision") || mj.contains("true_covariance")) fail("gauss1d takes true_alpha or true_theta");
    st.model = std::make_shared<Gauss1DModel>();
  } else if (mkind == "trunc_precision3d") {
    const double lower = mj.contains("lower") ? get_real(mj["lower"], "model.lower") : 0.3;
    st.model = std::make_shared<TruncPrecision3DModel>(lower);
    if (mj.contains("true_precision")) {
      theta = TruncPrecision3DModel::theta_from_precision(get_matrix3(mj["true_precision"], "model.true_precision"));
    } else if (mj.contains("true_covariance")) {
      const Matrix cov = get_matrix3(mj["true_covariance"], "model.true_covariance");
      try {
        Matrix d = cholesky_inverse(cov);
        d.symmetrize();
        theta = TruncPrecision3DModel::theta_from_precision(d);
      } catch (const Error&) {
        fail("model.true_covariance must be positive definite");
      }
    }
  } else {
    fail("unknown model kind '" + mkind + "' (expected gauss1d or trunc_precision3d)");
  }
  if (mj.contains("true_alpha")) {
    const Vector a = get_vector(mj["true_alpha"], "model.true_alpha");
    if (a.size() != 1 + st.model->theta_dim()) fail("model.true_alpha has the wrong length");
    given_c = a[0];
    theta.assign(a.begin() + 1, a.end());
  } else if (mj.contains("true_theta")) {
    theta = get_vector(mj["true_theta"], "model.true_theta");
  }
  if (theta.size() != st.model->theta_dim()) fail("model truth has the wrong number of theta entries");
  try {
    st.model->validate_theta(theta);
  } catch (const Error& e) {
    fail(std::string("model truth: ") + e.what());
  }
  st.truth = {given_c ? *given_c : st.model->normalizing_c(theta), theta};

  const std::string akind = aj["kind"];
  if (akind == "gauss_mean_var_1d") {
    if (aj.contains("lower")) fail("gauss_mean_var_1d takes no lower bound");
    st.aux = std::make_shared<GaussMeanVar1D>();
  } else if (akind == "trunc_diag_normal3d") {
    st.aux = std::make_shared<TruncDiagNormal3D>(aj.contains("lower") ? get_real(aj["lower"], "aux.lower") : 0.3);
  } else {
    fail("unknown aux kind '" + akind + "' (expected gauss_mean_var_1d or trunc_diag_normal3d)");
  }
  if (st.aux->dim() != st.model->dim()) fail("aux and model dimensions differ");
  if (!aj.contains("beta")) fail("aux needs beta");
  st.beta = get_vector(aj["beta"], "aux.beta");
  try {
    st.aux->validate_beta(st.beta);
  } catch (const Error& e) {
    fail(std::string("aux.beta: ") + e.what());
  }
  if (const auto* m3 = dynamic_cast<const TruncPrecision3DModel*>(st.model.get())) {
    const auto* a3 = dynamic_cast<const TruncDiagNormal3D*>(st.aux.get());
    if (a3 && a3->lower() > m3->lower()) fail("aux support must cover the model support");
  }
  return st;
}

json setup_json(const ProblemSetup& st) {
  json model{{"kind", st.model->name()}, {"true_alpha", st.truth.flat()}};
  if (const auto* m3 = dynamic_cast<const TruncPrecision3DModel*>(st.model.get())) model["lower"] = m3->lower();
  json aux{{"kind", st.aux->name()}, {"beta", st.beta}};
  if (const auto* a3 = dynamic_cast<const TruncDiagNormal3D*>(st.aux.get())) aux["lower"] = a3->lower();
  return {{"model", model}, {"aux", aux}};
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  const json doc = parse_text(json_text);
  check_keys(doc, {"model", "aux", "divergence", "m1", "m2", "lambda1", "seed"}, "config");
  RunConfig cfg;
  cfg.setup = parse_setup(doc);
  if (doc.contains("divergence")) {
    if (!doc["divergence"].is_string()) fail("divergence must be a string");
    cfg.divergence = doc["divergence"].get<std::string>();
  }
  if (doc.contains("m1")) cfg.m1 = get_count(doc["m1"], "m1");
  if (doc.contains("m2")) cfg.m2 = get_count(doc["m2"], "m2");
  if (doc.contains("lambda1")) cfg.lambda1 = get_real(doc["lambda1"], "lambda1");
  if (doc.contains("seed")) cfg.seed = get_seed(doc["seed"], "seed");
  return cfg;
}

std::string resolved_config_json(const RunConfig& config) {
  json doc = setup_json(config.setup);
  if (config.divergence) doc["divergence"] = *config.divergence;
  if (config.m1) doc["m1"] = *config.m1;
  if (config.m2) doc["m2"] = *config.m2;
  if (config.lambda1) doc["lambda1"] = *config.lambda1;
  if (config.seed) doc["seed"] = *config.seed;
  return doc.dump(2) + "\n";
}

std::string plan_type_name(PlanType type) {
  switch (type) {
    case PlanType::kSweep: return "sweep";
    case PlanType::kContamination: return "contamination";
    case PlanType::kTruncated: return "truncated";
    case PlanType::kVarianceValidation: return "variance_validation";
    case PlanType::kWald: return "wald";
  }
  return "sweep";
}

ExperimentPlan parse_plan(const std::string& json_text, const std::filesystem::path& base_dir, bool full) {
  const json doc = parse_text(json_text);
  check_keys(doc,
             {"name", "type", "config", "config_file", "divergences", "sample_sizes", "full_sample_sizes",
              "replications", "full_replications", "ratio", "contamination", "base_seed", "workers", "mc_draws",
              "description"},
             "plan");
  ExperimentPlan plan;
  if (doc.contains("name")) {
    if (!doc["name"].is_string()) fail("plan name must be a string");
    plan.name = doc["name"];
    if (plan.name.empty() || plan.name.find_first_of("/\\") != std::string::npos) {
      fail("plan name must be a non-empty file-name-safe string");
    }
  }
  if (doc.contains("type")) {
    const std::string t = doc["type"].is_string() ? doc["type"].get<std::string>() : "";
    if (t == "sweep") plan.type = PlanType::kSweep;
    else if (t == "contamination") plan.type = PlanType::kContamination;
    else if (t == "truncated") plan.type = PlanType::kTruncated;
    else if (t == "variance_validation") plan.type = PlanType::kVarianceValidation;
    else if (t == "wald") plan.type = PlanType::kWald;
    else fail("plan type must be sweep, contamination, truncated, variance_validation or wald");
  }

  if (doc.contains("config") == doc.contains("config_file")) fail("plan needs exactly one of config, config_file");
  if (doc.contains("config")) {
    const json& c = doc["config"];
    check_keys(c, {"model", "aux"}, "plan.config");
    plan.setup = parse_setup(c);
  } else {
    if (!doc["config_file"].is_string()) fail("config_file must be a string");
    const std::filesystem::path p = base_dir / doc["config_file"].get<std::string>();
    std::string text;
    try {
      text = read_text_file(p);
    } catch (const Error& e) {
      fail(e.what());
    }
    plan.setup = parse_run_config(text).setup;
  }

  if (!doc.contains("divergences") || !doc["divergences"].is_array()) fail("plan needs a divergences array");
  for (const auto& d : doc["divergences"]) {
    if (!d.is_string()) fail("divergence labels must be strings");
    try {
      plan.methods.push_back(MethodSpec::parse(d.get<std::string>()));
    } catch (const Error& e) {
      fail(e.what());
    }
  }
  auto sizes = [&](const char* key) {
    std::vector<std::size_t> out;
    if (!doc[key].is_array()) fail(std::string(key) + " must be an array");
    for (const auto& v : doc[key]) out.push_back(get_count(v, key));
    return out;
  };
  if (!doc.contains("sample_sizes")) fail("plan needs sample_sizes");
  plan.sample_sizes = sizes("sample_sizes");
  if (full && doc.contains("full_sample_sizes")) plan.sample_sizes = sizes("full_sample_sizes");
  if (doc.contains("replications")) plan.replications = get_count(doc["replications"], "replications");
  if (full && doc.contains("full_replications")) {
    plan.replications = get_count(doc["full_replications"], "full_replications");
  }
  if (doc.contains("ratio")) {
    const Vector r = get_vector(doc["ratio"], "ratio");
    if (r.size() != 2) fail("ratio must be [m1 part, m2 part]");
    plan.ratio1 = r[0];
    plan.ratio2 = r[1];
  }
  if (doc.contains("contamination")) {
    const json& c = doc["contamination"];
    check_keys(c, {"value", "count"}, "contamination");
    if (!c.contains("value")) fail("contamination needs a value");
    plan.contamination = Contamination{get_vector(c["value"], "contamination.value"),
                                       c.contains("count") ? get_count(c["count"], "contamination.count") : 1};
  }
  if (doc.contains("base_seed")) plan.base_seed = get_seed(doc["base_seed"], "base_seed");
  if (doc.contains("workers")) plan.workers = static_cast<unsigned>(std::max<std::size_t>(1, get_count(doc["workers"], "workers")));
  if (doc.contains("mc_draws")) plan.mc_draws = get_count(doc["mc_draws"], "mc_draws");
  if (plan.type == PlanType::kContamination && !plan.contamination) fail("contamination plan needs a contamination entry");
  if (plan.type == PlanType::kTruncated && plan.setup.model->kind() != ModelKind::kTruncPrecision3D) {
    fail("truncated plan needs the trunc_precision3d model");
  }
  try {
    plan.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  return plan;
}

std::string resolved_plan_json(const ExperimentPlan& plan) {
  json methods = json::array();
  for (const MethodSpec& m : plan.methods) methods.push_back(m.label);
  json doc{{"name", plan.name},
           {"type", plan_type_name(plan.type)},
           {"config", setup_json(plan.setup)},
           {"divergences", methods},
           {"sample_sizes", plan.sample_sizes},
           {"replications", plan.replications},
           {"ratio", {plan.ratio1, plan.ratio2}},
           {"base_seed", plan.base_seed},
           {"workers", plan.workers},
           {"mc_draws", plan.mc_draws}};
  if (plan.contamination) {
    doc["contamination"] = {{"value", plan.contamination->value}, {"count", plan.contamination->count}};
  }
  return doc.dump(2) + "\n";
}

}  // namespace nce
