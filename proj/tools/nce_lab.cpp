// nce-lab: command-line front end over the nce C API.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "nce/nce.h"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitPartial = 2;

struct ResultHandle {
  nce_result* ptr = nullptr;
  ~ResultHandle() { nce_result_free(ptr); }
  json parsed() const { return json::parse(nce_result_json(ptr)); }
};

struct ConfigHandle {
  nce_config* ptr = nullptr;
  ~ConfigHandle() { nce_config_free(ptr); }
};

int report_failure(nce_status st) {
  std::cerr << "nce-lab: " << nce_status_string(st);
  const std::string detail = nce_last_error();
  if (!detail.empty()) std::cerr << ": " << detail;
  std::cerr << "\n";
  return st == NCE_PARTIAL_FAILURE ? kExitPartial : kExitError;
}

bool write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) {
    std::cerr << "nce-lab: cannot write " << path.string() << "\n";
    return false;
  }
  return true;
}

bool prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    std::cerr << "nce-lab: cannot create " << dir << ": " << ec.message() << "\n";
    return false;
  }
  return true;
}

// Loads the config and, with an output directory, echoes its resolved form.
std::optional<int> load_config(const std::string& path, const std::string& out_dir, ConfigHandle& cfg) {
  const nce_status st = nce_config_load(path.c_str(), &cfg.ptr);
  if (st != NCE_OK) return report_failure(st);
  if (!out_dir.empty()) {
    if (!prepare_out_dir(out_dir)) return kExitError;
    if (!write_file(std::filesystem::path(out_dir) / "resolved_config.json", nce_config_resolved_json(cfg.ptr))) {
      return kExitError;
    }
  }
  return std::nullopt;
}

unsigned workers_from_env(unsigned given) {
  if (const char* env = std::getenv("NCE_LAB_WORKERS")) {
    try {
      const unsigned long v = std::stoul(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
      std::cerr << "nce-lab: ignoring NCE_LAB_WORKERS=" << env << "\n";
    }
  }
  return given;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fmt_json(const json& v) { return v.is_number() ? fmt(v.get<double>()) : std::string("-"); }

struct FitArgs {
  std::string config;
  std::string divergence;
  bool plugin = false;
  std::optional<std::uint64_t> seed;
  std::size_t m1 = 0;
  std::size_t m2 = 0;
  std::string out;
};

int run_fit(const FitArgs& a) {
  ConfigHandle cfg;
  if (auto code = load_config(a.config, a.out, cfg)) return *code;
  nce_fit_options o;
  nce_fit_options_init(&o);
  o.divergence = a.divergence.empty() ? nullptr : a.divergence.c_str();
  o.plugin = a.plugin ? 1 : 0;
  if (a.seed) {
    o.has_seed = 1;
    o.seed = *a.seed;
  }
  o.m1 = a.m1;
  o.m2 = a.m2;
  ResultHandle res;
  const nce_status st = nce_fit(cfg.ptr, &o, &res.ptr);
  if (st != NCE_OK) return report_failure(st);
  const std::string text = nce_result_json(res.ptr);
  std::cout << text;
  if (!a.out.empty() && !write_file(std::filesystem::path(a.out) / "fit.json", text)) return kExitError;
  if (!res.parsed().value("converged", false)) {
    std::cerr << "nce-lab: optimizer stopped before convergence\n";
    return kExitPartial;
  }
  return kExitOk;
}

struct AsvarArgs {
  std::string config;
  std::string divergence;
  double lambda1 = 0.0;
  std::string backend;
  std::size_t draws = 1000000;
  std::string scaled_by = "m";
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::string out;
};

nce_asvar_options asvar_options(const AsvarArgs& a) {
  nce_asvar_options o;
  nce_asvar_options_init(&o);
  o.divergence = a.divergence.empty() ? nullptr : a.divergence.c_str();
  o.lambda1 = a.lambda1;
  o.backend = a.backend.empty() ? nullptr : a.backend.c_str();
  o.draws = a.draws;
  o.seed = a.seed;
  o.workers = workers_from_env(a.workers);
  o.scaled_by = a.scaled_by.c_str();
  return o;
}

int run_asvar(const AsvarArgs& a) {
  ConfigHandle cfg;
  if (auto code = load_config(a.config, a.out, cfg)) return *code;
  const nce_asvar_options o = asvar_options(a);
  ResultHandle res;
  const nce_status st = nce_asvar(cfg.ptr, &o, &res.ptr);
  if (st != NCE_OK) return report_failure(st);
  const std::string text = nce_result_json(res.ptr);
  std::cout << text;
  if (!a.out.empty() && !write_file(std::filesystem::path(a.out) / "asvar.json", text)) return kExitError;
  return kExitOk;
}

int run_validate(const AsvarArgs& a) {
  ConfigHandle cfg;
  if (auto code = load_config(a.config, a.out, cfg)) return *code;
  const nce_asvar_options o = asvar_options(a);
  ResultHandle res;
  const nce_status st = nce_validate(cfg.ptr, &o, &res.ptr);
  if (st != NCE_OK) return report_failure(st);
  const std::string text = nce_result_json(res.ptr);
  if (!a.out.empty() && !write_file(std::filesystem::path(a.out) / "validate.json", text)) return kExitError;
  const json doc = res.parsed();
  std::printf("%-36s %14s\n", "identity", "residual");
  for (const auto& c : doc["checks"]) {
    std::printf("%-36s %14s\n", c["name"].get<std::string>().c_str(), fmt_json(c["relative_residual"]).c_str());
  }
  const bool ok = doc.value("all_within_tolerance", false);
  std::printf("max residual %s: %s\n", fmt_json(doc["max_residual"]).c_str(), ok ? "ok" : "FAILED");
  return ok ? kExitOk : kExitError;
}

struct ExperimentArgs {
  std::string plan;
  std::string out;
  std::string format = "csv";
  bool full = false;
  unsigned workers = 0;
  bool quiet = false;
};

void print_table_summary(const json& table) {
  std::printf("%-10s %8s %-6s %14s %14s %6s %6s\n", "divergence", "m", "comp", "mse", "stderr", "used", "excl");
  for (const auto& r : table["rows"]) {
    std::printf("%-10s %8zu %-6s %14s %14s %6zu %6zu\n", r["divergence"].get<std::string>().c_str(),
                r["m"].get<std::size_t>(), r["component"].get<std::string>().c_str(), fmt_json(r["mse"]).c_str(),
                fmt_json(r["stderr"]).c_str(), r["n_used"].get<std::size_t>(), r["n_excluded"].get<std::size_t>());
  }
}

int run_experiment(const ExperimentArgs& a) {
  nce_experiment_options o;
  nce_experiment_options_init(&o);
  o.full = a.full ? 1 : 0;
  o.workers = workers_from_env(a.workers);
  o.out_dir = a.out.empty() ? nullptr : a.out.c_str();
  o.format = a.format.c_str();
  ResultHandle res;
  const nce_status st = nce_experiment(a.plan.c_str(), &o, &res.ptr);
  if (st != NCE_OK && st != NCE_PARTIAL_FAILURE) return report_failure(st);
  const json doc = res.parsed();
  if (!a.quiet) {
    std::printf("plan %s (%s)\n", doc["name"].get<std::string>().c_str(), doc["type"].get<std::string>().c_str());
    if (doc.contains("table")) {
      print_table_summary(doc["table"]);
    } else {
      std::cout << doc["record"].dump(2) << "\n";
    }
    for (const auto& f : doc["files"]) std::printf("wrote %s\n", f.get<std::string>().c_str());
  }
  if (st == NCE_PARTIAL_FAILURE) return report_failure(st);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise contrastive estimation for unnormalized models", "nce-lab"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", nce_version());

  FitArgs fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Draw a sample from the config's truth and fit alpha");
  fit_cmd->add_option("--config", fit.config, "Model/auxiliary config (JSON)")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--divergence", fit.divergence, "kl, chi2, js, ojs, ojs:<nu> or dpow:<beta>");
  fit_cmd->add_flag("--plugin", fit.plugin, "Re-estimate the auxiliary parameter by MLE first");
  fit_cmd->add_option("--seed", fit.seed, "Sampling seed");
  fit_cmd->add_option("--m1", fit.m1, "Target sample size")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--m2", fit.m2, "Auxiliary sample size")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--out", fit.out, "Directory for resolved_config.json and fit.json");

  AsvarArgs asv;
  CLI::App* asvar_cmd = app.add_subcommand("asvar", "Asymptotic covariance matrices at the truth");
  AsvarArgs val;
  CLI::App* validate_cmd = app.add_subcommand("validate", "Check the special-case variance identities");
  for (auto [cmd, args] : {std::pair{asvar_cmd, &asv}, std::pair{validate_cmd, &val}}) {
    cmd->add_option("--config", args->config, "Model/auxiliary config (JSON)")->required()->check(CLI::ExistingFile);
    if (cmd == asvar_cmd) cmd->add_option("--divergence", args->divergence, "kl, chi2, js, ojs or dpow:<beta>");
    cmd->add_option("--lambda1", args->lambda1, "Target share m1/m in (0, 1)");
    cmd->add_option("--backend", args->backend, "Expectation backend")->check(CLI::IsMember({"quad", "mc"}));
    cmd->add_option("--draws", args->draws, "Monte Carlo draws per stratum")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--scaled-by", args->scaled_by, "Covariance scaling")->capture_default_str()->check(CLI::IsMember({"m", "m1"}));
    cmd->add_option("--seed", args->seed, "Monte Carlo seed")->capture_default_str();
    cmd->add_option("--workers", args->workers, "Monte Carlo worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--out", args->out, "Directory for resolved_config.json and the result");
  }

  ExperimentArgs exp;
  CLI::App* exp_cmd = app.add_subcommand("experiment", "Run a Monte Carlo experiment plan");
  exp_cmd->add_option("--plan", exp.plan, "Experiment plan (JSON)")->required()->check(CLI::ExistingFile);
  exp_cmd->add_option("--out", exp.out, "Output directory");
  exp_cmd->add_option("--format", exp.format, "Table format")->capture_default_str()->check(CLI::IsMember({"csv", "json", "svg"}));
  exp_cmd->add_flag("--full", exp.full, "Use the full sample-size grid and replication count");
  exp_cmd->add_option("--workers", exp.workers, "Worker threads (NCE_LAB_WORKERS overrides)");
  exp_cmd->add_flag("-q,--quiet", exp.quiet, "Skip the summary table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (fit_cmd->parsed()) return run_fit(fit);
    if (asvar_cmd->parsed()) return run_asvar(asv);
    if (validate_cmd->parsed()) return run_validate(val);
    if (exp_cmd->parsed()) return run_experiment(exp);
  } catch (const std::exception& e) {
    std::cerr << "nce-lab: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
