#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "nce/harness.hpp"

namespace nce {

/// A model/auxiliary config file plus optional run defaults.
///
///   {"model": {"kind": "gauss1d", "true_alpha": [c, theta]},
///    "aux":   {"kind": "gauss_mean_var_1d", "beta": [mu, var]},
///    "m1": 1000, "m2": 2000, "seed": 7, "divergence": "ojs"}
///
/// The model truth may instead be given as "true_theta" (c is then the
/// normalizing value), or for trunc_precision3d as "true_precision" or
/// "true_covariance" (3x3).
struct RunConfig {
  ProblemSetup setup;
  std::optional<std::string> divergence;
  std::optional<std::size_t> m1;
  std::optional<std::size_t> m2;
  std::optional<double> lambda1;
  std::optional<std::uint64_t> seed;
};

/// Throws Config.
RunConfig parse_run_config(const std::string& json_text);
/// The config with every derived value filled in.
std::string resolved_config_json(const RunConfig& config);

/// Experiment plan (schema in docs/plan.schema.json). A "config_file" entry
/// is resolved against `base_dir`. With `full`, "full_sample_sizes" and
/// "full_replications" replace the desk-scale values when present.
ExperimentPlan parse_plan(const std::string& json_text, const std::filesystem::path& base_dir, bool full = false);
std::string resolved_plan_json(const ExperimentPlan& plan);

std::string plan_type_name(PlanType type);

}  // namespace nce
