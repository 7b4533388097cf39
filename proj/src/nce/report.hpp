#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nce/harness.hpp"

namespace nce {

/// Header: divergence,m,component,mse,stderr,n_used,n_excluded. Reals use
/// %.17g so parse_csv reproduces them exactly.
std::string to_csv(const MseTable& table);
std::vector<MseRow> parse_csv(const std::string& text);

/// Table rows plus metadata; a non-finite mse or stderr is written as null.
std::string to_json(const MseTable& table);
std::string to_json(const VarianceValidation& record);
std::string to_json(const WaldCalibration& record);

/// Log-log plot of MSE against m for one component, one polyline per
/// method. Needs at least two sample sizes.
std::string to_svg(const MseTable& table, const std::string& component);

/// Throws Io.
void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace nce
