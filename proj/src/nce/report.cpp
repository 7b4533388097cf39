#include "nce/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nce/error.hpp"

namespace nce {

namespace {

using nlohmann::json;

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json real_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vector_json(const Vector& v) {
  json out = json::array();
  for (double e : v) out.push_back(real_or_null(e));
  return out;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_real(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw Error(ErrorCode::kConfig, "malformed number '" + s + "' in csv");
  return v;
}

std::size_t parse_count(const std::string& s) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (s.empty() || pos != s.size()) throw Error(ErrorCode::kConfig, "malformed count '" + s + "' in csv");
  return static_cast<std::size_t>(v);
}

constexpr const char* kCsvHeader = "divergence,m,component,mse,stderr,n_used,n_excluded";

}  // namespace

std::string to_csv(const MseTable& table) {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const MseRow& r : table.rows) {
    os << r.divergence << ',' << r.m << ',' << r.component << ',' << format_real(r.mse) << ','
       << format_real(r.std_error) << ',' << r.n_used << ',' << r.n_excluded << '\n';
  }
  return os.str();
}

std::vector<MseRow> parse_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) throw Error(ErrorCode::kConfig, "csv header mismatch");
  std::vector<MseRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != 7) throw Error(ErrorCode::kConfig, "csv row needs 7 fields: " + line);
    rows.push_back({f[0], parse_count(f[1]), f[2], parse_real(f[3]), parse_real(f[4]), parse_count(f[5]),
                    parse_count(f[6])});
  }
  return rows;
}

std::string to_json(const MseTable& table) {
  json rows = json::array();
  for (const MseRow& r : table.rows) {
    rows.push_back({{"divergence", r.divergence},
                    {"m", r.m},
                    {"component", r.component},
                    {"mse", real_or_null(r.mse)},
                    {"stderr", real_or_null(r.std_error)},
                    {"n_used", r.n_used},
                    {"n_excluded", r.n_excluded}});
  }
  const json doc{{"name", table.name},
                 {"replications", table.replications},
                 {"divergences", table.methods},
                 {"sample_sizes", table.sample_sizes},
                 {"components", table.components},
                 {"error_convention",
                  "squared error per component; a matrix component sums squared errors over its free entries"},
                 {"rows", rows}};
  return doc.dump(2) + "\n";
}

std::string to_json(const VarianceValidation& record) {
  const json doc{{"divergence", record.method},
                 {"m", record.m},
                 {"replications", record.replications},
                 {"n_used", record.n_used},
                 {"components", record.components},
                 {"empirical_scaled_mse", vector_json(record.empirical)},
                 {"empirical_stderr", vector_json(record.empirical_std_error)},
                 {"analytic_asvar", vector_json(record.analytic)},
                 {"relative_gap", vector_json(record.relative_gap)}};
  return doc.dump(2) + "\n";
}

std::string to_json(const WaldCalibration& record) {
  const json doc{{"m", record.m},
                 {"replications", record.replications},
                 {"n_used", record.n_used},
                 {"critical_value", record.critical_value},
                 {"rejection_rate", real_or_null(record.rejection_rate)},
                 {"statistics", vector_json(record.statistics)}};
  return doc.dump(2) + "\n";
}

std::string to_svg(const MseTable& table, const std::string& component) {
  if (table.sample_sizes.size() < 2) throw Error(ErrorCode::kInvalidArgument, "svg needs at least two sample sizes");
  if (std::find(table.components.begin(), table.components.end(), component) == table.components.end()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown component '" + component + "'");
  }
  constexpr double kW = 640.0, kH = 420.0, kLeft = 70.0, kRight = 150.0, kTop = 30.0, kBottom = 50.0;
  double xmin = std::log10(static_cast<double>(*std::min_element(table.sample_sizes.begin(), table.sample_sizes.end())));
  double xmax = std::log10(static_cast<double>(*std::max_element(table.sample_sizes.begin(), table.sample_sizes.end())));
  double ymin = 1e300, ymax = -1e300;
  for (const MseRow& r : table.rows) {
    if (r.component != component || !(r.mse > 0.0) || !std::isfinite(r.mse)) continue;
    ymin = std::min(ymin, std::log10(r.mse));
    ymax = std::max(ymax, std::log10(r.mse));
  }
  if (ymin > ymax) {
    ymin = 0.0;
    ymax = 1.0;
  }
  if (ymax - ymin < 1e-9) ymax = ymin + 1.0;
  if (xmax - xmin < 1e-9) xmax = xmin + 1.0;
  auto px = [&](double lx) { return kLeft + (lx - xmin) / (xmax - xmin) * (kW - kLeft - kRight); };
  auto py = [&](double ly) { return kH - kBottom - (ly - ymin) / (ymax - ymin) * (kH - kTop - kBottom); };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  os << "<title>" << table.name << ": MSE of " << component << "</title>\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight << "\" y2=\"" << kH - kBottom
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kH - kBottom
     << "\" stroke=\"black\"/>\n";
  for (std::size_t m : table.sample_sizes) {
    const double x = px(std::log10(static_cast<double>(m)));
    os << "<text x=\"" << x << "\" y=\"" << kH - kBottom + 18 << "\" font-size=\"10\" text-anchor=\"middle\">" << m
       << "</text>\n";
  }
  os << "<text x=\"" << 8 << "\" y=\"" << py(ymax) + 4 << "\" font-size=\"10\">" << format_real(std::pow(10.0, ymax)).substr(0, 8)
     << "</text>\n";
  os << "<text x=\"" << 8 << "\" y=\"" << py(ymin) + 4 << "\" font-size=\"10\">" << format_real(std::pow(10.0, ymin)).substr(0, 8)
     << "</text>\n";
  os << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 10
     << "\" font-size=\"12\" text-anchor=\"middle\">m (log scale)</text>\n";

  for (std::size_t mi = 0; mi < table.methods.size(); ++mi) {
    const std::string& label = table.methods[mi];
    const char* color = kColors[mi % (sizeof kColors / sizeof kColors[0])];
    os << "<polyline data-divergence=\"" << label << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"2\" points=\"";
    bool first = true;
    for (const MseRow& r : table.rows) {
      if (r.divergence != label || r.component != component || !(r.mse > 0.0) || !std::isfinite(r.mse)) continue;
      os << (first ? "" : " ") << px(std::log10(static_cast<double>(r.m))) << ',' << py(std::log10(r.mse));
      first = false;
    }
    os << "\"/>\n";
    const double ly = kTop + 18.0 * static_cast<double>(mi);
    os << "<text x=\"" << kW - kRight + 12 << "\" y=\"" << ly + 4 << "\" font-size=\"12\" fill=\"" << color << "\">"
       << label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << contents;
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace nce
