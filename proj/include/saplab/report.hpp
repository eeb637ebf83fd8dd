#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "saplab/errors.hpp"
#include "saplab/experiment.hpp"

namespace saplab {

enum class ReportFormat { json, csv };

inline std::string report_json_text(const EvalReport& r, bool include_timing = false) {
  return to_json(r, include_timing).dump(2) + "\n";
}

inline constexpr const char* kCsvHeader =
    "cell_id,r_multiplier,scheme,K,oracle,targeted,epsilon,clean_acc,adv_acc,success_rate,stderr,seconds";

namespace detail {

inline std::string csv_number(double v) { return nlohmann::json(v).dump(); }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

/// One row per cell. Undefended cells carry r_multiplier 0, scheme "none", K 0.
inline std::string report_csv_text(const EvalReport& r) {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const auto& c : r.cells) {
    os << detail::csv_field(c.id) << ',' << detail::csv_number(c.defense ? c.defense->r_multiplier : 0.0) << ','
       << (c.defense ? to_string(c.defense->scheme) : "none") << ',' << (c.defense ? c.defense->passes : 0) << ','
       << c.oracle() << ',' << (c.targeted ? "true" : "false") << ',' << detail::csv_number(c.epsilon) << ','
       << detail::csv_number(c.clean.value()) << ',' << detail::csv_number(c.adv_correct.value()) << ','
       << detail::csv_number(c.success.value()) << ',' << detail::csv_number(c.success.stderr_()) << ','
       << detail::csv_number(c.seconds) << '\n';
  }
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError(path.parent_path().string(), ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string(), "write failed");
}

/// Writes report.json and/or report.csv under `dir`; returns the paths.
inline std::vector<std::filesystem::path> emit_report(const EvalReport& r, const std::filesystem::path& dir,
                                                      const std::vector<ReportFormat>& formats,
                                                      bool include_timing = false) {
  std::vector<std::filesystem::path> written;
  for (ReportFormat f : formats) {
    const auto path = dir / (f == ReportFormat::json ? "report.json" : "report.csv");
    write_text(path, f == ReportFormat::json ? report_json_text(r, include_timing) : report_csv_text(r));
    written.push_back(path);
  }
  return written;
}

inline EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string(), e.what());
  }
  return report_from_json(j);
}

}  // namespace saplab
