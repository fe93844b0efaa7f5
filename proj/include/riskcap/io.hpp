#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "riskcap/capital.hpp"
#include "riskcap/error.hpp"
#include "riskcap/experiments.hpp"

namespace riskcap::io {

// ---------------------------------------------------------------------------
// Number formatting and parsing
// ---------------------------------------------------------------------------

/// Round-trip precision for CSV output.
inline std::string format_full(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Four significant digits for text reports.
inline std::string format_short(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

template <class Int>
std::optional<Int> parse_integer(std::string_view s) {
  s = trim(s);
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

// ---------------------------------------------------------------------------
// Generic CSV
// ---------------------------------------------------------------------------

/// Comma-separated table without quoting; line numbers are 1-based file lines.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    fields.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

inline CsvTable read_csv(std::istream& in, const std::string& source) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(table.header.size()) + " fields, found " + std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) throw ValidationError(source + ": empty file (missing header)");
  return table;
}

inline void require_header(const CsvTable& table, const std::vector<std::string>& expected, const std::string& source) {
  if (table.header != expected) {
    std::string want;
    for (std::size_t i = 0; i < expected.size(); ++i) want += (i ? "," : "") + expected[i];
    throw ValidationError(source + ":1: header must be '" + want + "'");
  }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  return out;
}

// ---------------------------------------------------------------------------
// Loss data files: counts (year,count) and events (year,amount)
// ---------------------------------------------------------------------------

struct CountRow {
  std::int64_t year;
  std::uint64_t count;
};

struct EventRow {
  std::int64_t year;
  double amount;
};

inline std::vector<CountRow> read_counts_csv(std::istream& in, const std::string& source) {
  const CsvTable table = read_csv(in, source);
  require_header(table, {"year", "count"}, source);
  std::vector<CountRow> rows;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const std::string where = source + ":" + std::to_string(table.line_numbers[i]) + ": ";
    const auto year = parse_integer<std::int64_t>(table.rows[i][0]);
    if (!year) throw ValidationError(where + "year must be an integer");
    const auto count = parse_integer<std::uint64_t>(table.rows[i][1]);
    if (!count) throw ValidationError(where + "count must be a non-negative integer");
    rows.push_back({*year, *count});
  }
  return rows;
}

inline std::vector<EventRow> read_events_csv(std::istream& in, const std::string& source) {
  const CsvTable table = read_csv(in, source);
  require_header(table, {"year", "amount"}, source);
  std::vector<EventRow> rows;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const std::string where = source + ":" + std::to_string(table.line_numbers[i]) + ": ";
    const auto year = parse_integer<std::int64_t>(table.rows[i][0]);
    if (!year) throw ValidationError(where + "year must be an integer");
    const auto amount = parse_double(table.rows[i][1]);
    if (!amount || !std::isfinite(*amount) || !(*amount > 0.0)) {
      throw ValidationError(where + "amount must be a positive number");
    }
    rows.push_back({*year, *amount});
  }
  return rows;
}

/// Joins the two files into LossData, ordered by the counts file. Every
/// observation year (including zero-count years) must appear in the counts
/// file exactly once and the events per year must tally with its count.
inline LossData assemble_loss_data(const std::vector<CountRow>& counts, const std::vector<EventRow>& events,
                                   const std::string& counts_source = "counts",
                                   const std::string& events_source = "events") {
  if (counts.empty()) throw ValidationError(counts_source + ": no observation years");
  std::map<std::int64_t, std::vector<double>> by_year;
  for (const CountRow& c : counts) {
    if (!by_year.emplace(c.year, std::vector<double>{}).second) {
      throw ValidationError(counts_source + ": year " + std::to_string(c.year) + " listed more than once");
    }
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    auto it = by_year.find(events[i].year);
    if (it == by_year.end()) {
      throw ValidationError(events_source + ": event row " + std::to_string(i + 1) + " has year " +
                            std::to_string(events[i].year) + " which is missing from " + counts_source);
    }
    it->second.push_back(events[i].amount);
  }
  LossData data;
  for (const CountRow& c : counts) {
    const auto& amounts = by_year.at(c.year);
    if (amounts.size() != c.count) {
      throw ValidationError("tally mismatch for year " + std::to_string(c.year) + ": " + counts_source + " says " +
                            std::to_string(c.count) + ", " + events_source + " has " +
                            std::to_string(amounts.size()) + " events");
    }
    data.annual_counts.push_back(c.count);
    data.severities.insert(data.severities.end(), amounts.begin(), amounts.end());
  }
  return data;
}

inline LossData load_loss_data(const std::filesystem::path& counts_path, const std::filesystem::path& events_path) {
  auto counts_in = open_input(counts_path);
  auto events_in = open_input(events_path);
  return assemble_loss_data(read_counts_csv(counts_in, counts_path.string()),
                            read_events_csv(events_in, events_path.string()), counts_path.string(),
                            events_path.string());
}

/// Years are numbered first_year, first_year + 1, ...
inline void write_counts_csv(std::ostream& out, const LossData& data, std::int64_t first_year = 1) {
  out << "year,count\n";
  for (std::size_t m = 0; m < data.years(); ++m) {
    out << first_year + static_cast<std::int64_t>(m) << ',' << data.annual_counts[m] << '\n';
  }
}

inline void write_events_csv(std::ostream& out, const LossData& data, std::int64_t first_year = 1) {
  out << "year,amount\n";
  std::size_t k = 0;
  for (std::size_t m = 0; m < data.years(); ++m) {
    for (std::uint64_t i = 0; i < data.annual_counts[m]; ++i) {
      out << first_year + static_cast<std::int64_t>(m) << ',' << format_full(data.severities[k++]) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Capital CSV
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& capital_csv_header() {
  static const std::vector<std::string> header{"cell_id", "mode", "q", "K", "value", "ci_lower", "ci_upper", "warnings"};
  return header;
}

struct CapitalRow {
  std::string cell_id;
  std::string mode;
  double q = 0.0;
  std::uint64_t K = 0;
  double value = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::string warnings;  // ';'-separated
};

inline std::string join_warnings(const std::vector<std::string>& warnings) {
  std::string out;
  for (std::size_t i = 0; i < warnings.size(); ++i) out += (i ? ";" : "") + warnings[i];
  return out;
}

inline CapitalRow to_row(const CapitalReport& report) {
  return {report.cell_id,           std::string(to_string(report.mode)), report.estimate.q,
          report.estimate.K,        report.estimate.value,               report.estimate.ci_lower,
          report.estimate.ci_upper, join_warnings(report.warnings)};
}

inline void write_capital_header(std::ostream& out) {
  const auto& h = capital_csv_header();
  for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
  out << '\n';
}

inline void write_capital_row(std::ostream& out, const CapitalRow& row) {
  out << row.cell_id << ',' << row.mode << ',' << format_full(row.q) << ',' << row.K << ',' << format_full(row.value)
      << ',' << format_full(row.ci_lower) << ',' << format_full(row.ci_upper) << ',' << row.warnings << '\n';
}

inline std::vector<CapitalRow> read_capital_csv(std::istream& in, const std::string& source) {
  const CsvTable table = read_csv(in, source);
  require_header(table, capital_csv_header(), source);
  std::vector<CapitalRow> rows;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& f = table.rows[i];
    const std::string where = source + ":" + std::to_string(table.line_numbers[i]) + ": ";
    CapitalRow row;
    row.cell_id = f[0];
    row.mode = f[1];
    if (row.mode != "conditional" && row.mode != "predictive") {
      throw ValidationError(where + "mode must be 'conditional' or 'predictive'");
    }
    const auto q = parse_double(f[2]);
    const auto K = parse_integer<std::uint64_t>(f[3]);
    const auto value = parse_double(f[4]);
    const auto lo = parse_double(f[5]);
    const auto hi = parse_double(f[6]);
    if (!q || !(*q > 0.0 && *q < 1.0)) throw ValidationError(where + "q must be a probability");
    if (!K) throw ValidationError(where + "K must be a non-negative integer");
    if (!value || !lo || !hi) throw ValidationError(where + "value and CI bounds must be numbers");
    row.q = *q;
    row.K = *K;
    row.value = *value;
    row.ci_lower = *lo;
    row.ci_upper = *hi;
    row.warnings = f[7];
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Experiment CSVs
// ---------------------------------------------------------------------------

/// Columns: M, K, then <name>,<name>_lower,<name>_upper per parameter, then
/// Q_conditional, Q_predictive (thousands).
inline void write_table1_csv(std::ostream& out, const std::vector<BiasRecord>& rows) {
  out << "M,K";
  if (!rows.empty()) {
    for (const auto& p : rows.front().parameters) out << ',' << p.name << ',' << p.name << "_lower," << p.name << "_upper";
  }
  out << ",Q_conditional,Q_predictive\n";
  for (const BiasRecord& r : rows) {
    out << r.M << ',' << r.K_data;
    for (const auto& p : r.parameters) {
      out << ',' << format_full(p.estimate) << ',' << format_full(p.interval.lower) << ','
          << format_full(p.interval.upper);
    }
    out << ',' << format_full(r.q_conditional) << ',' << format_full(r.q_predictive) << '\n';
  }
}

inline void write_bias_csv(std::ostream& out, const std::vector<std::pair<SeverityFamily, BiasCurve>>& curves) {
  out << "severity,M,relative_bias\n";
  for (const auto& [family, curve] : curves) {
    for (const BiasPoint& p : curve.points) {
      out << to_string(family) << ',' << p.M << ',' << format_full(p.relative_bias) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Run configuration (JSON)
// ---------------------------------------------------------------------------

enum class RunMode { conditional, predictive, both };

inline std::optional<RunMode> parse_run_mode(std::string_view s) {
  if (s == "conditional") return RunMode::conditional;
  if (s == "predictive") return RunMode::predictive;
  if (s == "both") return RunMode::both;
  return std::nullopt;
}

struct CellConfig {
  CellModel model;
  std::string counts_path;  // resolved relative to the config file
  std::string events_path;
};

/// Defaults: q 0.999, K 10^6, gamma 0.95, mode both, batch_K 10^5,
/// max_K 10^7, workers 1, no adaptive target, seed from the environment or
/// the clock.
struct RunConfig {
  double q = 0.999;
  std::size_t K = 1'000'000;
  double gamma = 0.95;
  std::optional<std::uint64_t> seed;
  RunMode mode = RunMode::both;
  std::optional<double> target_rel_halfwidth;
  std::size_t batch_K = 100'000;
  std::size_t max_K = kDefaultMaxK;
  std::size_t workers = 1;
  std::vector<CellConfig> cells;
};

namespace detail {

using json = nlohmann::json;

inline void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                                const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

inline double number_field(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ValidationError(where + ": missing '" + key + "'");
  if (!obj.at(key).is_number()) throw ValidationError(where + ": '" + key + "' must be a number");
  return obj.at(key).get<double>();
}

inline Interval bounds_field(const json& value, const std::string& where) {
  if (!value.is_array() || value.size() != 2) throw ValidationError(where + ": bounds must be [lower, upper]");
  Interval b;
  if (!value[0].is_null()) {
    if (!value[0].is_number()) throw ValidationError(where + ": lower bound must be a number or null");
    b.lower = value[0].get<double>();
  }
  if (!value[1].is_null()) {
    if (!value[1].is_number()) throw ValidationError(where + ": upper bound must be a number or null");
    b.upper = value[1].get<double>();
  }
  if (!(b.lower < b.upper)) throw ValidationError(where + ": bounds need lower < upper");
  return b;
}

template <class F>
auto wrap_invalid(const std::string& where, F&& make) {
  try {
    return make();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(where + ": " + e.what());
  }
}

inline CellConfig parse_cell(const json& j, std::size_t index, const std::filesystem::path& base_dir) {
  const std::string where = "cells[" + std::to_string(index) + "]";
  if (!j.is_object()) throw ValidationError(where + ": must be an object");
  reject_unknown_keys(j, {"id", "frequency", "severity", "threshold", "counts", "events", "prior", "bounds", "finite_mean"},
                      where);
  CellConfig cell;
  cell.model.cell_id = j.value("id", "cell" + std::to_string(index + 1));
  if (cell.model.cell_id.find_first_of(",;\"\n") != std::string::npos || cell.model.cell_id.empty()) {
    throw ValidationError(where + ": id must be non-empty and contain no commas, semicolons or quotes");
  }
  if (j.contains("frequency") && j.at("frequency") != "poisson") {
    throw ValidationError(where + ": only 'poisson' frequency is supported");
  }
  if (!j.contains("severity") || !j.at("severity").is_string()) {
    throw ValidationError(where + ": 'severity' is required ('lognormal' or 'pareto')");
  }
  const std::string sev = j.at("severity").get<std::string>();
  if (sev == "lognormal") {
    cell.model.severity = SeverityFamily::lognormal;
  } else if (sev == "pareto") {
    cell.model.severity = SeverityFamily::pareto;
    cell.model.threshold = number_field(j, "threshold", where);
  } else {
    throw ValidationError(where + ": severity must be 'lognormal' or 'pareto'");
  }
  auto resolve = [&](const char* key) -> std::string {
    if (!j.contains(key)) return {};
    if (!j.at(key).is_string()) throw ValidationError(where + ": '" + key + "' must be a path string");
    std::filesystem::path p = j.at(key).get<std::string>();
    return (p.is_relative() ? base_dir / p : p).string();
  };
  cell.counts_path = resolve("counts");
  cell.events_path = resolve("events");

  PriorSpec& prior = cell.model.prior;
  if (j.contains("prior")) {
    const json& pj = j.at("prior");
    const std::string pw = where + ".prior";
    if (!pj.is_object()) throw ValidationError(pw + ": must be an object");
    reject_unknown_keys(pj, {"frequency", "lognormal", "pareto"}, pw);
    if (pj.contains("frequency") && !pj.at("frequency").is_null()) {
      const json& g = pj.at("frequency");
      prior.frequency = wrap_invalid(pw + ".frequency", [&] {
        return GammaParams(number_field(g, "shape", pw + ".frequency"), number_field(g, "scale", pw + ".frequency"));
      });
    }
    if (pj.contains("lognormal") && !pj.at("lognormal").is_null()) {
      const json& n = pj.at("lognormal");
      const std::string nw = pw + ".lognormal";
      prior.lognormal = wrap_invalid(nw, [&] {
        return NIXParams(number_field(n, "nu", nw), number_field(n, "beta", nw), number_field(n, "theta", nw),
                         number_field(n, "phi", nw));
      });
    }
    if (pj.contains("pareto") && !pj.at("pareto").is_null()) {
      const json& g = pj.at("pareto");
      prior.pareto = wrap_invalid(pw + ".pareto", [&] {
        return GammaParams(number_field(g, "shape", pw + ".pareto"), number_field(g, "scale", pw + ".pareto"));
      });
    }
  }
  if (j.contains("bounds")) {
    const json& bj = j.at("bounds");
    const std::string bw = where + ".bounds";
    if (!bj.is_object()) throw ValidationError(bw + ": must be an object");
    reject_unknown_keys(bj, {"lambda", "mu", "sigma_sq", "xi"}, bw);
    if (bj.contains("lambda")) prior.lambda_bounds = bounds_field(bj.at("lambda"), bw + ".lambda");
    if (bj.contains("mu")) prior.mu_bounds = bounds_field(bj.at("mu"), bw + ".mu");
    if (bj.contains("sigma_sq")) prior.sigma_sq_bounds = bounds_field(bj.at("sigma_sq"), bw + ".sigma_sq");
    if (bj.contains("xi")) prior.xi_bounds = bounds_field(bj.at("xi"), bw + ".xi");
  }
  if (j.contains("finite_mean")) {
    if (!j.at("finite_mean").is_boolean()) throw ValidationError(where + ": 'finite_mean' must be a boolean");
    prior.finite_mean = j.at("finite_mean").get<bool>();
  }
  wrap_invalid(where, [&] {
    cell.model.validate();
    return 0;
  });
  return cell;
}

inline std::size_t count_field(const json& j, const char* key, std::size_t fallback, std::size_t min_value) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_unsigned() || j.at(key).get<std::uint64_t>() < min_value) {
    throw ValidationError(std::string("config: '") + key + "' must be an integer >= " + std::to_string(min_value));
  }
  return j.at(key).get<std::size_t>();
}

inline double probability_field(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ValidationError(std::string("config: '") + key + "' must be a number");
  const double v = j.at(key).get<double>();
  if (!(v > 0.0 && v < 1.0)) throw ValidationError(std::string("config: '") + key + "' must lie in (0, 1)");
  return v;
}

}  // namespace detail

/// Parses and validates a run configuration document. Relative data paths
/// are resolved against `base_dir`.
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using detail::json;
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  detail::reject_unknown_keys(
      j, {"q", "K", "gamma", "seed", "mode", "target_rel_halfwidth", "batch_K", "max_K", "workers", "cells"}, "config");
  RunConfig cfg;
  cfg.q = detail::probability_field(j, "q", cfg.q);
  cfg.gamma = detail::probability_field(j, "gamma", cfg.gamma);
  cfg.K = detail::count_field(j, "K", cfg.K, 1);
  cfg.batch_K = detail::count_field(j, "batch_K", cfg.batch_K, 1);
  cfg.max_K = detail::count_field(j, "max_K", cfg.max_K, 1);
  cfg.workers = detail::count_field(j, "workers", cfg.workers, 0);
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw ValidationError("config: 'seed' must be an unsigned integer");
    cfg.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("mode")) {
    const auto mode = j.at("mode").is_string() ? parse_run_mode(j.at("mode").get<std::string>()) : std::nullopt;
    if (!mode) throw ValidationError("config: 'mode' must be 'conditional', 'predictive' or 'both'");
    cfg.mode = *mode;
  }
  if (j.contains("target_rel_halfwidth") && !j.at("target_rel_halfwidth").is_null()) {
    if (!j.at("target_rel_halfwidth").is_number() || !(j.at("target_rel_halfwidth").get<double>() > 0.0)) {
      throw ValidationError("config: 'target_rel_halfwidth' must be a positive number");
    }
    cfg.target_rel_halfwidth = j.at("target_rel_halfwidth").get<double>();
  }
  if (j.contains("cells")) {
    if (!j.at("cells").is_array()) throw ValidationError("config: 'cells' must be an array");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < j.at("cells").size(); ++i) {
      cfg.cells.push_back(detail::parse_cell(j.at("cells")[i], i, base_dir));
      if (!ids.insert(cfg.cells.back().model.cell_id).second) {
        throw ValidationError("config: duplicate cell id '" + cfg.cells.back().model.cell_id + "'");
      }
    }
  }
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  auto in = open_input(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

}  // namespace riskcap::io
