// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "alignopt/csv.hpp"
#include "alignopt/oracles.hpp"

namespace alignopt {

/// One solved instance under one method.
struct EvalRecord {
  ProblemKind kind = ProblemKind::TSP;
  int n = 0;
  int index = 0;
  std::string method;
  double objective = 0;
  std::optional<double> reference;
  std::string reference_method;
  bool feasible = true;
  double time_ms = 0;
};

struct ReportRow {
  ProblemKind kind = ProblemKind::TSP;
  int n = 0;
  std::string method;
  int count = 0;
  double mean_objective = 0;
  double mean_gap = 0;  // fraction; NaN when no record has a usable reference
  int gap_count = 0;
  double mean_time_ms = 0;
};

/// Gap of one record. A zero reference only yields a gap when the objective
/// is zero as well.
inline std::optional<double> record_gap(const EvalRecord& r) {
  if (!r.reference) throw Error(ErrorCode::MissingReference, r.method + " record " + std::to_string(r.index));
  if (*r.reference > 0) return optimality_gap(r.objective, *r.reference, sense_of(r.kind));
  if (r.objective == *r.reference) return 0.0;
  return std::nullopt;
}

/// Means per (kind, size, method), rows ordered by that key.
inline std::vector<ReportRow> eval_report(const std::vector<EvalRecord>& records) {
  using Key = std::tuple<int, int, std::string>;
  std::map<Key, ReportRow> rows;
  std::map<Key, double> gap_sum;
  for (const auto& r : records) {
    const Key key{static_cast<int>(r.kind), r.n, r.method};
    auto& row = rows[key];
    row.kind = r.kind;
    row.n = r.n;
    row.method = r.method;
    ++row.count;
    row.mean_objective += r.objective;
    row.mean_time_ms += r.time_ms;
    if (const auto g = record_gap(r)) {
      gap_sum[key] += *g;
      ++row.gap_count;
    }
  }
  std::vector<ReportRow> out;
  for (auto& [key, row] : rows) {
    row.mean_objective /= row.count;
    row.mean_time_ms /= row.count;
    row.mean_gap = row.gap_count ? gap_sum[key] / row.gap_count : std::numeric_limits<double>::quiet_NaN();
    out.push_back(row);
  }
  return out;
}

inline void write_eval_csv_header(std::ostream& os) {
  os << "kind,n,index,method,objective,reference,reference_method,gap,feasible,time_ms\n";
}

inline void write_eval_csv_row(std::ostream& os, const EvalRecord& r) {
  const auto g = r.reference ? record_gap(r) : std::nullopt;
  os << to_string(r.kind) << ',' << r.n << ',' << r.index << ',' << r.method << ',' << format_real(r.objective) << ','
     << (r.reference ? format_real(*r.reference) : "") << ',' << r.reference_method << ','
     << (g ? format_real(*g) : "") << ',' << (r.feasible ? 1 : 0) << ',' << format_real(r.time_ms) << '\n';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_real(const std::string& s) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw Error(ErrorCode::ParseError, "bad number '" + s + "'");
  return v;
}

/// Reads the per-instance CSV written by write_eval_csv_row.
inline std::vector<EvalRecord> read_eval_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "kind,n,index,method,objective,reference,reference_method,gap,feasible,time_ms")
    throw Error(ErrorCode::ParseError, "unexpected eval CSV header");
  std::vector<EvalRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 10) throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected 10 fields");
    EvalRecord r;
    r.kind = parse_kind(c[0]);
    r.n = static_cast<int>(parse_real(c[1]));
    r.index = static_cast<int>(parse_real(c[2]));
    r.method = c[3];
    r.objective = parse_real(c[4]);
    if (!c[5].empty()) r.reference = parse_real(c[5]);
    r.reference_method = c[6];
    r.feasible = c[8] == "1";
    r.time_ms = parse_real(c[9]);
    out.push_back(r);
  }
  return out;
}

inline void write_report_csv_header(std::ostream& os) {
  os << "kind,n,method,count,mean_obj,mean_gap_pct,gap_count,mean_time_ms\n";
}

inline void write_report_csv_row(std::ostream& os, const ReportRow& r) {
  os << to_string(r.kind) << ',' << r.n << ',' << r.method << ',' << r.count << ',' << format_real(r.mean_objective)
     << ',' << (std::isnan(r.mean_gap) ? "" : format_real(100.0 * r.mean_gap)) << ',' << r.gap_count << ','
     << format_real(r.mean_time_ms) << '\n';
}

}  // namespace alignopt
