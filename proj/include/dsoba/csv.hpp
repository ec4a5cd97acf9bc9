#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dsoba/error.hpp"
#include "dsoba/metrics.hpp"

namespace dsoba {

inline constexpr const char* kRunCsvHeader = "t,grad_sq_norm,phi_gap,consensus_error,upper_loss,alpha";

/// Shortest text that parses back to the same double; "nan" for NaN.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline void write_run_csv(std::ostream& out, const RunRecord& record) {
  out << kRunCsvHeader << '\n';
  for (const auto& p : record.probes) {
    out << p.t << ',' << format_double(p.grad_sq_norm) << ',' << format_double(p.phi_gap) << ','
        << format_double(p.consensus_error) << ',' << format_double(p.upper_loss) << ','
        << format_double(p.alpha) << '\n';
  }
}

inline void write_run_csv(const std::string& path, const RunRecord& record) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  write_run_csv(out, record);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

inline RunRecord read_run_csv(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, source + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRunCsvHeader) {
    throw Error(ErrorCode::ParseError, source + ": unexpected header '" + line + "'");
  }
  RunRecord record;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) {
      throw Error(ErrorCode::ParseError,
                  source + ":" + std::to_string(line_no) + ": expected 6 columns");
    }
    Probe p;
    try {
      std::size_t used = 0;
      p.t = std::stol(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument("t");
      double* fields[] = {&p.grad_sq_norm, &p.phi_gap, &p.consensus_error, &p.upper_loss, &p.alpha};
      for (int k = 0; k < 5; ++k) {
        *fields[k] = std::stod(cells[static_cast<std::size_t>(k) + 1], &used);
        if (used != cells[static_cast<std::size_t>(k) + 1].size()) throw std::invalid_argument("v");
      }
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError,
                  source + ":" + std::to_string(line_no) + ": malformed number");
    }
    if (!record.probes.empty() && p.t <= record.probes.back().t) {
      throw Error(ErrorCode::ParseError,
                  source + ":" + std::to_string(line_no) + ": iterations must increase");
    }
    record.probes.push_back(p);
  }
  return record;
}

inline RunRecord read_run_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return read_run_csv(in, path);
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "topology,variant,t,count";
  const Metric metrics[] = {Metric::GradSqNorm, Metric::PhiGap, Metric::ConsensusError,
                            Metric::UpperLoss};
  for (Metric m : metrics) out << ',' << metric_name(m) << "_mean," << metric_name(m) << "_se";
  out << '\n';
  for (const auto& r : rows) {
    out << r.topology << ',' << r.variant << ',' << r.t << ',' << r.count;
    for (Metric m : metrics) {
      out << ',' << format_double(r.mean.at(m)) << ',' << format_double(r.std_error.at(m));
    }
    out << '\n';
  }
}

}  // namespace dsoba
