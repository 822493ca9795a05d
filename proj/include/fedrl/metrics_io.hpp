#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedrl/experiment.hpp"

namespace fedrl {

/// Floating-point text used by every CSV sink: 10 significant digits.
inline std::string format_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

namespace detail {

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

}  // namespace detail

inline constexpr const char* kRawHeader = "seed,round,step,agent,group,scheme,scenario,g";
inline constexpr const char* kAggregateHeader = "round,step,scheme,scenario,mean_g,ci95";
inline constexpr const char* kPTraceHeader = "step,i,j,p";

inline void write_raw_csv(const MetricsTable& table, const std::filesystem::path& path,
                          Metric metric = Metric::Discounted) {
  auto out = detail::open_for_write(path);
  out << kRawHeader << '\n';
  for (const auto& r : table.rows)
    out << r.seed << ',' << r.round << ',' << r.step << ',' << r.agent << ',' << r.group << ',' << table.scheme
        << ',' << table.scenario << ',' << format_real(metric == Metric::Discounted ? r.g : r.g_undiscounted)
        << '\n';
  detail::finish(out, path);
}

inline void write_aggregate_csv(const std::vector<AggregateRow>& aggregates, const std::string& scheme,
                                const std::string& scenario, const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  out << kAggregateHeader << '\n';
  for (const auto& a : aggregates)
    out << a.round << ',' << a.step << ',' << scheme << ',' << scenario << ',' << format_real(a.mean) << ','
        << format_real(a.ci95) << '\n';
  detail::finish(out, path);
}

/// Writes raw.csv and aggregate.csv (discounted g) plus the undiscounted
/// companions raw_undiscounted.csv and aggregate_undiscounted.csv.
inline std::vector<std::filesystem::path> emit_metrics(const MetricsTable& table, const std::filesystem::path& dir) {
  if (table.rows.empty()) throw std::invalid_argument("emit_metrics: metrics table is empty");
  const std::vector<std::filesystem::path> files{dir / "raw.csv", dir / "aggregate.csv",
                                                 dir / "raw_undiscounted.csv", dir / "aggregate_undiscounted.csv"};
  write_raw_csv(table, files[0], Metric::Discounted);
  write_aggregate_csv(table.aggregates, table.scheme, table.scenario, files[1]);
  write_raw_csv(table, files[2], Metric::Undiscounted);
  write_aggregate_csv(table.aggregates_undiscounted, table.scheme, table.scenario, files[3]);
  return files;
}

/// Parsed raw.csv: rows plus the scheme and scenario columns.
struct RawCsv {
  std::string scheme;
  std::string scenario;
  std::vector<MetricRow> rows;
};

/// Reads a raw.csv written by write_raw_csv. The g column lands in both
/// MetricRow::g and MetricRow::g_undiscounted.
inline RawCsv read_raw_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kRawHeader)
    throw std::runtime_error(path.string() + ": unexpected header");
  RawCsv out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 8) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 8 fields");
    MetricRow r;
    r.seed = std::stoull(f[0]);
    r.round = std::stoull(f[1]);
    r.step = std::stoull(f[2]);
    r.agent = std::stoull(f[3]);
    r.group = std::stoull(f[4]);
    out.scheme = f[5];
    out.scenario = f[6];
    r.g = r.g_undiscounted = std::strtod(f[7].c_str(), nullptr);
    out.rows.push_back(r);
  }
  return out;
}

/// Writes p_trace.csv (step,i,j,p) for the given snapshots, N*N rows each.
inline std::filesystem::path emit_p_matrix_trace(const std::vector<PSnapshot>& snapshots,
                                                 const std::filesystem::path& dir) {
  const auto path = dir / "p_trace.csv";
  auto out = detail::open_for_write(path);
  out << kPTraceHeader << '\n';
  for (const auto& snap : snapshots) {
    const std::size_t n = snap.p.size();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out << snap.step << ',' << i << ',' << j << ',' << format_real(snap.p(i, j)) << '\n';
  }
  detail::finish(out, path);
  return path;
}

/// Writes q_trace.csv with the traced Q rows of every agent and round.
inline std::filesystem::path emit_q_trace(const std::vector<SeedResult>& seeds, const std::filesystem::path& dir) {
  const auto path = dir / "q_trace.csv";
  auto out = detail::open_for_write(path);
  out << "seed,step,agent,group,state,action,q\n";
  for (const auto& s : seeds)
    for (const auto& r : s.q_trace)
      out << r.seed << ',' << r.step << ',' << r.agent << ',' << r.group << ',' << r.state << ',' << r.action << ','
          << format_real(r.q) << '\n';
  detail::finish(out, path);
  return path;
}

/// Writes a Q-table as state,action,q rows.
inline void write_q_table(const QTable& q, const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  out << "state,action,q\n";
  for (State s = 0; s < q.n_states(); ++s)
    for (Action a = 0; a < q.n_actions(); ++a) out << s << ',' << a << ',' << format_real(q(s, a)) << '\n';
  detail::finish(out, path);
}

/// Reads a whole file; used by tests and the determinism check.
inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fedrl
