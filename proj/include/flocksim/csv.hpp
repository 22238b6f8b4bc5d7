#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace flocksim {

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double d) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), d);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, const std::string& where) {
  double d = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), d);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw CsvError(where + ": malformed number '" + std::string(s) + "'");
  }
  return d;
}

template <typename Int>
inline Int parse_int(std::string_view s, const std::string& where) {
  Int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw CsvError(where + ": malformed integer '" + std::string(s) + "'");
  }
  return v;
}

inline std::string loc(const std::string& name, int line) {
  return name + " line " + std::to_string(line);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Trajectory CSV: one row per UAV per control step. Leader rows carry a zero
// reward (the reward function is defined for followers only).

inline constexpr const char* kTrajectoryHeader =
    "episode,t,uav_id,role,x,y,psi,phi,v,reward";

struct TrajectoryRow {
  int episode = 0;
  int t = 0;
  int uav_id = 0;  // 0 = leader, followers count from 1
  std::string role;
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double phi = 0.0;
  double v = 0.0;
  double reward = 0.0;
};

class TrajectoryWriter {
 public:
  explicit TrajectoryWriter(std::ostream& os) : os_(os) {
    os_ << kTrajectoryHeader << '\n';
  }

  void write(const TrajectoryRow& r) {
    os_ << r.episode << ',' << r.t << ',' << r.uav_id << ',' << r.role << ','
        << format_double(r.x) << ',' << format_double(r.y) << ','
        << format_double(r.psi) << ',' << format_double(r.phi) << ','
        << format_double(r.v) << ',' << format_double(r.reward) << '\n';
  }

 private:
  std::ostream& os_;
};

inline std::vector<TrajectoryRow> read_trajectory(std::istream& is,
                                                  const std::string& name) {
  std::string line;
  if (!std::getline(is, line)) {
    throw CsvError(name + ": empty file, expected header '" +
                   std::string(kTrajectoryHeader) + "'");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTrajectoryHeader) {
    throw CsvError(detail::loc(name, 1) + ": bad header, expected '" +
                   std::string(kTrajectoryHeader) + "'");
  }
  std::vector<TrajectoryRow> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_fields(line);
    const std::string where = detail::loc(name, lineno);
    if (f.size() != 10) {
      throw CsvError(where + ": expected 10 fields, found " +
                     std::to_string(f.size()));
    }
    TrajectoryRow r;
    r.episode = detail::parse_int<int>(f[0], where);
    r.t = detail::parse_int<int>(f[1], where);
    r.uav_id = detail::parse_int<int>(f[2], where);
    r.role = std::string(f[3]);
    if (r.role != "leader" && r.role != "follower") {
      throw CsvError(where + ": role must be 'leader' or 'follower', got '" +
                     r.role + "'");
    }
    r.x = detail::parse_double(f[4], where);
    r.y = detail::parse_double(f[5], where);
    r.psi = detail::parse_double(f[6], where);
    r.phi = detail::parse_double(f[7], where);
    r.v = detail::parse_double(f[8], where);
    r.reward = detail::parse_double(f[9], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<TrajectoryRow> load_trajectory(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw CsvError("cannot open trajectory CSV: " + path.string());
  return read_trajectory(is, path.filename().string());
}

// ---------------------------------------------------------------------------
// Metrics CSV: one row per episode.

inline constexpr const char* kMetricsHeader =
    "variant,n,seed,episode,G_Avg,collision_rate";

struct MetricsRow {
  std::string variant;
  int n = 0;
  std::uint64_t seed = 0;
  int episode = 0;
  double g_avg = 0.0;
  double collision_rate = 0.0;  // percent
};

class MetricsWriter {
 public:
  explicit MetricsWriter(std::ostream& os) : os_(os) {
    os_ << kMetricsHeader << '\n';
  }

  void write(const MetricsRow& r) {
    os_ << r.variant << ',' << r.n << ',' << r.seed << ',' << r.episode << ','
        << format_double(r.g_avg) << ',' << format_double(r.collision_rate)
        << '\n';
  }

 private:
  std::ostream& os_;
};

inline std::vector<MetricsRow> read_metrics(std::istream& is,
                                            const std::string& name) {
  std::string line;
  if (!std::getline(is, line)) {
    throw CsvError(name + ": empty file, expected header '" +
                   std::string(kMetricsHeader) + "'");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) {
    throw CsvError(detail::loc(name, 1) + ": bad header, expected '" +
                   std::string(kMetricsHeader) + "'");
  }
  std::vector<MetricsRow> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_fields(line);
    const std::string where = detail::loc(name, lineno);
    if (f.size() != 6) {
      throw CsvError(where + ": expected 6 fields, found " +
                     std::to_string(f.size()));
    }
    MetricsRow r;
    r.variant = std::string(f[0]);
    r.n = detail::parse_int<int>(f[1], where);
    r.seed = detail::parse_int<std::uint64_t>(f[2], where);
    r.episode = detail::parse_int<int>(f[3], where);
    r.g_avg = detail::parse_double(f[4], where);
    r.collision_rate = detail::parse_double(f[5], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<MetricsRow> load_metrics(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw CsvError("cannot open metrics CSV: " + path.string());
  return read_metrics(is, path.filename().string());
}

// ---------------------------------------------------------------------------
// Comparison CSV: per-variant per-n statistics over evaluation episodes.
// Variance entries are population variances across episodes.

inline constexpr const char* kComparisonHeader =
    "variant,n,reward_mean,reward_var,collision_rate_mean,collision_rate_var";

struct ComparisonRow {
  std::string variant;
  int n = 0;
  double reward_mean = 0.0;
  double reward_var = 0.0;
  double collision_rate_mean = 0.0;  // percent
  double collision_rate_var = 0.0;

  friend bool operator==(const ComparisonRow&, const ComparisonRow&) = default;
};

class ComparisonWriter {
 public:
  explicit ComparisonWriter(std::ostream& os) : os_(os) {
    os_ << kComparisonHeader << '\n';
  }

  void write(const ComparisonRow& r) {
    os_ << r.variant << ',' << r.n << ',' << format_double(r.reward_mean)
        << ',' << format_double(r.reward_var) << ','
        << format_double(r.collision_rate_mean) << ','
        << format_double(r.collision_rate_var) << '\n';
  }

 private:
  std::ostream& os_;
};

inline std::vector<ComparisonRow> read_comparison(std::istream& is,
                                                  const std::string& name) {
  std::string line;
  if (!std::getline(is, line)) {
    throw CsvError(name + ": empty file, expected header '" +
                   std::string(kComparisonHeader) + "'");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kComparisonHeader) {
    throw CsvError(detail::loc(name, 1) + ": bad header, expected '" +
                   std::string(kComparisonHeader) + "'");
  }
  std::vector<ComparisonRow> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_fields(line);
    const std::string where = detail::loc(name, lineno);
    if (f.size() != 6) {
      throw CsvError(where + ": expected 6 fields, found " +
                     std::to_string(f.size()));
    }
    ComparisonRow r;
    r.variant = std::string(f[0]);
    r.n = detail::parse_int<int>(f[1], where);
    r.reward_mean = detail::parse_double(f[2], where);
    r.reward_var = detail::parse_double(f[3], where);
    r.collision_rate_mean = detail::parse_double(f[4], where);
    r.collision_rate_var = detail::parse_double(f[5], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<ComparisonRow> load_comparison(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw CsvError("cannot open comparison CSV: " + path.string());
  return read_comparison(is, path.filename().string());
}

}  // namespace flocksim
