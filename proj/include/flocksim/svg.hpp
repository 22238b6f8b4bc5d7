#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flocksim/csv.hpp"

namespace flocksim {

// Three fixed panels: top-down trajectories, leader distance against time,
// minimum pairwise follower distance against time. Geometry constants are
// part of the tested contract.
inline constexpr double kSvgWidth = 1280.0;
inline constexpr double kSvgHeight = 420.0;
inline constexpr double kPanelWidth = 360.0;
inline constexpr double kPanelHeight = 300.0;
inline constexpr double kPanelTop = 70.0;
inline constexpr double kPanelLeft0 = 60.0;
inline constexpr double kPanelGap = 60.0;

struct Extent {
  double lo = 0.0;
  double hi = 0.0;
  bool any = false;

  void include(double v) {
    if (!any) {
      lo = hi = v;
      any = true;
      return;
    }
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  /// Pads by 5% of the span; degenerate spans widen by one unit each way.
  void finalize() {
    if (!any) {
      lo = 0.0;
      hi = 1.0;
      return;
    }
    if (hi - lo < 1e-12) {
      lo -= 1.0;
      hi += 1.0;
      return;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

struct Panel {
  double x0 = 0.0;  // left edge in view coordinates
  Extent x;
  Extent y;

  double map_x(double v) const {
    return x0 + (v - x.lo) / (x.hi - x.lo) * kPanelWidth;
  }
  // view y grows downward
  double map_y(double v) const {
    return kPanelTop + (y.hi - v) / (y.hi - y.lo) * kPanelHeight;
  }
};

inline double panel_left(int index) {
  return kPanelLeft0 + index * (kPanelWidth + kPanelGap);
}

namespace detail {

inline constexpr const char* kPalette[10] = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

inline std::string trim_label(double v) {
  std::ostringstream ss;
  const double r = std::round(v * 100.0) / 100.0;
  ss << (r == 0.0 ? 0.0 : r);
  return ss.str();
}

inline void draw_axes(std::ostringstream& svg, const Panel& p,
                      const std::string& title, const std::string& x_label,
                      const std::string& y_label) {
  svg << "<rect x=\"" << format_double(p.x0) << "\" y=\""
      << format_double(kPanelTop) << "\" width=\""
      << format_double(kPanelWidth) << "\" height=\""
      << format_double(kPanelHeight)
      << "\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n";
  svg << "<text x=\"" << format_double(p.x0 + kPanelWidth / 2) << "\" y=\""
      << format_double(kPanelTop - 16)
      << "\" text-anchor=\"middle\" font-size=\"15\" fill=\"#111\">" << title
      << "</text>\n";
  svg << "<text x=\"" << format_double(p.x0 + kPanelWidth / 2) << "\" y=\""
      << format_double(kPanelTop + kPanelHeight + 34)
      << "\" text-anchor=\"middle\" font-size=\"12\" fill=\"#333\">" << x_label
      << "</text>\n";
  svg << "<text x=\"" << format_double(p.x0 - 44) << "\" y=\""
      << format_double(kPanelTop + kPanelHeight / 2)
      << "\" text-anchor=\"middle\" font-size=\"12\" fill=\"#333\" "
         "transform=\"rotate(-90 "
      << format_double(p.x0 - 44) << " "
      << format_double(kPanelTop + kPanelHeight / 2) << ")\">" << y_label
      << "</text>\n";
  // corner tick labels
  svg << "<text x=\"" << format_double(p.x0) << "\" y=\""
      << format_double(kPanelTop + kPanelHeight + 14)
      << "\" font-size=\"11\" fill=\"#555\">" << trim_label(p.x.lo)
      << "</text>\n";
  svg << "<text x=\"" << format_double(p.x0 + kPanelWidth) << "\" y=\""
      << format_double(kPanelTop + kPanelHeight + 14)
      << "\" text-anchor=\"end\" font-size=\"11\" fill=\"#555\">"
      << trim_label(p.x.hi) << "</text>\n";
  svg << "<text x=\"" << format_double(p.x0 - 6) << "\" y=\""
      << format_double(kPanelTop + kPanelHeight)
      << "\" text-anchor=\"end\" font-size=\"11\" fill=\"#555\">"
      << trim_label(p.y.lo) << "</text>\n";
  svg << "<text x=\"" << format_double(p.x0 - 6) << "\" y=\""
      << format_double(kPanelTop + 10)
      << "\" text-anchor=\"end\" font-size=\"11\" fill=\"#555\">"
      << trim_label(p.y.hi) << "</text>\n";
}

inline void draw_polyline(std::ostringstream& svg, const Panel& p,
                          const std::vector<std::pair<double, double>>& pts,
                          const std::string& stroke, bool dashed) {
  if (pts.empty()) return;
  svg << "<polyline fill=\"none\" stroke=\"" << stroke
      << "\" stroke-width=\"1.5\"";
  if (dashed) svg << " stroke-dasharray=\"6 4\"";
  svg << " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i > 0) svg << ' ';
    svg << format_double(p.map_x(pts[i].first)) << ','
        << format_double(p.map_y(pts[i].second));
  }
  svg << "\"/>\n";
}

}  // namespace detail

/// Minimum pairwise follower distance per (episode, t); steps with fewer
/// than two followers are omitted. Rows may arrive in any order.
inline std::vector<std::pair<int, double>> min_pairwise_series(
    const std::vector<TrajectoryRow>& rows, int episode) {
  std::map<int, std::vector<std::pair<double, double>>> by_t;
  for (const auto& r : rows) {
    if (r.episode == episode && r.role == "follower") {
      by_t[r.t].push_back({r.x, r.y});
    }
  }
  std::vector<std::pair<int, double>> out;
  for (const auto& [t, pts] : by_t) {
    if (pts.size() < 2) continue;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = i + 1; j < pts.size(); ++j) {
        best = std::min(best, std::hypot(pts[i].first - pts[j].first,
                                         pts[i].second - pts[j].second));
      }
    }
    out.push_back({t, best});
  }
  return out;
}

/// Distance to the leader per (episode, t) for one follower. Throws when a
/// step lacks its leader row.
inline std::vector<std::pair<int, double>> leader_distance_series(
    const std::vector<TrajectoryRow>& rows, int episode, int uav_id) {
  std::map<int, std::pair<double, double>> leader_at;
  for (const auto& r : rows) {
    if (r.episode == episode && r.role == "leader") {
      leader_at[r.t] = {r.x, r.y};
    }
  }
  std::vector<std::pair<int, double>> out;
  for (const auto& r : rows) {
    if (r.episode != episode || r.uav_id != uav_id || r.role != "follower") {
      continue;
    }
    const auto it = leader_at.find(r.t);
    if (it == leader_at.end()) {
      throw CsvError("plot: episode " + std::to_string(episode) + " step " +
                     std::to_string(r.t) + " has no leader row");
    }
    out.push_back(
        {r.t, std::hypot(r.x - it->second.first, r.y - it->second.second)});
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Renders the three-panel figure. An empty row set yields axes only.
inline std::string render_plots(const std::vector<TrajectoryRow>& rows,
                                double collision_threshold = 2.0) {
  // series keyed by (episode, uav_id), points in t order
  std::map<std::pair<int, int>, std::vector<TrajectoryRow>> series;
  std::vector<int> episodes;
  for (const auto& r : rows) {
    series[{r.episode, r.uav_id}].push_back(r);
    if (std::find(episodes.begin(), episodes.end(), r.episode) ==
        episodes.end()) {
      episodes.push_back(r.episode);
    }
  }
  for (auto& [key, v] : series) {
    std::sort(v.begin(), v.end(),
              [](const TrajectoryRow& a, const TrajectoryRow& b) {
                return a.t < b.t;
              });
  }
  std::sort(episodes.begin(), episodes.end());

  Panel traj{panel_left(0), {}, {}};
  Panel rho{panel_left(1), {}, {}};
  Panel mind{panel_left(2), {}, {}};

  for (const auto& r : rows) {
    traj.x.include(r.x);
    traj.y.include(r.y);
  }
  std::map<std::pair<int, int>, std::vector<std::pair<int, double>>> rho_series;
  std::map<int, std::vector<std::pair<int, double>>> min_series;
  for (const auto& [key, v] : series) {
    if (v.front().role != "follower") continue;
    auto s = leader_distance_series(rows, key.first, key.second);
    for (const auto& [t, d] : s) {
      rho.x.include(t);
      rho.y.include(d);
    }
    rho_series[key] = std::move(s);
  }
  for (int e : episodes) {
    auto s = min_pairwise_series(rows, e);
    for (const auto& [t, d] : s) {
      mind.x.include(t);
      mind.y.include(d);
    }
    if (!s.empty()) min_series[e] = std::move(s);
  }
  if (!min_series.empty()) mind.y.include(collision_threshold);

  traj.x.finalize();
  traj.y.finalize();
  rho.x.finalize();
  rho.y.finalize();
  mind.x.finalize();
  mind.y.finalize();

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
      << format_double(kSvgWidth) << "\" height=\"" << format_double(kSvgHeight)
      << "\" viewBox=\"0 0 " << format_double(kSvgWidth) << " "
      << format_double(kSvgHeight) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  detail::draw_axes(svg, traj, "Trajectories", "x [m]", "y [m]");
  detail::draw_axes(svg, rho, "Leader distance", "step", "rho [m]");
  detail::draw_axes(svg, mind, "Min pairwise distance", "step",
                    "distance [m]");

  int color_index = 0;
  for (const auto& [key, v] : series) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(v.size());
    for (const auto& r : v) pts.push_back({r.x, r.y});
    const bool leader = v.front().role == "leader";
    const char* stroke =
        leader ? "#000000"
               : detail::kPalette[color_index++ % 10];
    detail::draw_polyline(svg, traj, pts, stroke, leader);
  }
  color_index = 0;
  for (const auto& [key, s] : rho_series) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(s.size());
    for (const auto& [t, d] : s) pts.push_back({static_cast<double>(t), d});
    detail::draw_polyline(svg, rho, pts, detail::kPalette[color_index++ % 10],
                          false);
  }
  color_index = 0;
  for (const auto& [e, s] : min_series) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(s.size());
    for (const auto& [t, d] : s) pts.push_back({static_cast<double>(t), d});
    detail::draw_polyline(svg, mind, pts,
                          detail::kPalette[color_index++ % 10], false);
  }
  if (!min_series.empty()) {
    // collision threshold marker
    std::vector<std::pair<double, double>> line = {
        {mind.x.lo, collision_threshold}, {mind.x.hi, collision_threshold}};
    detail::draw_polyline(svg, mind, line, "#d62728", true);
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace flocksim
