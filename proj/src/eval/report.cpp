#include "styleforge/eval/report.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "styleforge/common/byte_io.hpp"

namespace styleforge::eval {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::string trajectory_csv(const Trajectory& traj) {
  std::ostringstream out;
  out << "#format=styleforge-trajectory,version=" << kReportVersion << ",name=" << traj.name
      << ",track=" << traj.track_id << ",dt=" << num(traj.dt) << ",termination=" << to_string(traj.termination)
      << "\n";
  out << "t,x,y,heading,speed,steering,throttle,brake,s,progress,cte,curvature,section,a_long,a_lat\n";
  if (traj.steps.size() < 3) return out.str();
  const GgDiagram g = gg_diagram(traj);
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const auto& s = traj.steps[i];
    out << num(s.t) << ',' << num(s.state.x) << ',' << num(s.state.y) << ',' << num(s.state.heading) << ','
        << num(s.state.speed) << ',' << num(s.action.steering) << ',' << num(s.action.throttle) << ','
        << num(s.action.brake) << ',' << num(s.s) << ',' << num(s.progress) << ',' << num(s.cross_track_error)
        << ',' << num(s.curvature) << ',' << sim::to_string(s.section) << ',' << num(g.points[i].a_long) << ','
        << num(g.points[i].a_lat) << '\n';
  }
  return out.str();
}

std::string metrics_csv(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << "#format=styleforge-metrics,version=" << kReportVersion << "\n";
  out << "name,track,target_speed,termination,laps_completed,max_abs_cte,a_long_min,a_long_max,a_long_p95_abs,"
         "straight_hull_area,left_hull_area,right_hull_area,curve_hull_area,exit_distance,exit_reached,"
         "start_distance,start_reached,max_curve_entry_speed\n";
  for (const auto& r : reports) {
    const DistanceEvent* exit = r.headline();
    const DistanceEvent* start = nullptr;
    for (const auto& d : r.distances)
      if (d.event == "start") start = &d;
    auto dist = [](const DistanceEvent* d) { return d && d->result.reached ? num(d->result.distance) : std::string(); };
    auto reached = [](const DistanceEvent* d) { return d && d->result.reached ? "1" : "0"; };
    out << r.name << ',' << r.track_id << ',' << num(r.target_speed) << ',' << r.termination << ','
        << r.laps_completed << ',' << num(r.max_abs_cte) << ',' << num(r.a_long_min) << ',' << num(r.a_long_max)
        << ',' << num(r.a_long_p95_abs) << ',' << num(r.sections[0].hull_area) << ','
        << num(r.sections[1].hull_area) << ',' << num(r.sections[2].hull_area) << ',' << num(r.curve_hull_area)
        << ',' << dist(exit) << ',' << reached(exit) << ',' << dist(start) << ',' << reached(start) << ','
        << num(r.max_curve_entry_speed()) << '\n';
  }
  return out.str();
}

nlohmann::json summary_json(const std::vector<MetricsReport>& reports) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& r : reports) models.push_back(r.to_json());
  nlohmann::json j{{"format", "styleforge-summary"}, {"version", kReportVersion}, {"models", models}};
  // Pairwise ratios against the first model, the style comparison at a glance.
  if (reports.size() >= 2) {
    nlohmann::json cmp = nlohmann::json::array();
    const auto& base = reports.front();
    for (std::size_t i = 1; i < reports.size(); ++i) {
      const auto& r = reports[i];
      nlohmann::json c{{"baseline", base.name}, {"model", r.name}};
      const auto* eb = base.headline();
      const auto* er = r.headline();
      if (eb && er && eb->result.reached && er->result.reached && eb->result.distance > 0.0)
        c["exit_distance_ratio"] = er->result.distance / eb->result.distance;
      else
        c["exit_distance_ratio"] = nullptr;
      c["curve_hull_area_ratio"] =
          base.curve_hull_area > 0.0 ? nlohmann::json(r.curve_hull_area / base.curve_hull_area) : nlohmann::json(nullptr);
      c["a_long_p95_ratio"] =
          base.a_long_p95_abs > 0.0 ? nlohmann::json(r.a_long_p95_abs / base.a_long_p95_abs) : nlohmann::json(nullptr);
      cmp.push_back(c);
    }
    j["comparisons"] = cmp;
  }
  return j;
}

EmittedFiles emit_report(const std::string& dir, const std::vector<Trajectory>& trajectories,
                         const std::vector<MetricsReport>& reports) {
  std::filesystem::create_directories(dir);
  EmittedFiles files;
  for (const auto& t : trajectories) {
    const std::string path = (std::filesystem::path(dir) / (t.name + ".csv")).string();
    write_text_file(path, trajectory_csv(t));
    files.paths.push_back(path);
  }
  const std::string metrics = (std::filesystem::path(dir) / "metrics.csv").string();
  write_text_file(metrics, metrics_csv(reports));
  files.paths.push_back(metrics);
  const std::string summary = (std::filesystem::path(dir) / "summary.json").string();
  write_text_file(summary, summary_json(reports).dump(2) + "\n");
  files.paths.push_back(summary);
  return files;
}

}  // namespace styleforge::eval
