#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "styleforge/eval/rollout.hpp"

namespace styleforge::eval {

struct GgPoint {
  double a_long = 0.0;
  double a_lat = 0.0;
  sim::SectionType section = sim::SectionType::straight;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

// Counter-clockwise hull without collinear points (Andrew's monotone chain).
std::vector<Point2> convex_hull(std::vector<Point2> points);
double polygon_area(std::span<const Point2> polygon);

struct SectionSummary {
  std::size_t count = 0;
  double a_long_min = 0.0, a_long_max = 0.0;
  double a_lat_min = 0.0, a_lat_max = 0.0;
  double hull_area = 0.0;
};

struct GgDiagram {
  std::vector<GgPoint> points;
  std::array<SectionSummary, 3> sections;  // indexed by SectionType

  const SectionSummary& section(sim::SectionType t) const { return sections[static_cast<int>(t)]; }
  // Left plus right hull areas; the two clouds sit on opposite sides of a_lat = 0.
  double curve_hull_area() const;
};

// a_long by central differences of speed (one-sided at the ends), a_lat = v^2 * curvature.
GgDiagram gg_diagram(const Trajectory& traj);

struct DistanceResult {
  bool reached = false;
  double distance = 0.0;   // m, from the event to the start of the sustained window
  double max_speed = 0.0;  // m/s after the event, reported when unreached
};

// Arc length from event_progress to the first step where |speed - target| <= tol
// holds continuously for at least sustain seconds.
DistanceResult distance_to_target_speed(const Trajectory& traj, double event_progress, double target, double tol,
                                        double sustain = 1.0);

// Unwrapped progress values of curve exits (arc followed by a straight) and
// curve entries within the trajectory.
std::vector<double> curve_exit_events(const Trajectory& traj, const sim::TrackGeometry& track);
std::vector<double> curve_entry_events(const Trajectory& traj, const sim::TrackGeometry& track);

// First exit after the start onto the longest straight, the event used for
// the headline distance metric.
std::optional<double> headline_exit_event(const Trajectory& traj, const sim::TrackGeometry& track);

// Speed at the last step before the given progress.
std::optional<double> speed_before(const Trajectory& traj, double progress);

double abs_percentile(std::span<const double> values, double q);

struct DistanceEvent {
  std::string event;  // "curve_exit" or "start"
  double progress = 0.0;
  DistanceResult result;
};

struct MetricsConfig {
  double tol = 0.25;
  double sustain = 1.0;
};

struct MetricsReport {
  std::string name;
  std::string track_id;
  double target_speed = 0.0;
  double tol = 0.25;
  std::size_t steps = 0;
  std::string termination;
  int laps_completed = 0;
  double max_abs_cte = 0.0;
  double lane_half_width = 0.0;
  std::array<SectionSummary, 3> sections;
  double curve_hull_area = 0.0;
  double a_long_min = 0.0, a_long_max = 0.0;
  double a_long_p95_abs = 0.0;
  std::vector<DistanceEvent> distances;  // headline event first, then the start event
  std::vector<double> curve_entry_speeds;

  double max_curve_entry_speed() const;
  const DistanceEvent* headline() const;
  nlohmann::json to_json() const;
};

MetricsReport compute_metrics(const Trajectory& traj, const sim::TrackGeometry& track,
                              const MetricsConfig& config = {});

}  // namespace styleforge::eval
