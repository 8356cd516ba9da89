#include "styleforge/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "styleforge/common/errors.hpp"

namespace styleforge::eval {

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

}  // namespace

std::vector<Point2> convex_hull(std::vector<Point2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

double polygon_area(std::span<const Point2> poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return std::abs(twice) * 0.5;
}

double GgDiagram::curve_hull_area() const {
  return section(sim::SectionType::left).hull_area + section(sim::SectionType::right).hull_area;
}

GgDiagram gg_diagram(const Trajectory& traj) {
  const auto& st = traj.steps;
  GgDiagram g;
  if (st.size() < 3) throw DataError("G-G diagram needs at least 3 trajectory steps");
  const std::size_t n = st.size();
  g.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double a_long;
    if (i == 0)
      a_long = (st[1].state.speed - st[0].state.speed) / traj.dt;
    else if (i + 1 == n)
      a_long = (st[n - 1].state.speed - st[n - 2].state.speed) / traj.dt;
    else
      a_long = (st[i + 1].state.speed - st[i - 1].state.speed) / (2.0 * traj.dt);
    const double v = st[i].state.speed;
    g.points[i] = {a_long, v * v * st[i].curvature, st[i].section};
  }
  std::array<std::vector<Point2>, 3> clouds;
  for (const auto& p : g.points) clouds[static_cast<int>(p.section)].push_back({p.a_long, p.a_lat});
  for (int k = 0; k < 3; ++k) {
    auto& sum = g.sections[k];
    const auto& c = clouds[k];
    sum.count = c.size();
    if (c.empty()) continue;
    sum.a_long_min = sum.a_long_max = c[0].x;
    sum.a_lat_min = sum.a_lat_max = c[0].y;
    for (const auto& p : c) {
      sum.a_long_min = std::min(sum.a_long_min, p.x);
      sum.a_long_max = std::max(sum.a_long_max, p.x);
      sum.a_lat_min = std::min(sum.a_lat_min, p.y);
      sum.a_lat_max = std::max(sum.a_lat_max, p.y);
    }
    const auto hull = convex_hull(c);
    sum.hull_area = polygon_area(hull);
  }
  return g;
}

DistanceResult distance_to_target_speed(const Trajectory& traj, double event_progress, double target, double tol,
                                        double sustain) {
  DistanceResult r;
  const auto& st = traj.steps;
  std::size_t i = 0;
  while (i < st.size() && st[i].progress < event_progress) ++i;
  if (i == st.size()) throw DataError("event lies beyond the end of the trajectory");
  std::ptrdiff_t run_start = -1;
  for (; i < st.size(); ++i) {
    r.max_speed = std::max(r.max_speed, st[i].state.speed);
    if (std::abs(st[i].state.speed - target) <= tol) {
      if (run_start < 0) run_start = static_cast<std::ptrdiff_t>(i);
      // Ties within a few ulps of the sustain time count as sustained.
      if (st[i].t - st[run_start].t >= sustain - 1e-9) {
        r.reached = true;
        r.distance = std::max(0.0, st[run_start].progress - event_progress);
        return r;
      }
    } else {
      run_start = -1;
    }
  }
  return r;
}

namespace {

// Occurrences within the trajectory of track position s_b, as unwrapped progress > 0.
std::vector<double> occurrences(const Trajectory& traj, const sim::TrackGeometry& track, double s_b) {
  std::vector<double> out;
  if (traj.steps.empty()) return out;
  const double s0 = traj.steps.front().s;
  const double last = traj.steps.back().progress;
  const double length = track.total_length();
  if (!track.closed()) {
    const double p = s_b - s0;
    if (p > 0.0 && p <= last) out.push_back(p);
    return out;
  }
  double p = std::fmod(s_b - s0, length);
  if (p < 0.0) p += length;
  if (p == 0.0) p = length;
  for (; p <= last; p += length) out.push_back(p);
  return out;
}

template <typename Pred>
std::vector<double> boundary_events(const Trajectory& traj, const sim::TrackGeometry& track, Pred pred) {
  const auto& segs = track.segments();
  std::vector<double> out;
  for (std::size_t k = 0; k < segs.size(); ++k) {
    const bool has_prev = k > 0 || track.closed();
    if (!has_prev) continue;
    const auto& prev = segs[(k + segs.size() - 1) % segs.size()];
    if (!pred(prev, segs[k])) continue;
    for (double p : occurrences(traj, track, segs[k].s_begin)) out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<double> curve_exit_events(const Trajectory& traj, const sim::TrackGeometry& track) {
  return boundary_events(traj, track, [](const sim::PlacedSegment& a, const sim::PlacedSegment& b) {
    return a.curvature != 0.0 && b.curvature == 0.0;
  });
}

std::vector<double> curve_entry_events(const Trajectory& traj, const sim::TrackGeometry& track) {
  return boundary_events(traj, track, [](const sim::PlacedSegment& a, const sim::PlacedSegment& b) {
    return a.curvature == 0.0 && b.curvature != 0.0;
  });
}

std::optional<double> headline_exit_event(const Trajectory& traj, const sim::TrackGeometry& track) {
  const auto& segs = track.segments();
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < segs.size(); ++k) {
    if (segs[k].curvature != 0.0 || (k == 0 && !track.closed())) continue;
    if (segs[(k + segs.size() - 1) % segs.size()].curvature == 0.0) continue;
    if (!best || segs[k].length > segs[*best].length) best = k;
  }
  if (!best) return std::nullopt;
  const auto occ = occurrences(traj, track, segs[*best].s_begin);
  if (occ.empty()) return std::nullopt;
  return occ.front();
}

std::optional<double> speed_before(const Trajectory& traj, double progress) {
  std::optional<double> v;
  for (const auto& s : traj.steps) {
    if (s.progress >= progress) break;
    v = s.state.speed;
  }
  return v;
}

double abs_percentile(std::span<const double> values, double q) {
  if (values.empty()) return 0.0;
  std::vector<double> a(values.size());
  std::transform(values.begin(), values.end(), a.begin(), [](double v) { return std::abs(v); });
  std::sort(a.begin(), a.end());
  const double pos = q * static_cast<double>(a.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, a.size() - 1);
  return a[lo] + (a[hi] - a[lo]) * (pos - static_cast<double>(lo));
}

double MetricsReport::max_curve_entry_speed() const {
  double m = 0.0;
  for (double v : curve_entry_speeds) m = std::max(m, v);
  return m;
}

const DistanceEvent* MetricsReport::headline() const {
  for (const auto& d : distances)
    if (d.event == "curve_exit") return &d;
  return nullptr;
}

namespace {

nlohmann::json section_json(const SectionSummary& s) {
  return {{"count", s.count},         {"a_long_min", s.a_long_min}, {"a_long_max", s.a_long_max},
          {"a_lat_min", s.a_lat_min}, {"a_lat_max", s.a_lat_max},   {"hull_area", s.hull_area}};
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json sec;
  for (int k = 0; k < 3; ++k) sec[sim::to_string(static_cast<sim::SectionType>(k))] = section_json(sections[k]);
  nlohmann::json dist = nlohmann::json::array();
  for (const auto& d : distances)
    dist.push_back({{"event", d.event},
                    {"progress", d.progress},
                    {"reached", d.result.reached},
                    {"distance", d.result.reached ? nlohmann::json(d.result.distance) : nlohmann::json(nullptr)},
                    {"max_speed", d.result.max_speed}});
  return {{"name", name},
          {"track", track_id},
          {"target_speed", target_speed},
          {"tol", tol},
          {"steps", steps},
          {"termination", termination},
          {"laps_completed", laps_completed},
          {"max_abs_cte", max_abs_cte},
          {"lane_half_width", lane_half_width},
          {"sections", sec},
          {"curve_hull_area", curve_hull_area},
          {"a_long_min", a_long_min},
          {"a_long_max", a_long_max},
          {"a_long_p95_abs", a_long_p95_abs},
          {"distance_to_target_speed", dist},
          {"curve_entry_speeds", curve_entry_speeds}};
}

MetricsReport compute_metrics(const Trajectory& traj, const sim::TrackGeometry& track, const MetricsConfig& config) {
  MetricsReport r;
  r.name = traj.name;
  r.track_id = traj.track_id;
  r.target_speed = traj.target_speed;
  r.tol = config.tol;
  r.steps = traj.steps.size();
  r.termination = to_string(traj.termination);
  r.laps_completed = traj.laps_completed;
  r.max_abs_cte = traj.max_abs_cte();
  r.lane_half_width = track.lane_half_width();
  if (traj.steps.size() < 3) return r;

  const GgDiagram g = gg_diagram(traj);
  r.sections = g.sections;
  r.curve_hull_area = g.curve_hull_area();
  std::vector<double> along;
  along.reserve(g.points.size());
  for (const auto& p : g.points) along.push_back(p.a_long);
  r.a_long_min = *std::min_element(along.begin(), along.end());
  r.a_long_max = *std::max_element(along.begin(), along.end());
  r.a_long_p95_abs = abs_percentile(along, 0.95);

  if (auto ev = headline_exit_event(traj, track))
    r.distances.push_back({"curve_exit", *ev,
                           distance_to_target_speed(traj, *ev, traj.target_speed, config.tol, config.sustain)});
  r.distances.push_back(
      {"start", 0.0, distance_to_target_speed(traj, 0.0, traj.target_speed, config.tol, config.sustain)});
  for (double p : curve_entry_events(traj, track))
    if (auto v = speed_before(traj, p)) r.curve_entry_speeds.push_back(*v);
  return r;
}

}  // namespace styleforge::eval
