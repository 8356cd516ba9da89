#include "styleforge/sim/track.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "styleforge/common/byte_io.hpp"
#include "styleforge/common/errors.hpp"

namespace styleforge::sim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kCloseTolPos = 1e-6;
constexpr double kCloseTolHeading = 1e-8;

double wrap_two_pi(double a) noexcept {
  a = std::fmod(a, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  return a;
}

}  // namespace

const char* to_string(SectionType t) noexcept {
  switch (t) {
    case SectionType::straight: return "straight";
    case SectionType::left: return "left";
    case SectionType::right: return "right";
  }
  return "?";
}

SectionType section_type_from_string(const std::string& s) {
  if (s == "straight") return SectionType::straight;
  if (s == "left") return SectionType::left;
  if (s == "right") return SectionType::right;
  throw DataError("unknown section type '" + s + "'");
}

double normalize_angle(double a) noexcept {
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

Pose PlacedSegment::pose_at(double t) const noexcept {
  if (curvature == 0.0) {
    return {start.x + t * std::cos(start.heading), start.y + t * std::sin(start.heading), start.heading};
  }
  const double heading = start.heading + curvature * t;
  const double inv = 1.0 / curvature;
  return {center_x + inv * std::sin(heading), center_y - inv * std::cos(heading), normalize_angle(heading)};
}

SectionType PlacedSegment::type() const noexcept {
  if (curvature > 0.0) return SectionType::left;
  if (curvature < 0.0) return SectionType::right;
  return SectionType::straight;
}

double TrackGeometry::wrap(double s) const noexcept {
  if (closed_) {
    double w = std::fmod(s, total_length_);
    if (w < 0.0) w += total_length_;
    if (w >= total_length_) w = 0.0;
    return w;
  }
  return std::clamp(s, 0.0, total_length_);
}

std::size_t TrackGeometry::segment_index(double s) const noexcept {
  const double w = wrap(s);
  auto it = std::upper_bound(segments_.begin(), segments_.end(), w,
                             [](double v, const PlacedSegment& seg) { return v < seg.s_begin; });
  return static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - segments_.begin()) - 1));
}

double TrackGeometry::curvature(double s) const noexcept { return segments_[segment_index(s)].curvature; }

SectionType TrackGeometry::section_type(double s) const noexcept { return segments_[segment_index(s)].type(); }

Pose TrackGeometry::point_at(double s) const noexcept {
  const double w = wrap(s);
  const auto& seg = segments_[segment_index(w)];
  return seg.pose_at(std::min(w - seg.s_begin, seg.length));
}

double TrackGeometry::max_abs_curvature(double s, double length) const noexcept {
  const double w = wrap(s);
  std::size_t idx = segment_index(w);
  double local = w - segments_[idx].s_begin;
  double remaining = std::max(0.0, length);
  double best = 0.0;
  for (std::size_t guard = 0; guard <= segments_.size(); ++guard) {
    const auto& seg = segments_[idx];
    best = std::max(best, std::abs(seg.curvature));
    const double covered = seg.length - local;
    if (covered > remaining) break;
    remaining -= covered;
    local = 0.0;
    if (++idx == segments_.size()) {
      if (!closed_) break;
      idx = 0;
    }
  }
  return best;
}

NearestPoint TrackGeometry::nearest(double x, double y) const noexcept {
  NearestPoint best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (const auto& seg : segments_) {
    const double bdx = x - seg.bound_x;
    const double bdy = y - seg.bound_y;
    const double lower = std::sqrt(bdx * bdx + bdy * bdy) - seg.bound_r;
    if (lower > 0.0 && lower * lower >= best_d2) continue;

    double t = 0.0;
    if (seg.curvature == 0.0) {
      const double c = std::cos(seg.start.heading);
      const double sn = std::sin(seg.start.heading);
      t = std::clamp((x - seg.start.x) * c + (y - seg.start.y) * sn, 0.0, seg.length);
    } else {
      const double beta = std::atan2(y - seg.center_y, x - seg.center_x);
      const double sign = seg.curvature > 0.0 ? 1.0 : -1.0;
      const double delta = wrap_two_pi(sign * (beta - seg.start_angle));
      const double sweep = seg.length / seg.radius;
      if (delta <= sweep) {
        t = delta * seg.radius;
      } else {
        t = (delta - sweep) < (kTwoPi - delta) ? seg.length : 0.0;
      }
    }
    const Pose foot = seg.pose_at(t);
    const double dx = x - foot.x;
    const double dy = y - foot.y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2) {
      best_d2 = d2;
      best.s = seg.s_begin + t;
      best.tangent_heading = foot.heading;
      best.cte = std::cos(foot.heading) * dy - std::sin(foot.heading) * dx;
      best.distance = std::sqrt(d2);
    }
  }
  if (closed_ && best.s >= total_length_) best.s -= total_length_;
  return best;
}

TrackGeometry build_track(const TrackSpec& spec) {
  if (spec.segments.empty()) throw GeometryError("track has no segments");
  if (!(spec.lane_half_width > 0.0)) throw GeometryError("lane_half_width must be positive");

  TrackGeometry geom;
  geom.id_ = spec.id;
  geom.lane_half_width_ = spec.lane_half_width;
  geom.closed_ = spec.closed;

  Pose pose;
  double s = 0.0;
  for (std::size_t i = 0; i < spec.segments.size(); ++i) {
    PlacedSegment seg;
    seg.start = pose;
    seg.s_begin = s;
    if (const auto* st = std::get_if<Straight>(&spec.segments[i])) {
      if (!(st->length > 0.0))
        throw GeometryError("segment " + std::to_string(i) + ": straight length must be positive");
      seg.length = st->length;
      const Pose mid = seg.pose_at(0.5 * seg.length);
      seg.bound_x = mid.x;
      seg.bound_y = mid.y;
      seg.bound_r = 0.5 * seg.length;
    } else {
      const auto& arc = std::get<Arc>(spec.segments[i]);
      if (!(arc.radius > spec.lane_half_width))
        throw GeometryError("segment " + std::to_string(i) + ": arc radius must exceed lane_half_width");
      if (!(arc.sweep > 0.0 && arc.sweep <= kTwoPi + 1e-12))
        throw GeometryError("segment " + std::to_string(i) + ": arc sweep must lie in (0, 2pi]");
      const double sign = arc.turn == Turn::left ? 1.0 : -1.0;
      seg.radius = arc.radius;
      seg.curvature = sign / arc.radius;
      seg.length = arc.radius * arc.sweep;
      seg.center_x = pose.x - sign * arc.radius * std::sin(pose.heading);
      seg.center_y = pose.y + sign * arc.radius * std::cos(pose.heading);
      seg.start_angle = std::atan2(pose.y - seg.center_y, pose.x - seg.center_x);
      seg.bound_x = seg.center_x;
      seg.bound_y = seg.center_y;
      seg.bound_r = arc.radius;
    }
    pose = seg.pose_at(seg.length);
    s += seg.length;
    geom.segments_.push_back(seg);
  }
  geom.total_length_ = s;

  if (spec.closed) {
    const double gap = std::hypot(pose.x, pose.y);
    const double heading_gap = std::abs(normalize_angle(pose.heading));
    if (gap > kCloseTolPos || heading_gap > kCloseTolHeading) {
      std::ostringstream msg;
      msg.precision(6);
      msg << "closed track does not close: position gap " << gap << " m, heading gap " << heading_gap
          << " rad";
      throw GeometryError(msg.str());
    }
  }
  return geom;
}

TrackSpec track_spec_from_json(const nlohmann::json& j) {
  try {
    TrackSpec spec;
    const int version = j.value("version", 1);
    if (version != 1) throw GeometryError("unsupported track file version " + std::to_string(version));
    spec.id = j.value("id", std::string("track"));
    spec.lane_half_width = j.at("lane_half_width").get<double>();
    spec.closed = j.at("closed").get<bool>();
    for (const auto& seg : j.at("segments")) {
      const std::string type = seg.at("type").get<std::string>();
      if (type == "straight") {
        spec.segments.push_back(Straight{seg.at("length").get<double>()});
      } else if (type == "arc") {
        Arc arc;
        arc.radius = seg.at("radius").get<double>();
        arc.sweep = seg.contains("sweep_deg") ? seg.at("sweep_deg").get<double>() * std::numbers::pi / 180.0
                                              : seg.at("sweep").get<double>();
        const std::string turn = seg.at("turn").get<std::string>();
        if (turn != "left" && turn != "right") throw GeometryError("arc turn must be left or right");
        arc.turn = turn == "left" ? Turn::left : Turn::right;
        spec.segments.push_back(arc);
      } else {
        throw GeometryError("unknown segment type '" + type + "'");
      }
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw GeometryError(std::string("malformed track file: ") + e.what());
  }
}

nlohmann::json track_spec_to_json(const TrackSpec& spec) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& seg : spec.segments) {
    if (const auto* st = std::get_if<Straight>(&seg)) {
      segs.push_back({{"type", "straight"}, {"length", st->length}});
    } else {
      const auto& arc = std::get<Arc>(seg);
      segs.push_back({{"type", "arc"},
                      {"radius", arc.radius},
                      {"sweep", arc.sweep},
                      {"turn", arc.turn == Turn::left ? "left" : "right"}});
    }
  }
  return {{"version", 1},
          {"id", spec.id},
          {"lane_half_width", spec.lane_half_width},
          {"closed", spec.closed},
          {"segments", segs}};
}

TrackSpec load_track_spec(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw GeometryError(path + ": " + e.what());
  }
  return track_spec_from_json(j);
}

}  // namespace styleforge::sim
