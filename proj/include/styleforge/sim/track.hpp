#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <variant>
#include <vector>

namespace styleforge::sim {

enum class Turn { left, right };

struct Straight {
  double length = 0.0;  // m
};

struct Arc {
  double radius = 0.0;  // m
  double sweep = 0.0;   // rad, in (0, 2pi]
  Turn turn = Turn::left;
};

using Segment = std::variant<Straight, Arc>;

struct TrackSpec {
  std::string id;
  std::vector<Segment> segments;
  double lane_half_width = 3.5;  // m
  bool closed = true;
};

enum class SectionType { straight, left, right };

const char* to_string(SectionType t) noexcept;
SectionType section_type_from_string(const std::string& s);

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

// Normalizes an angle to (-pi, pi].
double normalize_angle(double a) noexcept;

// A Segment placed in the plane. Curvature is signed, left turns positive.
struct PlacedSegment {
  Pose start;
  double s_begin = 0.0;
  double length = 0.0;
  double curvature = 0.0;
  // Arc-only data; center is unused for straights.
  double center_x = 0.0;
  double center_y = 0.0;
  double radius = 0.0;
  double start_angle = 0.0;  // polar angle of start about center
  // Bounding circle used to skip segments in nearest-point queries.
  double bound_x = 0.0;
  double bound_y = 0.0;
  double bound_r = 0.0;

  Pose pose_at(double local_s) const noexcept;
  SectionType type() const noexcept;
};

struct NearestPoint {
  double s = 0.0;          // arc length of the foot point
  double cte = 0.0;        // signed offset, left positive
  double distance = 0.0;   // unsigned distance to the foot point
  double tangent_heading = 0.0;
};

// Compiled, immutable form of a TrackSpec with arc-length queries.
class TrackGeometry {
 public:
  const std::string& id() const noexcept { return id_; }
  double total_length() const noexcept { return total_length_; }
  double lane_half_width() const noexcept { return lane_half_width_; }
  bool closed() const noexcept { return closed_; }
  const std::vector<PlacedSegment>& segments() const noexcept { return segments_; }

  // Maps s into [0, total_length): wraps on closed tracks, clamps on open ones.
  double wrap(double s) const noexcept;
  std::size_t segment_index(double s) const noexcept;
  double curvature(double s) const noexcept;
  SectionType section_type(double s) const noexcept;
  Pose point_at(double s) const noexcept;
  // Largest |curvature| over [s, s + length], following the wrap rule.
  double max_abs_curvature(double s, double length) const noexcept;
  NearestPoint nearest(double x, double y) const noexcept;

 private:
  friend TrackGeometry build_track(const TrackSpec& spec);

  std::string id_;
  std::vector<PlacedSegment> segments_;
  double total_length_ = 0.0;
  double lane_half_width_ = 0.0;
  bool closed_ = false;
};

// Throws GeometryError on invariant violations, naming the closing gap for
// closed tracks that do not return to their start pose.
TrackGeometry build_track(const TrackSpec& spec);

// Track file: {"version":1,"id":..,"lane_half_width":..,"closed":..,
//   "segments":[{"type":"straight","length":..} | {"type":"arc","radius":..,
//   "sweep_deg":..|"sweep":..,"turn":"left"|"right"}]}
TrackSpec track_spec_from_json(const nlohmann::json& j);
nlohmann::json track_spec_to_json(const TrackSpec& spec);
TrackSpec load_track_spec(const std::string& path);

}  // namespace styleforge::sim
