#pragma once

#include "styleforge/sim/track.hpp"
#include "styleforge/sim/vehicle.hpp"

namespace styleforge::sim {

// Road-frame view of a vehicle state.
struct TrackFrame {
  double s = 0.0;
  double cross_track_error = 0.0;  // left positive
  double heading_error = 0.0;
  const TrackGeometry* geometry = nullptr;

  double curvature_ahead(double d) const noexcept { return geometry->curvature(s + d); }
  SectionType section() const noexcept { return geometry->section_type(s); }
};

inline constexpr double kOffTrackFactor = 5.0;

// Throws OffTrackError when the vehicle is farther than
// kOffTrackFactor * lane_half_width from the centerline.
TrackFrame track_frame(const VehicleState& state, const TrackGeometry& geometry);

}  // namespace styleforge::sim
