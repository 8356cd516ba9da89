#include "styleforge/sim/frame.hpp"

#include <sstream>

#include "styleforge/common/errors.hpp"

namespace styleforge::sim {

TrackFrame track_frame(const VehicleState& state, const TrackGeometry& geometry) {
  const NearestPoint np = geometry.nearest(state.x, state.y);
  const double limit = kOffTrackFactor * geometry.lane_half_width();
  if (np.distance > limit) {
    std::ostringstream msg;
    msg << "vehicle off track: " << np.distance << " m from centerline (limit " << limit << " m)";
    throw OffTrackError(msg.str(), np.distance);
  }
  TrackFrame f;
  f.s = np.s;
  f.cross_track_error = np.cte;
  f.heading_error = normalize_angle(state.heading - np.tangent_heading);
  f.geometry = &geometry;
  return f;
}

}  // namespace styleforge::sim
