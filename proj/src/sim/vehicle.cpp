#include "styleforge/sim/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "styleforge/common/errors.hpp"
#include "styleforge/sim/track.hpp"

namespace styleforge::sim {

void VehicleParams::validate() const {
  if (!(wheelbase > 0 && max_speed > 0 && max_steer > 0 && throttle_gain > 0 && brake_gain > 0 &&
        drag_coeff > 0))
    throw ConfigError("vehicle parameters must all be positive");
  if (!(max_steer < std::numbers::pi / 2)) throw ConfigError("max_steer must be below pi/2");
}

ActionTriple ActionTriple::clamped() const noexcept {
  return {std::clamp(steering, -1.0, 1.0), std::clamp(throttle, 0.0, 1.0), std::clamp(brake, 0.0, 1.0)};
}

bool ActionTriple::in_range() const noexcept {
  return steering >= -1.0 && steering <= 1.0 && throttle >= 0.0 && throttle <= 1.0 && brake >= 0.0 &&
         brake <= 1.0;
}

VehicleState step(const VehicleState& state, const ActionTriple& action, const VehicleParams& params,
                  double dt) {
  const ActionTriple a = action.clamped();
  const double v = state.speed;
  VehicleState next;
  next.x = state.x + v * std::cos(state.heading) * dt;
  next.y = state.y + v * std::sin(state.heading) * dt;
  next.heading =
      normalize_angle(state.heading + (v / params.wheelbase) * std::tan(a.steering * params.max_steer) * dt);
  const double accel = params.throttle_gain * a.throttle * (1.0 - v / params.max_speed) -
                       params.brake_gain * a.brake - params.drag_coeff * v;
  next.speed = std::clamp(v + accel * dt, 0.0, params.max_speed);
  return next;
}

}  // namespace styleforge::sim

namespace styleforge::sim {

nlohmann::json vehicle_to_json(const VehicleParams& p) {
  return {{"wheelbase", p.wheelbase},         {"max_speed", p.max_speed},   {"max_steer", p.max_steer},
          {"throttle_gain", p.throttle_gain}, {"brake_gain", p.brake_gain}, {"drag_coeff", p.drag_coeff}};
}

VehicleParams vehicle_from_json(const nlohmann::json& j) {
  VehicleParams p;
  try {
    p.wheelbase = j.value("wheelbase", p.wheelbase);
    p.max_speed = j.value("max_speed", p.max_speed);
    p.max_steer = j.value("max_steer", p.max_steer);
    p.throttle_gain = j.value("throttle_gain", p.throttle_gain);
    p.brake_gain = j.value("brake_gain", p.brake_gain);
    p.drag_coeff = j.value("drag_coeff", p.drag_coeff);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed vehicle config: ") + e.what());
  }
  p.validate();
  return p;
}

}  // namespace styleforge::sim
