#include "styleforge/style/driver.hpp"

#include <algorithm>
#include <cmath>

#include "styleforge/common/byte_io.hpp"
#include "styleforge/common/errors.hpp"

namespace styleforge::style {

void StyleParams::validate() const {
  if (!(target_speed > 0 && curve_speed_factor > 0 && curve_speed_factor <= 1.0 &&
        anticipation_distance > 0 && throttle_kp > 0 && brake_kp > 0 && max_jerk > 0 && lookahead > 0))
    throw ConfigError("style parameters must be positive (curve_speed_factor in (0, 1])");
  if (anticipation_distance > 500.0) throw ConfigError("anticipation_distance must be <= 500 m");
}

double speed_limit(double curvature, const StyleParams& params) noexcept {
  if (curvature == 0.0) return params.target_speed;
  return std::min(params.target_speed,
                  params.curve_speed_factor * std::sqrt(kComfortLateralAccel / std::abs(curvature)));
}

double plan_target_speed(const sim::TrackFrame& frame, const StyleParams& params) noexcept {
  // speed_limit is decreasing in |curvature|, so the window minimum sits at
  // the sharpest segment.
  const double kappa = frame.geometry->max_abs_curvature(frame.s, params.anticipation_distance);
  return speed_limit(kappa, params);
}

sim::ActionTriple longitudinal_command(double accel_cmd, double speed, const sim::VehicleParams& vehicle) {
  sim::ActionTriple a;
  if (accel_cmd >= 0.0) {
    const double authority = vehicle.throttle_gain * (1.0 - speed / vehicle.max_speed);
    const double needed = accel_cmd + vehicle.drag_coeff * speed;
    a.throttle = authority > 0.0 ? std::clamp(needed / authority, 0.0, 1.0) : 1.0;
  } else {
    a.brake = std::clamp(-accel_cmd / vehicle.brake_gain, 0.0, 1.0);
  }
  return a;
}

double pure_pursuit_steering(const sim::VehicleState& state, const sim::TrackFrame& frame, double lookahead,
                             const sim::VehicleParams& vehicle) {
  const sim::Pose target = frame.geometry->point_at(frame.s + lookahead);
  const double dx = target.x - state.x;
  const double dy = target.y - state.y;
  const double local_x = std::cos(state.heading) * dx + std::sin(state.heading) * dy;
  const double local_y = -std::sin(state.heading) * dx + std::cos(state.heading) * dy;
  const double dist = std::hypot(local_x, local_y);
  if (dist <= 0.0) return 0.0;
  const double alpha = std::atan2(local_y, local_x);
  const double delta = std::atan(2.0 * vehicle.wheelbase * std::sin(alpha) / dist);
  return std::clamp(delta / vehicle.max_steer, -1.0, 1.0);
}

sim::ActionTriple control(const sim::VehicleState& state, const sim::TrackFrame& frame,
                          const StyleParams& params, const sim::VehicleParams& vehicle, DriverState& memory,
                          double dt) {
  const double planned = plan_target_speed(frame, params);
  const double error = planned - state.speed;
  const double desired = error >= 0.0 ? params.throttle_kp * error : params.brake_kp * error;
  const double max_change = params.max_jerk * dt;
  memory.accel_cmd = std::clamp(desired, memory.accel_cmd - max_change, memory.accel_cmd + max_change);

  sim::ActionTriple a = longitudinal_command(memory.accel_cmd, state.speed, vehicle);
  a.steering = pure_pursuit_steering(state, frame, params.lookahead, vehicle);
  return a;
}

StyleParams style_params_from_json(const nlohmann::json& j) {
  StyleParams p;
  try {
    p.target_speed = j.at("target_speed").get<double>();
    p.curve_speed_factor = j.at("curve_speed_factor").get<double>();
    p.anticipation_distance = j.at("anticipation_distance").get<double>();
    p.throttle_kp = j.at("throttle_kp").get<double>();
    p.brake_kp = j.at("brake_kp").get<double>();
    p.max_jerk = j.at("max_jerk").get<double>();
    p.lookahead = j.at("lookahead").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed style parameters: ") + e.what());
  }
  p.validate();
  return p;
}

nlohmann::json style_params_to_json(const StyleParams& p) {
  return {{"target_speed", p.target_speed},
          {"curve_speed_factor", p.curve_speed_factor},
          {"anticipation_distance", p.anticipation_distance},
          {"throttle_kp", p.throttle_kp},
          {"brake_kp", p.brake_kp},
          {"max_jerk", p.max_jerk},
          {"lookahead", p.lookahead}};
}

std::vector<StylePreset> load_presets(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (j.value("version", 1) != 1) throw ConfigError(path + ": unsupported preset file version");
  std::vector<StylePreset> out;
  for (const auto& [name, params] : j.at("presets").items()) out.push_back({name, style_params_from_json(params)});
  return out;
}

StylePreset find_preset(const std::vector<StylePreset>& presets, const std::string& name) {
  for (const auto& p : presets)
    if (p.name == name) return p;
  throw ConfigError("no preset named '" + name + "'");
}

StylePreset preset_a() {
  StyleParams p;
  p.target_speed = 20.0;
  p.curve_speed_factor = 1.0;
  p.anticipation_distance = 110.0;
  p.throttle_kp = 0.25;
  p.brake_kp = 0.35;
  p.max_jerk = 1.5;
  p.lookahead = 14.0;
  return {"A", p};
}

StylePreset preset_b() {
  StyleParams p;
  p.target_speed = 20.0;
  p.curve_speed_factor = 1.0;
  p.anticipation_distance = 30.0;
  p.throttle_kp = 1.2;
  p.brake_kp = 1.6;
  p.max_jerk = 12.0;
  p.lookahead = 14.0;
  return {"B", p};
}

}  // namespace styleforge::style
