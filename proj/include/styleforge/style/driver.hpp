#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "styleforge/sim/frame.hpp"
#include "styleforge/sim/vehicle.hpp"

namespace styleforge::style {

// Comfort bound on lateral acceleration used to derive curve speeds.
inline constexpr double kComfortLateralAccel = 3.0;  // m/s^2

struct StyleParams {
  double target_speed = 20.0;           // m/s, V^g on straights
  double curve_speed_factor = 1.0;      // (0, 1]
  double anticipation_distance = 100.0; // m, <= 500
  double throttle_kp = 0.3;             // (m/s^2) per (m/s)
  double brake_kp = 0.3;
  double max_jerk = 2.0;                // m/s^3
  double lookahead = 14.0;              // m

  void validate() const;
  bool operator==(const StyleParams&) const = default;
};

struct StylePreset {
  std::string name;
  StyleParams params;
};

double speed_limit(double curvature, const StyleParams& params) noexcept;

// Lowest speed limit over the window [s, s + anticipation_distance].
double plan_target_speed(const sim::TrackFrame& frame, const StyleParams& params) noexcept;

// Carried between control calls; holds the last commanded acceleration for
// the jerk limit.
struct DriverState {
  double accel_cmd = 0.0;
};

// Pure-pursuit steering plus a jerk-limited proportional speed controller.
// Throttle and brake are never both nonzero.
sim::ActionTriple control(const sim::VehicleState& state, const sim::TrackFrame& frame,
                          const StyleParams& params, const sim::VehicleParams& vehicle, DriverState& memory,
                          double dt);

// Maps a commanded longitudinal acceleration to throttle/brake.
sim::ActionTriple longitudinal_command(double accel_cmd, double speed, const sim::VehicleParams& vehicle);
double pure_pursuit_steering(const sim::VehicleState& state, const sim::TrackFrame& frame, double lookahead,
                             const sim::VehicleParams& vehicle);

// Preset file: {"version":1,"presets":{"A":{...StyleParams...},"B":{...}}}
StyleParams style_params_from_json(const nlohmann::json& j);
nlohmann::json style_params_to_json(const StyleParams& p);
std::vector<StylePreset> load_presets(const std::string& path);
StylePreset find_preset(const std::vector<StylePreset>& presets, const std::string& name);

// The two shipped presets. B accelerates and brakes harder and starts
// slowing later than A.
StylePreset preset_a();
StylePreset preset_b();

}  // namespace styleforge::style
