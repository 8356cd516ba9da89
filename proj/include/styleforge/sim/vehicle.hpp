#pragma once

#include <nlohmann/json.hpp>

namespace styleforge::sim {

struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // rad, (-pi, pi]
  double speed = 0.0;    // m/s, >= 0
};

struct VehicleParams {
  double wheelbase = 2.7;       // m
  double max_speed = 40.0;      // m/s
  double max_steer = 0.5;       // rad
  double throttle_gain = 8.0;   // m/s^2 per unit throttle
  double brake_gain = 8.0;      // m/s^2 per unit brake
  double drag_coeff = 0.05;     // 1/s

  void validate() const;
};

nlohmann::json vehicle_to_json(const VehicleParams& p);
VehicleParams vehicle_from_json(const nlohmann::json& j);

// (steering, throttle, brake). Steering is normalized to [-1, 1] and scaled
// by max_steer inside the dynamics.
struct ActionTriple {
  double steering = 0.0;
  double throttle = 0.0;
  double brake = 0.0;

  ActionTriple clamped() const noexcept;
  bool in_range() const noexcept;
  bool operator==(const ActionTriple&) const = default;
};

inline constexpr double kDefaultDt = 0.05;

// Kinematic bicycle with a first-order longitudinal law. Inputs are clamped;
// identical inputs give bit-identical outputs.
VehicleState step(const VehicleState& state, const ActionTriple& action, const VehicleParams& params,
                  double dt);

}  // namespace styleforge::sim
