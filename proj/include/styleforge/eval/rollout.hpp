#pragma once

#include <functional>
#include <string>
#include <vector>

#include "styleforge/nn/models.hpp"
#include "styleforge/sim/frame.hpp"
#include "styleforge/sim/render.hpp"
#include "styleforge/sim/track.hpp"
#include "styleforge/style/driver.hpp"

namespace styleforge::eval {

struct PolicyInput {
  const sim::VehicleState& state;
  const sim::TrackFrame& frame;
  const sim::Observation* observation;  // null when the rollout does not render
  double target_speed;
};

using Policy = std::function<sim::ActionTriple(const PolicyInput&)>;

// Scripted demonstrator; the rollout's target speed replaces params.target_speed.
Policy scripted_policy(style::StyleParams params, sim::VehicleParams vehicle, double dt);
// BDM alone or BDM -> PB. The models must outlive the policy.
Policy model_policy(const nn::BdmModel& bdm, const nn::PbModel* pb);

struct TrajectoryStep {
  double t = 0.0;
  sim::VehicleState state;
  sim::ActionTriple action;
  double s = 0.0;
  double progress = 0.0;  // unwrapped arc length since the start
  double cross_track_error = 0.0;
  double curvature = 0.0;
  sim::SectionType section = sim::SectionType::straight;
};

enum class Termination { laps_completed, max_steps, off_track, stopped };
std::string to_string(Termination t);

struct Trajectory {
  std::string name;
  std::string track_id;
  double dt = sim::kDefaultDt;
  double track_length = 0.0;
  double target_speed = 0.0;
  std::vector<TrajectoryStep> steps;
  Termination termination = Termination::max_steps;
  int laps_completed = 0;

  bool completed() const noexcept { return termination == Termination::laps_completed; }
  double max_abs_cte() const noexcept;
};

struct RolloutConfig {
  double target_speed = 20.0;
  int laps = 2;
  std::size_t max_steps = 20000;
  double dt = sim::kDefaultDt;
  double start_s = 0.0;
  double start_speed = 0.0;
  bool render = true;
  // Give up once the vehicle has sat still this long after having moved.
  double stall_timeout = 10.0;
  sim::VehicleParams vehicle;
  sim::CameraConfig camera;
};

// Steps the simulator from rest at start_s, aligned with the centerline.
// Stops after the requested laps (or the end of an open track), max_steps,
// a stall, or leaving the road.
Trajectory rollout(const Policy& policy, const sim::TrackGeometry& track, const RolloutConfig& config,
                   std::string name = "run");

// Stable digest over the numeric content of a trajectory.
std::string trajectory_digest(const Trajectory& traj);

}  // namespace styleforge::eval
