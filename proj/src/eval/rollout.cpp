#include "styleforge/eval/rollout.hpp"

#include <algorithm>
#include <cmath>

#include "styleforge/common/byte_io.hpp"
#include "styleforge/common/digest.hpp"
#include "styleforge/common/errors.hpp"

namespace styleforge::eval {

Policy scripted_policy(style::StyleParams params, sim::VehicleParams vehicle, double dt) {
  params.validate();
  auto memory = std::make_shared<style::DriverState>();
  return [params, vehicle, dt, memory](const PolicyInput& in) mutable {
    params.target_speed = in.target_speed;
    return style::control(in.state, in.frame, params, vehicle, *memory, dt);
  };
}

Policy model_policy(const nn::BdmModel& bdm, const nn::PbModel* pb) {
  if (pb) nn::check_pair(bdm, *pb);
  return [&bdm, pb](const PolicyInput& in) {
    if (!in.observation) throw UsageError("model policies need rendered observations");
    return nn::ndst_forward(*in.observation, in.state.speed, in.target_speed, bdm, pb);
  };
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::laps_completed: return "laps_completed";
    case Termination::max_steps: return "max_steps";
    case Termination::off_track: return "off_track";
    case Termination::stopped: return "stopped";
  }
  return "unknown";
}

double Trajectory::max_abs_cte() const noexcept {
  double m = 0.0;
  for (const auto& s : steps) m = std::max(m, std::abs(s.cross_track_error));
  return m;
}

Trajectory rollout(const Policy& policy, const sim::TrackGeometry& track, const RolloutConfig& config,
                   std::string name) {
  config.vehicle.validate();
  if (config.render) config.camera.validate();
  if (!(config.dt > 0.0 && config.dt <= 0.1)) throw ConfigError("dt must lie in (0, 0.1]");

  Trajectory traj;
  traj.name = std::move(name);
  traj.track_id = track.id();
  traj.dt = config.dt;
  traj.track_length = track.total_length();
  traj.target_speed = config.target_speed;

  const double length = track.total_length();
  const double goal = track.closed() ? config.laps * length : length - config.start_s - 0.5;
  const sim::Pose start = track.point_at(config.start_s);
  sim::VehicleState state{start.x, start.y, start.heading, config.start_speed};

  double progress = 0.0;
  double prev_s = track.wrap(config.start_s);
  double still_since = -1.0;
  bool moved = config.start_speed > 0.0;
  traj.steps.reserve(std::min<std::size_t>(config.max_steps, 1 << 16));

  for (std::size_t i = 0; i < config.max_steps; ++i) {
    const double t = static_cast<double>(i) * config.dt;
    sim::TrackFrame frame;
    try {
      frame = sim::track_frame(state, track);
    } catch (const OffTrackError&) {
      traj.termination = Termination::off_track;
      break;
    }
    if (i > 0) {
      double delta = frame.s - prev_s;
      if (track.closed()) delta -= length * std::round(delta / length);
      progress += delta;
    }
    prev_s = frame.s;
    if (progress >= goal) {
      traj.termination = Termination::laps_completed;
      break;
    }

    std::optional<sim::Observation> obs;
    if (config.render) obs = sim::render_observation(state, track, config.camera);
    const sim::ActionTriple action =
        policy(PolicyInput{state, frame, obs ? &*obs : nullptr, config.target_speed}).clamped();

    TrajectoryStep step;
    step.t = t;
    step.state = state;
    step.action = action;
    step.s = frame.s;
    step.progress = progress;
    step.cross_track_error = frame.cross_track_error;
    step.curvature = track.curvature(frame.s);
    step.section = track.section_type(frame.s);
    traj.steps.push_back(step);

    if (state.speed > 0.5) moved = true;
    if (moved && state.speed < 0.01) {
      if (still_since < 0.0) still_since = t;
      if (t - still_since >= config.stall_timeout) {
        traj.termination = Termination::stopped;
        break;
      }
    } else {
      still_since = -1.0;
    }
    state = sim::step(state, action, config.vehicle, config.dt);
  }
  const double lap_length = track.closed() ? length : goal;
  traj.laps_completed = traj.completed() ? config.laps : static_cast<int>(std::floor(progress / lap_length));
  if (!track.closed() && traj.completed()) traj.laps_completed = 1;
  return traj;
}

std::string trajectory_digest(const Trajectory& traj) {
  ByteWriter w;
  w.put_string(traj.track_id);
  w.put_f64(traj.dt);
  w.put_string(to_string(traj.termination));
  for (const auto& s : traj.steps) {
    for (double v : {s.t, s.state.x, s.state.y, s.state.heading, s.state.speed, s.action.steering,
                     s.action.throttle, s.action.brake, s.s, s.progress, s.cross_track_error, s.curvature})
      w.put_f64(v);
    w.put_u8(static_cast<std::uint8_t>(s.section));
  }
  return sha256_hex(w.bytes());
}

}  // namespace styleforge::eval
