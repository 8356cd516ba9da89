#include "styleforge/train/collect.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>

#include "styleforge/common/errors.hpp"
#include "styleforge/common/rng.hpp"
#include "styleforge/sim/frame.hpp"

namespace styleforge::train {

void CollectConfig::validate() const {
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  if (steps_per_episode < 1) throw ConfigError("steps_per_episode must be >= 1");
  if (!(dt > 0.0 && dt <= 0.1)) throw ConfigError("dt must lie in (0, 0.1]");
  if (!(steer_noise >= 0.0 && accel_noise >= 0.0)) throw ConfigError("steer_noise and accel_noise must be >= 0");
  if (!(noise_hold > 0.0)) throw ConfigError("noise_hold must be positive");
  if (target_speeds.empty()) throw ConfigError("target_speeds must not be empty");
  for (double v : target_speeds)
    if (!(v > 0.0)) throw ConfigError("target speeds must be positive");
  vehicle.validate();
  camera.validate();
}

nlohmann::json CollectConfig::to_json() const {
  return {{"episodes", episodes},
          {"steps_per_episode", steps_per_episode},
          {"seed", seed},
          {"dt", dt},
          {"steer_noise", steer_noise},
          {"accel_noise", accel_noise},
          {"noise_hold", noise_hold},
          {"random_start", random_start},
          {"target_speeds", target_speeds},
          {"vehicle", sim::vehicle_to_json(vehicle)},
          {"camera", sim::camera_to_json(camera)}};
}

CollectConfig CollectConfig::from_json(const nlohmann::json& j) {
  CollectConfig c;
  try {
    c.episodes = j.value("episodes", c.episodes);
    c.steps_per_episode = j.value("steps_per_episode", c.steps_per_episode);
    c.seed = j.value("seed", c.seed);
    c.dt = j.value("dt", c.dt);
    c.steer_noise = j.value("steer_noise", c.steer_noise);
    c.accel_noise = j.value("accel_noise", c.accel_noise);
    c.noise_hold = j.value("noise_hold", c.noise_hold);
    c.random_start = j.value("random_start", c.random_start);
    c.target_speeds = j.value("target_speeds", c.target_speeds);
    if (j.contains("vehicle")) c.vehicle = sim::vehicle_from_json(j["vehicle"]);
    if (j.contains("camera")) c.camera = sim::camera_from_json(j["camera"]);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed collect config: ") + e.what());
  }
  c.validate();
  return c;
}

style::StyleParams blend_styles(const style::StyleParams& a, const style::StyleParams& b, double t) {
  auto geo = [t](double x, double y) { return std::exp((1.0 - t) * std::log(x) + t * std::log(y)); };
  auto lin = [t](double x, double y) { return (1.0 - t) * x + t * y; };
  style::StyleParams p;
  p.target_speed = lin(a.target_speed, b.target_speed);
  p.curve_speed_factor = lin(a.curve_speed_factor, b.curve_speed_factor);
  p.anticipation_distance = lin(a.anticipation_distance, b.anticipation_distance);
  p.throttle_kp = geo(a.throttle_kp, b.throttle_kp);
  p.brake_kp = geo(a.brake_kp, b.brake_kp);
  p.max_jerk = geo(a.max_jerk, b.max_jerk);
  p.lookahead = lin(a.lookahead, b.lookahead);
  return p;
}

namespace {

struct EpisodePlan {
  style::StyleParams params;
  double start_s = 0.0;
  double start_speed = 0.0;
};

struct EpisodeOutcome {
  std::vector<Sample> samples;
  std::optional<AbortedEpisode> aborted;
};

EpisodeOutcome run_episode(const EpisodePlan& plan, const sim::TrackGeometry& track, const CollectConfig& cfg,
                           std::uint32_t episode) {
  EpisodeOutcome out;
  CounterRng noise_rng(derive_seed(cfg.seed, episode), 1);
  const sim::Pose p = track.point_at(plan.start_s);
  sim::VehicleState state{p.x, p.y, p.heading, plan.start_speed};
  style::DriverState memory;
  double noise = 0.0, accel_noise = 0.0;
  double next_draw = 0.0;
  const double t0 = static_cast<double>(episode) * static_cast<double>(cfg.steps_per_episode) * cfg.dt;
  out.samples.reserve(cfg.steps_per_episode);
  for (std::size_t i = 0; i < cfg.steps_per_episode; ++i) {
    const double t = static_cast<double>(i) * cfg.dt;
    sim::TrackFrame frame;
    try {
      frame = sim::track_frame(state, track);
    } catch (const OffTrackError& e) {
      out.aborted = AbortedEpisode{episode, t, e.what()};
      out.samples.clear();
      return out;
    }
    const auto obs = sim::render_observation(state, track, cfg.camera);
    const sim::ActionTriple clean = style::control(state, frame, plan.params, cfg.vehicle, memory, cfg.dt);
    out.samples.push_back(
        make_sample(obs, state.speed, clean, plan.params.target_speed, t0 + t, frame.section(), episode));
    if (t >= next_draw) {
      noise = cfg.steer_noise * noise_rng.normal();
      accel_noise = cfg.accel_noise * noise_rng.normal();
      next_draw += cfg.noise_hold;
    }
    sim::ActionTriple executed =
        accel_noise != 0.0 ? style::longitudinal_command(memory.accel_cmd + accel_noise, state.speed, cfg.vehicle) : clean;
    executed.steering = std::clamp(clean.steering + noise, -1.0, 1.0);
    state = sim::step(state, executed, cfg.vehicle, cfg.dt);
  }
  return out;
}

CollectResult run_all(const std::vector<EpisodePlan>& plans, const sim::TrackGeometry& track,
                      const CollectConfig& cfg, DatasetHeader header) {
  std::vector<EpisodeOutcome> outcomes(plans.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t e = 0; e < plans.size(); ++e) {
    try {
      outcomes[e] = run_episode(plans[e], track, cfg, static_cast<std::uint32_t>(e));
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  CollectResult result;
  result.dataset.header = std::move(header);
  result.dataset.header.track_id = track.id();
  result.dataset.header.camera = cfg.camera;
  result.dataset.header.meta["collect"] = cfg.to_json();
  for (auto& o : outcomes) {
    if (o.aborted) result.aborted.push_back(*o.aborted);
    for (auto& s : o.samples) result.dataset.samples.push_back(std::move(s));
  }
  nlohmann::json aborted = nlohmann::json::array();
  for (const auto& a : result.aborted) aborted.push_back({{"episode", a.episode}, {"time", a.time}, {"reason", a.reason}});
  result.dataset.header.meta["aborted"] = aborted;
  return result;
}

double start_position(const sim::TrackGeometry& track, const CollectConfig& cfg, int e, CounterRng& rng) {
  if (!track.closed()) return 0.0;
  if (cfg.random_start) return rng.uniform(0.0, track.total_length());
  return track.total_length() * static_cast<double>(e) / static_cast<double>(cfg.episodes);
}

}  // namespace

CollectResult collect_scripted(const style::StylePreset& preset, const sim::TrackGeometry& track,
                               const CollectConfig& cfg) {
  cfg.validate();
  preset.params.validate();
  std::vector<EpisodePlan> plans;
  for (int e = 0; e < cfg.episodes; ++e) {
    CounterRng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(e)), 0);
    EpisodePlan plan;
    plan.params = preset.params;
    plan.start_s = start_position(track, cfg, e, rng);
    plan.start_speed = cfg.random_start ? rng.uniform(0.0, preset.params.target_speed) : 0.0;
    plans.push_back(plan);
  }
  DatasetHeader header;
  header.driver = preset.name;
  header.meta["style"] = style::style_params_to_json(preset.params);
  return run_all(plans, track, cfg, std::move(header));
}

CollectResult collect_mixed(const style::StylePreset& a, const style::StylePreset& b,
                            const sim::TrackGeometry& track, const CollectConfig& cfg) {
  cfg.validate();
  std::vector<EpisodePlan> plans;
  nlohmann::json blends = nlohmann::json::array();
  for (int e = 0; e < cfg.episodes; ++e) {
    CounterRng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(e)), 0);
    EpisodePlan plan;
    const double t = rng.uniform();
    plan.params = blend_styles(a.params, b.params, t);
    plan.params.target_speed = cfg.target_speeds[static_cast<std::size_t>(e) % cfg.target_speeds.size()];
    plan.params.validate();
    plan.start_s = start_position(track, cfg, e, rng);
    plan.start_speed = cfg.random_start ? rng.uniform(0.0, plan.params.target_speed) : 0.0;
    blends.push_back({{"episode", e}, {"blend", t}, {"target_speed", plan.params.target_speed}});
    plans.push_back(plan);
  }
  DatasetHeader header;
  header.driver = "mixed";
  header.meta["styles"] = {{a.name, style::style_params_to_json(a.params)},
                           {b.name, style::style_params_to_json(b.params)}};
  header.meta["episodes"] = blends;
  return run_all(plans, track, cfg, std::move(header));
}

}  // namespace styleforge::train
