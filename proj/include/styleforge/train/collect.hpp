#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "styleforge/style/driver.hpp"
#include "styleforge/train/dataset.hpp"

namespace styleforge::train {

struct CollectConfig {
  int episodes = 4;
  std::size_t steps_per_episode = 2000;
  std::uint64_t seed = 1;
  double dt = sim::kDefaultDt;
  // The executed steering is perturbed while the recorded label stays the
  // demonstrator's clean command, so the data covers recoveries from drift.
  double steer_noise = 0.1;
  // Same idea for the longitudinal command (m/s^2 added to the commanded
  // acceleration), so the data shows how the driver reacts to speed errors.
  double accel_noise = 0.8;
  double noise_hold = 0.5;  // s between perturbation redraws
  bool random_start = true;
  // Mixed driver only: cycled per episode.
  std::vector<double> target_speeds = {12.0, 16.0, 20.0, 24.0};
  sim::VehicleParams vehicle;
  sim::CameraConfig camera;

  void validate() const;
  nlohmann::json to_json() const;
  static CollectConfig from_json(const nlohmann::json& j);
};

struct AbortedEpisode {
  std::uint32_t episode = 0;
  double time = 0.0;
  std::string reason;
};

struct CollectResult {
  Dataset dataset;
  std::vector<AbortedEpisode> aborted;
};

CollectResult collect_scripted(const style::StylePreset& preset, const sim::TrackGeometry& track,
                               const CollectConfig& config);

// Unbiased data for the baseline model: each episode draws a style blend
// between the two presets and cycles through the configured target speeds.
CollectResult collect_mixed(const style::StylePreset& a, const style::StylePreset& b,
                            const sim::TrackGeometry& track, const CollectConfig& config);

style::StyleParams blend_styles(const style::StyleParams& a, const style::StyleParams& b, double t);

}  // namespace styleforge::train
