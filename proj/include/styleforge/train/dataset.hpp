#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "styleforge/sim/render.hpp"
#include "styleforge/sim/track.hpp"
#include "styleforge/sim/vehicle.hpp"

namespace styleforge::train {

// One control step: I_t = (observation, speed) and the label A_t, plus the
// declared target speed V^g.
struct Sample {
  std::vector<std::uint8_t> image;  // row-major, level k means intensity k/255
  double speed = 0.0;
  sim::ActionTriple action;
  double target_speed = 0.0;
  double timestamp = 0.0;
  sim::SectionType section = sim::SectionType::straight;
  std::uint32_t episode = 0;
};

struct DatasetHeader {
  std::string track_id;
  std::string driver;  // "A", "B", "mixed", "teleop", ...
  sim::CameraConfig camera;
  nlohmann::json meta = nlohmann::json::object();  // driver parameters, seeds
};

struct Dataset {
  DatasetHeader header;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  sim::Observation observation(std::size_t i) const;
  // Throws DataError naming the first violated invariant.
  void validate() const;
  std::string digest() const;
};

Sample make_sample(const sim::Observation& obs, double speed, const sim::ActionTriple& action, double target_speed,
                   double timestamp, sim::SectionType section, std::uint32_t episode);

// "SFDS" u32 version, header block, u64 count, then per sample:
// u32 episode, f64 timestamp, f64 speed, f64 steering, f64 throttle,
// f64 brake, f64 target_speed, u8 section, u8 image[width*height].
inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

nlohmann::json dataset_manifest(const Dataset& ds);
// Writes the container and a sidecar "<path>.json" manifest.
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

}  // namespace styleforge::train
