#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <vector>

#include "styleforge/sim/track.hpp"
#include "styleforge/sim/vehicle.hpp"

namespace styleforge::sim {

struct CameraConfig {
  int width = 64;
  int height = 64;
  double horizontal_fov = 1.2;      // rad
  double camera_height = 20.0;      // m
  double pitch = 0.45;              // rad, positive tilts down
  double max_draw_distance = 300.0; // m
  double line_half_width = 0.15;    // m, painted boundary line

  void validate() const;
  bool operator==(const CameraConfig&) const = default;
};

nlohmann::json camera_to_json(const CameraConfig& c);
// Missing keys keep their defaults.
CameraConfig camera_from_json(const nlohmann::json& j);

// Intensity levels. Every rendered value is k/255 so observations survive a
// round trip through 8-bit storage unchanged.
inline constexpr std::uint8_t kSkyLevel = 0;
inline constexpr std::uint8_t kGroundLevel = 26;
inline constexpr std::uint8_t kLineLevel = 255;

inline double level_to_intensity(std::uint8_t level) noexcept { return static_cast<double>(level) / 255.0; }

struct Observation {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // row-major, [0, 1]

  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  std::vector<std::uint8_t> to_bytes() const;
  static Observation from_bytes(int width, int height, std::span<const std::uint8_t> bytes);
  bool operator==(const Observation&) const = default;
};

// Pinhole camera over a flat ground plane. Lane boundaries (centerline +-
// lane_half_width) are drawn bright on dark ground, sky above the horizon.
Observation render_observation(const VehicleState& state, const TrackGeometry& geometry,
                               const CameraConfig& camera);

}  // namespace styleforge::sim
