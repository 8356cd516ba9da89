#include "styleforge/sim/render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "styleforge/common/errors.hpp"

namespace styleforge::sim {

void CameraConfig::validate() const {
  if (width < 16 || height < 16) throw ConfigError("camera width and height must be >= 16");
  if (!(horizontal_fov > 0.0 && horizontal_fov < std::numbers::pi))
    throw ConfigError("camera horizontal_fov must lie in (0, pi)");
  if (!(camera_height > 0.0 && max_draw_distance > 0.0 && line_half_width > 0.0))
    throw ConfigError("camera height, draw distance and line width must be positive");
}

std::vector<std::uint8_t> Observation::to_bytes() const {
  std::vector<std::uint8_t> out(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(pixels[i], 0.0, 1.0) * 255.0));
  return out;
}

Observation Observation::from_bytes(int width, int height, std::span<const std::uint8_t> bytes) {
  if (bytes.size() != static_cast<std::size_t>(width) * height)
    throw ShapeError("observation byte count does not match " + std::to_string(height) + "x" +
                     std::to_string(width));
  Observation obs{width, height, std::vector<double>(bytes.size())};
  for (std::size_t i = 0; i < bytes.size(); ++i) obs.pixels[i] = level_to_intensity(bytes[i]);
  return obs;
}

Observation render_observation(const VehicleState& state, const TrackGeometry& geometry,
                               const CameraConfig& cam) {
  Observation obs{cam.width, cam.height,
                  std::vector<double>(static_cast<std::size_t>(cam.width) * cam.height)};
  const double focal = 0.5 * cam.width / std::tan(0.5 * cam.horizontal_fov);
  const double sp = std::sin(cam.pitch);
  const double cp = std::cos(cam.pitch);
  const double ch = std::cos(state.heading);
  const double sh = std::sin(state.heading);
  const double sky = level_to_intensity(kSkyLevel);
  const double ground = level_to_intensity(kGroundLevel);
  const double line = level_to_intensity(kLineLevel);
  const double half_w = geometry.lane_half_width();

  for (int r = 0; r < cam.height; ++r) {
    const double v = (r + 0.5) - 0.5 * cam.height;  // down positive
    const double down = sp + (v / focal) * cp;
    double* row = obs.pixels.data() + static_cast<std::size_t>(r) * cam.width;
    if (down <= 0.0) {
      for (int c = 0; c < cam.width; ++c) row[c] = sky;
      continue;
    }
    const double t = cam.camera_height / down;
    const double forward = t * (cp - (v / focal) * sp);
    const double footprint = t / focal;
    if (forward > cam.max_draw_distance) {
      for (int c = 0; c < cam.width; ++c) row[c] = ground;
      continue;
    }
    for (int c = 0; c < cam.width; ++c) {
      const double u = (c + 0.5) - 0.5 * cam.width;  // right positive
      const double left = -t * u / focal;
      const double wx = state.x + forward * ch - left * sh;
      const double wy = state.y + forward * sh + left * ch;
      const NearestPoint np = geometry.nearest(wx, wy);
      const double edge = std::abs(np.distance - half_w);
      row[c] = edge <= cam.line_half_width + 0.5 * footprint ? line : ground;
    }
  }
  return obs;
}

}  // namespace styleforge::sim

namespace styleforge::sim {

nlohmann::json camera_to_json(const CameraConfig& c) {
  return {{"width", c.width},
          {"height", c.height},
          {"horizontal_fov", c.horizontal_fov},
          {"camera_height", c.camera_height},
          {"pitch", c.pitch},
          {"max_draw_distance", c.max_draw_distance},
          {"line_half_width", c.line_half_width}};
}

CameraConfig camera_from_json(const nlohmann::json& j) {
  CameraConfig c;
  try {
    c.width = j.value("width", c.width);
    c.height = j.value("height", c.height);
    c.horizontal_fov = j.value("horizontal_fov", c.horizontal_fov);
    c.camera_height = j.value("camera_height", c.camera_height);
    c.pitch = j.value("pitch", c.pitch);
    c.max_draw_distance = j.value("max_draw_distance", c.max_draw_distance);
    c.line_half_width = j.value("line_half_width", c.line_half_width);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed camera config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace styleforge::sim
