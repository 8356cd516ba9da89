#include "styleforge/train/dataset.hpp"

#include <cmath>

#include "styleforge/common/byte_io.hpp"
#include "styleforge/common/digest.hpp"
#include "styleforge/common/errors.hpp"

namespace styleforge::train {

sim::Observation Dataset::observation(std::size_t i) const {
  return sim::Observation::from_bytes(header.camera.width, header.camera.height, samples.at(i).image);
}

void Dataset::validate() const {
  if (samples.empty()) throw DataError("dataset holds no samples");
  const auto pixels = static_cast<std::size_t>(header.camera.width) * header.camera.height;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::string where = "sample " + std::to_string(i) + ": ";
    if (s.image.size() != pixels)
      throw DataError(where + "image has " + std::to_string(s.image.size()) + " pixels, camera expects " +
                      std::to_string(pixels));
    if (!s.action.in_range()) throw DataError(where + "action out of range");
    if (!(s.target_speed > 0.0) || !std::isfinite(s.target_speed))
      throw DataError(where + "target speed (V^g) missing or not positive");
    if (!(s.speed >= 0.0) || !std::isfinite(s.speed)) throw DataError(where + "speed must be finite and >= 0");
    if (!std::isfinite(s.timestamp)) throw DataError(where + "timestamp is not finite");
  }
}

std::string Dataset::digest() const { return sha256_hex(encode_dataset(*this)); }

Sample make_sample(const sim::Observation& obs, double speed, const sim::ActionTriple& action, double target_speed,
                   double timestamp, sim::SectionType section, std::uint32_t episode) {
  return Sample{obs.to_bytes(), speed, action, target_speed, timestamp, section, episode};
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  ByteWriter w;
  w.put_bytes(std::span(reinterpret_cast<const std::uint8_t*>("SFDS"), 4));
  w.put_u32(kDatasetVersion);
  w.put_string(ds.header.track_id);
  w.put_string(ds.header.driver);
  w.put_string(ds.header.meta.dump());
  const auto& c = ds.header.camera;
  w.put_u32(static_cast<std::uint32_t>(c.width));
  w.put_u32(static_cast<std::uint32_t>(c.height));
  for (double v : {c.horizontal_fov, c.camera_height, c.pitch, c.max_draw_distance, c.line_half_width}) w.put_f64(v);
  w.put_u64(ds.samples.size());
  for (const auto& s : ds.samples) {
    w.put_u32(s.episode);
    for (double v : {s.timestamp, s.speed, s.action.steering, s.action.throttle, s.action.brake, s.target_speed})
      w.put_f64(v);
    w.put_u8(static_cast<std::uint8_t>(s.section));
    w.put_bytes(s.image);
  }
  return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("SFDS");
  const auto version = r.get_u32();
  if (version != kDatasetVersion) throw DataError("unsupported dataset version " + std::to_string(version));
  Dataset ds;
  ds.header.track_id = r.get_string();
  ds.header.driver = r.get_string();
  try {
    ds.header.meta = nlohmann::json::parse(r.get_string());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt dataset metadata: ") + e.what());
  }
  auto& c = ds.header.camera;
  c.width = static_cast<int>(r.get_u32());
  c.height = static_cast<int>(r.get_u32());
  c.horizontal_fov = r.get_f64();
  c.camera_height = r.get_f64();
  c.pitch = r.get_f64();
  c.max_draw_distance = r.get_f64();
  c.line_half_width = r.get_f64();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("dataset camera: ") + e.what());
  }
  const auto n = r.get_u64();
  const auto pixels = static_cast<std::size_t>(c.width) * c.height;
  const std::size_t record = 4 + 6 * 8 + 1 + pixels;
  if (n > r.remaining() / record) throw DataError("dataset sample count overruns the file");
  ds.samples.resize(static_cast<std::size_t>(n));
  for (auto& s : ds.samples) {
    s.episode = r.get_u32();
    s.timestamp = r.get_f64();
    s.speed = r.get_f64();
    s.action.steering = r.get_f64();
    s.action.throttle = r.get_f64();
    s.action.brake = r.get_f64();
    s.target_speed = r.get_f64();
    const auto section = r.get_u8();
    if (section > 2) throw DataError("invalid section tag " + std::to_string(section));
    s.section = static_cast<sim::SectionType>(section);
    const auto img = r.get_bytes(pixels);
    s.image.assign(img.begin(), img.end());
  }
  if (!r.at_end()) throw DataError("trailing bytes after dataset");
  ds.validate();
  return ds;
}

nlohmann::json dataset_manifest(const Dataset& ds) {
  std::size_t per_section[3] = {0, 0, 0};
  std::uint32_t episodes = 0;
  for (const auto& s : ds.samples) {
    ++per_section[static_cast<int>(s.section)];
    episodes = std::max(episodes, s.episode + 1);
  }
  return {{"format", "styleforge-dataset"},
          {"version", kDatasetVersion},
          {"digest", ds.digest()},
          {"track", ds.header.track_id},
          {"driver", ds.header.driver},
          {"camera", sim::camera_to_json(ds.header.camera)},
          {"meta", ds.header.meta},
          {"samples", ds.samples.size()},
          {"episodes", episodes},
          {"section_counts", {{"straight", per_section[0]}, {"left", per_section[1]}, {"right", per_section[2]}}}};
}

void save_dataset(const std::string& path, const Dataset& ds) {
  ds.validate();
  write_file_bytes(path, encode_dataset(ds));
  write_text_file(path + ".json", dataset_manifest(ds).dump(2) + "\n");
}

Dataset load_dataset(const std::string& path) {
  try {
    return decode_dataset(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace styleforge::train
