#include "styleforge/service/session.hpp"

#include <cmath>

#include "styleforge/common/digest.hpp"
#include "styleforge/common/errors.hpp"
#include "styleforge/sim/frame.hpp"

namespace styleforge::service {

using nlohmann::json;

std::string to_string(Mode m) {
  switch (m) {
    case Mode::teleop: return "teleop";
    case Mode::bdm: return "bdm";
    case Mode::ndst: return "ndst";
  }
  return "teleop";
}

Mode mode_from_string(const std::string& s) {
  if (s == "teleop") return Mode::teleop;
  if (s == "bdm") return Mode::bdm;
  if (s == "ndst") return Mode::ndst;
  throw DataError("unknown mode '" + s + "' (teleop, bdm, ndst)");
}

json SessionConfig::to_json() const {
  return {{"dt", dt},
          {"stall_after", stall_after},
          {"hold_for", hold_for},
          {"safe_stop_brake", safe_stop_brake},
          {"start_s", start_s},
          {"autopilot_target", autopilot_target},
          {"vehicle", sim::vehicle_to_json(vehicle)},
          {"camera", sim::camera_to_json(camera)}};
}

SessionConfig SessionConfig::from_json(const json& j) {
  SessionConfig c;
  try {
    c.dt = j.value("dt", c.dt);
    c.stall_after = j.value("stall_after", c.stall_after);
    c.hold_for = j.value("hold_for", c.hold_for);
    c.safe_stop_brake = j.value("safe_stop_brake", c.safe_stop_brake);
    c.start_s = j.value("start_s", c.start_s);
    c.autopilot_target = j.value("autopilot_target", c.autopilot_target);
    if (j.contains("vehicle")) c.vehicle = sim::vehicle_from_json(j.at("vehicle"));
    if (j.contains("camera")) c.camera = sim::camera_from_json(j.at("camera"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed session config: ") + e.what());
  }
  if (!(c.dt > 0 && c.stall_after >= 0 && c.hold_for >= 0 && c.safe_stop_brake > 0 && c.safe_stop_brake <= 1 &&
        c.autopilot_target > 0))
    throw ConfigError("session timing, brake and target must be positive");
  return c;
}

Session::Session(std::string id, const sim::TrackGeometry& track, SessionConfig config, const nn::BdmModel* bdm,
                 const nn::PbModel* pb)
    : id_(std::move(id)), track_(track), config_(std::move(config)), bdm_(bdm), pb_(pb),
      autopilot_target_(config_.autopilot_target) {
  config_.camera.validate();
  if (bdm_ && pb_) nn::check_pair(*bdm_, *pb_);
  reset_vehicle();
}

void Session::reset_vehicle() {
  const sim::Pose p = track_.point_at(config_.start_s);
  state_ = {p.x, p.y, p.heading, 0.0};
}

json Session::envelope(const std::string& type) const {
  return {{"v", kProtocolVersion}, {"type", type}, {"session", id_}, {"tick", tick_}};
}

json Session::error(const std::string& message) const {
  json e = envelope("error");
  e["message"] = message;
  return e;
}

json Session::hello() const {
  json h = envelope("hello");
  h["track"] = {{"id", track_.id()},
                {"length", track_.total_length()},
                {"closed", track_.closed()},
                {"lane_half_width", track_.lane_half_width()}};
  h["dt"] = config_.dt;
  h["camera"] = sim::camera_to_json(config_.camera);
  json modes = json::array({"teleop"});
  if (bdm_) modes.push_back("bdm");
  if (bdm_ && pb_) modes.push_back("ndst");
  h["modes"] = modes;
  h["mode"] = to_string(mode_);
  return h;
}

json Session::bye(const std::string& reason) const {
  json b = envelope("bye");
  b["reason"] = reason;
  return b;
}

std::vector<json> Session::handle_text(std::string_view text) {
  json m = json::parse(text, nullptr, false);
  if (m.is_discarded()) return {error("message is not valid JSON")};
  return handle(m);
}

std::vector<json> Session::handle(const json& m) {
  if (!m.is_object()) return {error("message must be a JSON object")};
  if (!m.contains("type") || !m["type"].is_string()) return {error("message needs a string 'type'")};
  if (!m.contains("v") || m["v"] != kProtocolVersion)
    return {error("unsupported or missing protocol version (expected v=" + std::to_string(kProtocolVersion) + ")")};
  if (!m.contains("session") || m["session"] != id_) return {error("message is for another session")};
  if (m.contains("tick") && !m["tick"].is_number_unsigned()) return {error("'tick' must be a non-negative integer")};
  const std::string type = m["type"];
  std::vector<json> out;
  if (type == "control")
    out = handle_control(m);
  else if (type == "record")
    out = handle_record(m);
  else if (type == "mode")
    out = handle_mode(m);
  else if (type == "hello" || type == "bye")
    return {};
  else
    return {error("unknown message type '" + type + "'")};
  // Only messages that changed something are worth replaying.
  if (out.empty() || out.front().value("type", "") != "error") log_.push_back({tick_, m});
  return out;
}

std::vector<json> Session::handle_control(const json& m) {
  sim::ActionTriple a;
  try {
    a = {m.at("steering").get<double>(), m.at("throttle").get<double>(), m.at("brake").get<double>()};
  } catch (const json::exception&) {
    return {error("control needs numeric steering, throttle and brake")};
  }
  if (!std::isfinite(a.steering) || !std::isfinite(a.throttle) || !std::isfinite(a.brake) || !a.in_range())
    return {error("control out of range: steering in [-1, 1], throttle and brake in [0, 1]")};
  // Last writer wins until the next tick consumes it.
  control_ = a;
  control_tick_ = tick_;
  return {};
}

std::vector<json> Session::handle_record(const json& m) {
  if (!m.contains("on") || !m["on"].is_boolean()) return {error("record needs a boolean 'on'")};
  json ack = envelope("record");
  if (m["on"].get<bool>()) {
    if (recording_) return {error("already recording")};
    if (!m.contains("target_speed") || !m["target_speed"].is_number() || !(m["target_speed"].get<double>() > 0.0))
      return {error("target speed required")};
    record_target_ = m["target_speed"].get<double>();
    train::Dataset ds;
    ds.header.track_id = track_.id();
    ds.header.driver = m.value("driver", std::string("teleop"));
    ds.header.camera = config_.camera;
    ds.header.meta = {{"source", "session"}, {"session", id_}, {"start_tick", tick_}, {"dt", config_.dt}};
    recording_ = std::move(ds);
    ack["on"] = true;
    ack["target_speed"] = record_target_;
    return {ack};
  }
  auto done = finish_recording();
  if (!done) return {error("not recording")};
  ack["on"] = false;
  ack["samples"] = done->size();
  ack["digest"] = done->size() ? done->digest() : std::string();
  return {ack};
}

std::optional<train::Dataset> Session::finish_recording() {
  if (!recording_) return std::nullopt;
  train::Dataset ds = std::move(*recording_);
  recording_.reset();
  ds.header.meta["end_tick"] = tick_;
  ++episode_;
  finished_.push_back(ds);
  return ds;
}

std::vector<json> Session::handle_mode(const json& m) {
  if (!m.contains("mode") || !m["mode"].is_string()) return {error("mode needs a string 'mode'")};
  Mode next;
  try {
    next = mode_from_string(m["mode"]);
  } catch (const DataError& e) {
    return {error(e.what())};
  }
  if (next != Mode::teleop && !bdm_) return {error("no baseline model loaded; autopilot unavailable")};
  if (next == Mode::ndst && !pb_) return {error("no personalized block loaded; ndst unavailable")};
  if (m.contains("target_speed")) {
    if (!m["target_speed"].is_number() || !(m["target_speed"].get<double>() > 0.0))
      return {error("target speed must be positive")};
    autopilot_target_ = m["target_speed"].get<double>();
  }
  pending_mode_ = next;
  json ack = envelope("mode");
  ack["mode"] = to_string(next);
  ack["pending"] = true;
  return {ack};
}

sim::ActionTriple Session::teleop_action(std::string& status) const {
  if (!control_) {
    status = "coast";
    return {};
  }
  const double quiet = static_cast<double>(tick_ - control_tick_) * config_.dt;
  // Small slack so an exact multiple of dt is not pushed over by rounding.
  const double eps = 1e-9;
  if (quiet <= config_.stall_after + eps) {
    status = "live";
    return *control_;
  }
  if (quiet <= config_.stall_after + config_.hold_for + eps) {
    status = "hold";
    return *control_;
  }
  status = "safe_stop";
  return {0.0, 0.0, config_.safe_stop_brake};
}

std::vector<json> Session::tick() {
  std::vector<json> out;
  if (pending_mode_) {
    mode_ = *pending_mode_;
    pending_mode_.reset();
  }
  const sim::Observation obs = sim::render_observation(state_, track_, config_.camera);
  std::string status;
  sim::ActionTriple action;
  if (mode_ == Mode::teleop) {
    action = teleop_action(status);
  } else {
    status = "autopilot";
    action = nn::ndst_forward(obs, state_.speed, autopilot_target_, *bdm_, mode_ == Mode::ndst ? pb_ : nullptr);
  }

  const sim::TrackFrame before = sim::track_frame(state_, track_);
  if (recording_) {
    recording_->samples.push_back(train::make_sample(obs, state_.speed, action, record_target_,
                                                     static_cast<double>(tick_) * config_.dt, before.section(),
                                                     episode_));
  }

  const double v0 = state_.speed;
  state_ = sim::step(state_, action, config_.vehicle, config_.dt);
  ++tick_;

  json state = envelope("state");
  try {
    const sim::TrackFrame f = sim::track_frame(state_, track_);
    const double kappa = track_.curvature(f.s);
    state["s"] = f.s;
    state["cte"] = f.cross_track_error;
    state["section"] = sim::to_string(f.section());
    state["a_lat"] = state_.speed * state_.speed * kappa;
  } catch (const OffTrackError& e) {
    out.push_back(error(std::string("vehicle left the road, reset to start: ") + e.what()));
    reset_vehicle();
    control_.reset();
    if (recording_) ++episode_;
    state["s"] = config_.start_s;
    state["cte"] = 0.0;
    state["section"] = sim::to_string(track_.section_type(config_.start_s));
    state["a_lat"] = 0.0;
  }
  state["x"] = state_.x;
  state["y"] = state_.y;
  state["heading"] = state_.heading;
  state["speed"] = state_.speed;
  state["a_long"] = (state_.speed - v0) / config_.dt;
  state["action"] = {{"steering", action.steering}, {"throttle", action.throttle}, {"brake", action.brake}};
  state["mode"] = to_string(mode_);
  state["control"] = status;
  state["recording"] = recording_.has_value();
  if (recording_) state["recorded"] = recording_->size();
  out.push_back(std::move(state));

  json frame = envelope("frame");
  frame["width"] = obs.width;
  frame["height"] = obs.height;
  frame["encoding"] = "zlib+base64";
  frame["data"] = encode_frame(obs);
  out.push_back(std::move(frame));
  return out;
}

std::vector<train::Dataset> replay(const sim::TrackGeometry& track, const SessionConfig& config,
                                   const std::vector<LoggedMessage>& log, std::uint64_t ticks,
                                   const std::string& session_id, const nn::BdmModel* bdm, const nn::PbModel* pb) {
  Session s(session_id, track, config, bdm, pb);
  std::size_t next = 0;
  while (s.tick_count() < ticks || next < log.size()) {
    while (next < log.size() && log[next].tick == s.tick_count()) {
      json m = log[next++].message;
      m["session"] = s.id();
      s.handle(m);
    }
    if (s.tick_count() >= ticks) break;
    s.tick();
  }
  s.finish_recording();
  return s.finished_recordings();
}

json log_to_json(const std::vector<LoggedMessage>& log) {
  json arr = json::array();
  for (const auto& e : log) arr.push_back({{"tick", e.tick}, {"message", e.message}});
  return arr;
}

std::vector<LoggedMessage> log_from_json(const json& j) {
  std::vector<LoggedMessage> log;
  try {
    for (const auto& e : j) log.push_back({e.at("tick").get<std::uint64_t>(), e.at("message")});
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed session log: ") + e.what());
  }
  return log;
}

std::string encode_frame(const sim::Observation& obs) { return base64_encode(zlib_compress(obs.to_bytes())); }

sim::Observation decode_frame(int width, int height, std::string_view data) {
  const auto bytes = zlib_decompress(base64_decode(data), static_cast<std::size_t>(width * height));
  return sim::Observation::from_bytes(width, height, bytes);
}

}  // namespace styleforge::service
