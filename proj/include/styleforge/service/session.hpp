#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "styleforge/nn/models.hpp"
#include "styleforge/sim/render.hpp"
#include "styleforge/sim/track.hpp"
#include "styleforge/sim/vehicle.hpp"
#include "styleforge/train/dataset.hpp"

// Transport-independent teleoperation session. The websocket server feeds
// client messages into handle() between ticks and calls tick() at 20 Hz;
// tests and replays drive it directly.
namespace styleforge::service {

inline constexpr int kProtocolVersion = 1;

enum class Mode { teleop, bdm, ndst };
std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct SessionConfig {
  double dt = sim::kDefaultDt;
  // Without fresh control for stall_after seconds the last command is held
  // for at most hold_for more, then the vehicle is brought to a stop.
  double stall_after = 1.0;
  double hold_for = 0.5;
  double safe_stop_brake = 0.5;
  double start_s = 0.0;
  double autopilot_target = 20.0;  // m/s when a mode message names none
  sim::VehicleParams vehicle;
  sim::CameraConfig camera;

  nlohmann::json to_json() const;
  static SessionConfig from_json(const nlohmann::json& j);
};

// A client message together with the tick it took effect before.
struct LoggedMessage {
  std::uint64_t tick = 0;
  nlohmann::json message;
};

class Session {
 public:
  // bdm and pb, when given, must outlive the session.
  Session(std::string id, const sim::TrackGeometry& track, SessionConfig config, const nn::BdmModel* bdm = nullptr,
          const nn::PbModel* pb = nullptr);

  nlohmann::json hello() const;
  nlohmann::json bye(const std::string& reason) const;

  // Never throws on bad input; problems come back as error messages.
  std::vector<nlohmann::json> handle(const nlohmann::json& message);
  std::vector<nlohmann::json> handle_text(std::string_view text);

  // One fixed-rate step: applies the pending mode, picks the action, records,
  // steps the simulator and returns the state and frame messages.
  std::vector<nlohmann::json> tick();

  const std::string& id() const noexcept { return id_; }
  std::uint64_t tick_count() const noexcept { return tick_; }
  Mode mode() const noexcept { return mode_; }
  const sim::VehicleState& vehicle_state() const noexcept { return state_; }
  bool recording() const noexcept { return recording_.has_value(); }
  // Recordings finished with a record-off message, oldest first.
  const std::vector<train::Dataset>& finished_recordings() const noexcept { return finished_; }
  const std::vector<LoggedMessage>& log() const noexcept { return log_; }
  // Closes an active recording, as a record-off would.
  std::optional<train::Dataset> finish_recording();

 private:
  nlohmann::json envelope(const std::string& type) const;
  nlohmann::json error(const std::string& message) const;
  std::vector<nlohmann::json> handle_control(const nlohmann::json& m);
  std::vector<nlohmann::json> handle_record(const nlohmann::json& m);
  std::vector<nlohmann::json> handle_mode(const nlohmann::json& m);
  sim::ActionTriple teleop_action(std::string& status) const;
  void reset_vehicle();

  std::string id_;
  const sim::TrackGeometry& track_;
  SessionConfig config_;
  const nn::BdmModel* bdm_;
  const nn::PbModel* pb_;

  std::uint64_t tick_ = 0;
  sim::VehicleState state_;
  Mode mode_ = Mode::teleop;
  std::optional<Mode> pending_mode_;
  double autopilot_target_;
  std::optional<sim::ActionTriple> control_;
  std::uint64_t control_tick_ = 0;
  std::optional<train::Dataset> recording_;
  double record_target_ = 0.0;
  std::uint32_t episode_ = 0;
  std::vector<train::Dataset> finished_;
  std::vector<LoggedMessage> log_;
};

// Feeds a message log into a fresh session, ticking until `ticks` have run,
// and returns the recordings it finished (an active one is closed at the end).
// Pass the original session id to reproduce dataset digests exactly.
std::vector<train::Dataset> replay(const sim::TrackGeometry& track, const SessionConfig& config,
                                   const std::vector<LoggedMessage>& log, std::uint64_t ticks,
                                   const std::string& session_id, const nn::BdmModel* bdm = nullptr,
                                   const nn::PbModel* pb = nullptr);

nlohmann::json log_to_json(const std::vector<LoggedMessage>& log);
std::vector<LoggedMessage> log_from_json(const nlohmann::json& j);

// Frame payload: zlib-compressed row-major levels, base64 encoded.
std::string encode_frame(const sim::Observation& obs);
sim::Observation decode_frame(int width, int height, std::string_view data);

}  // namespace styleforge::service
