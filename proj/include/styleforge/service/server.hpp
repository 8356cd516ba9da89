#pragma once

#include <memory>
#include <string>

#include "styleforge/service/session.hpp"

namespace styleforge::service {

struct ServerConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  double tick_rate = 20.0;     // Hz
  // Finished recordings land here as <session>-<n>.sfds plus the message log;
  // empty keeps them in memory only.
  std::string record_dir;
  // Pending outbound messages beyond which frames are dropped for that tick.
  std::size_t max_queue = 8;
  SessionConfig session;
};

// Websocket front end. Each connection gets its own Session; one io thread
// serializes message handling and ticking.
class Server {
 public:
  Server(ServerConfig config, const sim::TrackGeometry& track, const nn::BdmModel* bdm = nullptr,
         const nn::PbModel* pb = nullptr);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and listens; returns the actual port.
  unsigned short listen();
  // Serves until stop() is called.
  void run();
  // Safe to call from any thread.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace styleforge::service
