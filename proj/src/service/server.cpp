#include "styleforge/service/server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <cstdio>
#include <deque>
#include <filesystem>

#include "styleforge/common/byte_io.hpp"
#include "styleforge/common/errors.hpp"

namespace styleforge::service {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, const ServerConfig& config, const sim::TrackGeometry& track, const nn::BdmModel* bdm,
             const nn::PbModel* pb, std::string id)
      : ws_(std::move(socket)), timer_(ws_.get_executor()), config_(config),
        session_(std::move(id), track, config.session, bdm, pb) {}

  void start() {
    ws_.text(true);
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->send(self->session_.hello());
      self->read();
      self->next_tick_ = std::chrono::steady_clock::now();
      self->schedule_tick();
    });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->shutdown();
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      const json parsed = json::parse(text, nullptr, false);
      if (parsed.is_object() && parsed.value("type", "") == "bye" && parsed.value("session", "") == self->session_.id()) {
        self->closing_ = true;
        self->send(self->session_.bye("client closed"));
        return;
      }
      for (auto& reply : self->session_.handle_text(text)) {
        if (reply.value("type", "") == "record" && reply.contains("on") && !reply["on"].get<bool>())
          self->save_latest(reply);
        self->send(std::move(reply));
      }
      self->read();
    });
  }

  void schedule_tick() {
    next_tick_ += std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / config_.tick_rate));
    timer_.expires_at(next_tick_);
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec || self->closing_) return;
      auto messages = self->session_.tick();
      for (auto& m : messages) {
        // A slow client loses frames rather than stalling the session.
        if (m.value("type", "") == "frame" && self->queue_.size() >= self->config_.max_queue) continue;
        self->send(std::move(m));
      }
      self->schedule_tick();
    });
  }

  void save_latest(json& ack) {
    if (config_.record_dir.empty() || session_.finished_recordings().empty()) return;
    const auto& ds = session_.finished_recordings().back();
    if (ds.size() == 0) return;
    try {
      std::filesystem::create_directories(config_.record_dir);
      const std::string base = (std::filesystem::path(config_.record_dir) /
                                (session_.id() + "-" + std::to_string(session_.finished_recordings().size())))
                                   .string();
      train::save_dataset(base + ".sfds", ds);
      write_text_file(base + ".log.json", log_to_json(session_.log()).dump(1) + "\n");
      ack["path"] = base + ".sfds";
    } catch (const std::exception& e) {
      ack["save_error"] = e.what();
    }
  }

  void send(json message) {
    queue_.push_back(message.dump());
    if (!writing_) write_next();
  }

  void write_next() {
    if (queue_.empty()) {
      writing_ = false;
      if (closing_) close();
      return;
    }
    writing_ = true;
    ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->shutdown();
      self->queue_.pop_front();
      self->write_next();
    });
  }

  void close() {
    timer_.cancel();
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {
      self->shutdown();
    });
  }

  void shutdown() {
    if (done_) return;
    done_ = true;
    closing_ = true;
    timer_.cancel();
    if (session_.recording()) {
      session_.finish_recording();
      json ack;
      save_latest(ack);
    }
  }

  websocket::stream<tcp::socket> ws_;
  asio::steady_timer timer_;
  const ServerConfig& config_;
  Session session_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  std::chrono::steady_clock::time_point next_tick_;
  bool writing_ = false;
  bool closing_ = false;
  bool done_ = false;
};

}  // namespace

struct Server::Impl {
  ServerConfig config;
  const sim::TrackGeometry& track;
  const nn::BdmModel* bdm;
  const nn::PbModel* pb;
  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::uint64_t sessions = 0;

  Impl(ServerConfig c, const sim::TrackGeometry& t, const nn::BdmModel* b, const nn::PbModel* p)
      : config(std::move(c)), track(t), bdm(b), pb(p) {}

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Connection>(std::move(socket), config, track, bdm, pb, "session-" + std::to_string(++sessions))
          ->start();
      accept();
    });
  }
};

Server::Server(ServerConfig config, const sim::TrackGeometry& track, const nn::BdmModel* bdm, const nn::PbModel* pb)
    : impl_(std::make_unique<Impl>(std::move(config), track, bdm, pb)) {
  if (!(impl_->config.tick_rate > 0.0)) throw ConfigError("tick_rate must be positive");
  // Surface model/session problems before any client connects.
  Session probe("probe", track, impl_->config.session, bdm, pb);
}

Server::~Server() = default;

unsigned short Server::listen() {
  beast::error_code ec;
  const auto address = asio::ip::make_address(impl_->config.address, ec);
  if (ec) throw UsageError("invalid listen address '" + impl_->config.address + "'");
  const tcp::endpoint endpoint(address, impl_->config.port);
  impl_->acceptor.open(endpoint.protocol());
  impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
  impl_->acceptor.bind(endpoint, ec);
  if (ec) throw UsageError("cannot bind " + impl_->config.address + ":" + std::to_string(impl_->config.port) + ": " +
                           ec.message());
  impl_->acceptor.listen();
  impl_->accept();
  return impl_->acceptor.local_endpoint().port();
}

void Server::run() { impl_->io.run(); }

void Server::stop() {
  asio::post(impl_->io, [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
    impl_->io.stop();
  });
}

}  // namespace styleforge::service
