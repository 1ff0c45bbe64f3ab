#include "trackflow/server.hpp"

#include <array>
#include <atomic>
#include <deque>
#include <list>
#include <mutex>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "trackflow/error.hpp"
#include "trackflow/session.hpp"

namespace trackflow {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(asio::io_context& io, tcp::socket socket, const ServerConfig& cfg)
      : io_(io), socket_(std::move(socket)), cfg_(cfg) {}

  void start() {
    std::weak_ptr<Connection> weak = weak_from_this();
    asio::io_context& io = io_;
    session_ = std::make_unique<Session>(
        [weak, &io](const nlohmann::ordered_json& msg) {
          asio::post(io, [weak, text = msg.dump()] {
            if (auto self = weak.lock()) self->send(text);
          });
        },
        cfg_.options);
    if (cfg_.video && cfg_.flow) session_->attach(cfg_.video, cfg_.flow);
    read_raw();
  }

 private:
  void read_raw() {
    socket_.async_read_some(asio::buffer(chunk_), [self = shared_from_this()](beast::error_code ec, std::size_t n) {
      self->on_raw(ec, n);
    });
  }

  void on_raw(beast::error_code ec, std::size_t n) {
    if (ec) return;
    inbuf_.append(chunk_.data(), n);
    if (!mode_known_) {
      if (inbuf_.size() < 4 && inbuf_.find('\n') == std::string::npos) return read_raw();
      mode_known_ = true;
      if (inbuf_.starts_with("GET ")) return start_http();
      writable_ = true;
    }
    std::size_t nl;
    while ((nl = inbuf_.find('\n')) != std::string::npos) {
      handle_lines(std::string_view(inbuf_).substr(0, nl));
      inbuf_.erase(0, nl + 1);
    }
    read_raw();
  }

  void handle_lines(std::string_view text) {
    while (!text.empty()) {
      const auto nl = text.find('\n');
      std::string_view line = text.substr(0, nl);
      text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
      send(session_->handle_line(line).dump());
    }
  }

  void start_http() {
    auto dst = httpbuf_.prepare(inbuf_.size());
    asio::buffer_copy(dst, asio::buffer(inbuf_));
    httpbuf_.commit(inbuf_.size());
    inbuf_.clear();
    http::async_read(socket_, httpbuf_, request_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (!websocket::is_upgrade(self->request_)) return self->reject_http();
      self->ws_ = std::make_unique<websocket::stream<tcp::socket&>>(self->socket_);
      self->ws_->async_accept(self->request_, [self](beast::error_code ec2) {
        if (ec2) return;
        self->writable_ = true;
        self->write_next();
        self->read_ws();
      });
    });
  }

  void reject_http() {
    response_.version(request_.version());
    response_.result(http::status::upgrade_required);
    response_.set(http::field::content_type, "text/plain");
    response_.body() = "websocket upgrade required; raw TCP clients send JSON lines directly\n";
    response_.prepare_payload();
    http::async_write(socket_, response_, [self = shared_from_this()](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->socket_.shutdown(tcp::socket::shutdown_both, ignored);
    });
  }

  void read_ws() {
    ws_->async_read(wsbuf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      const std::string text = beast::buffers_to_string(self->wsbuf_.data());
      self->wsbuf_.consume(self->wsbuf_.size());
      self->handle_lines(text);
      self->read_ws();
    });
  }

  void send(std::string text) {
    if (!ws_) text.push_back('\n');
    outbox_.push_back(std::move(text));
    if (writable_ && !writing_) write_next();
  }

  void write_next() {
    if (outbox_.empty() || writing_) return;
    writing_ = true;
    auto done = [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->writing_ = false;
      if (ec) return;
      self->outbox_.pop_front();
      self->write_next();
    };
    if (ws_) {
      ws_->text(true);
      ws_->async_write(asio::buffer(outbox_.front()), std::move(done));
    } else {
      asio::async_write(socket_, asio::buffer(outbox_.front()), std::move(done));
    }
  }

  asio::io_context& io_;
  tcp::socket socket_;
  const ServerConfig& cfg_;
  std::unique_ptr<Session> session_;

  std::array<char, 8192> chunk_{};
  std::string inbuf_;
  bool mode_known_ = false;
  bool writable_ = false;
  bool writing_ = false;
  std::deque<std::string> outbox_;

  beast::flat_buffer httpbuf_;
  http::request<http::string_body> request_;
  http::response<http::string_body> response_;
  std::unique_ptr<websocket::stream<tcp::socket&>> ws_;
  beast::flat_buffer wsbuf_;
};

struct Worker {
  std::shared_ptr<asio::io_context> io;
  std::shared_ptr<std::atomic<bool>> done;
  std::jthread thread;
};

}  // namespace

struct Server::Impl {
  ServerConfig cfg;
  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::mutex mutex;
  std::list<Worker> workers;
  std::shared_ptr<asio::io_context> next_io;
  std::uint16_t bound_port = 0;

  explicit Impl(ServerConfig c) : cfg(std::move(c)) {
    beast::error_code ec;
    const auto address = asio::ip::make_address(cfg.host, ec);
    if (ec) throw Error(ErrorCode::BadConfig, "bad host '" + cfg.host + "': " + ec.message());
    const tcp::endpoint endpoint(address, cfg.port);
    acceptor.open(endpoint.protocol(), ec);
    if (!ec) acceptor.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor.bind(endpoint, ec);
    if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) {
      throw Error(ErrorCode::IoError,
                  "cannot listen on " + cfg.host + ":" + std::to_string(cfg.port) + ": " + ec.message());
    }
    bound_port = acceptor.local_endpoint().port();
  }

  void accept() {
    next_io = std::make_shared<asio::io_context>();
    acceptor.async_accept(*next_io, [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      spawn(std::move(socket));
      accept();
    });
  }

  void spawn(tcp::socket socket) {
    std::lock_guard lock(mutex);
    workers.remove_if([](const Worker& w) { return w.done->load(); });
    auto done = std::make_shared<std::atomic<bool>>(false);
    auto conn_io = next_io;
    std::jthread thread([this, conn_io, done, s = std::move(socket)]() mutable {
      auto conn = std::make_shared<Connection>(*conn_io, std::move(s), cfg);
      conn->start();
      conn.reset();
      conn_io->run();
      *done = true;
    });
    workers.push_back({std::move(conn_io), std::move(done), std::move(thread)});
  }

  void stop() {
    asio::post(io, [this] {
      beast::error_code ignored;
      acceptor.close(ignored);
    });
    io.stop();
    std::lock_guard lock(mutex);
    for (auto& w : workers) w.io->stop();
  }
};

Server::Server(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Server::~Server() {
  stop();
  std::list<Worker> workers;
  {
    std::lock_guard lock(impl_->mutex);
    workers.swap(impl_->workers);
  }
  workers.clear();  // joins
}

std::uint16_t Server::port() const { return impl_->bound_port; }

void Server::run() {
  impl_->accept();
  impl_->io.run();
}

void Server::stop() { impl_->stop(); }

}  // namespace trackflow
