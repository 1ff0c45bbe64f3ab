#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "trackflow/flow.hpp"
#include "trackflow/track.hpp"
#include "trackflow/video.hpp"

namespace trackflow {

inline constexpr std::uint16_t kDefaultPort = 7414;

struct ServerConfig {
  std::string host = "127.0.0.1";
  /// 0 picks a free port; see Server::port().
  std::uint16_t port = kDefaultPort;
  RebuildOptions options;
  /// Optional preload shared by every new session.
  std::shared_ptr<const VideoSequence> video;
  std::shared_ptr<const FlowVolume> flow;
};

/// TCP server speaking the JSON-lines protocol, one Session per connection,
/// one thread per connection. A connection whose first bytes are an HTTP GET
/// with a websocket upgrade is switched to websocket framing; each text
/// message then carries one or more protocol lines.
class Server {
 public:
  explicit Server(ServerConfig config);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Bound port, valid after construction.
  std::uint16_t port() const;

  /// Accepts connections until stop() is called.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace trackflow
