#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <string>

#include "blendforge/session.hpp"
#include "blendforge/websocket.hpp"

namespace blendforge {

struct ServeOptions {
  std::uint16_t port = 8765;
  std::string modelId = "model";
  SolveParams params;
  // A move followed by more input within this window is acknowledged without
  // solving.
  std::chrono::milliseconds debounce{16};
  bool loopbackOnly = false;
};

/// Feeds one connection's messages through `session` in arrival order.
void run_connection(ws::Connection& connection, Session& session,
                    std::chrono::milliseconds debounce);

/// WebSocket server with one session per connection over a shared model.
class SessionServer {
 public:
  SessionServer(std::shared_ptr<const DeformationModel> model, ServeOptions options);

  std::uint16_t port() const { return server_.port(); }
  void run() { server_.run(); }
  void stop() { server_.stop(); }

 private:
  std::shared_ptr<const DeformationModel> model_;
  ServeOptions options_;
  std::atomic<std::uint64_t> sessions_{0};
  ws::Server server_;
};

}  // namespace blendforge
