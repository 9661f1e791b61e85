#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "blendforge/types.hpp"

namespace blendforge::ws {

enum class Opcode : std::uint8_t {
  Continuation = 0x0,
  Text = 0x1,
  Binary = 0x2,
  Close = 0x8,
  Ping = 0x9,
  Pong = 0xA,
};

struct Message {
  bool binary = false;
  std::string data;
};

/// Sec-WebSocket-Accept for a client key.
std::string accept_key(std::string_view clientKey);

/// One complete frame (FIN set). Client frames must be masked.
std::string encode_frame(Opcode opcode, std::string_view payload,
                         std::optional<std::uint32_t> maskKey = std::nullopt);

struct RawFrame {
  bool fin = true;
  bool masked = false;
  Opcode opcode = Opcode::Text;
  std::string payload;  // unmasked
};

/// Incremental frame decoder.
class FrameParser {
 public:
  explicit FrameParser(std::size_t maxPayload = std::size_t{1} << 28) : maxPayload_(maxPayload) {}

  void feed(std::string_view bytes) { buffer_.append(bytes); }
  /// Next complete frame, if buffered. Throws Error on protocol violations.
  std::optional<RawFrame> next();
  bool empty() const { return buffer_.empty(); }

 private:
  std::string buffer_;
  std::size_t maxPayload_;
};

/// A handshaken connection over a blocking socket. Send is thread-safe.
class Connection {
 public:
  Connection(int fd, bool client, std::string leftover = {});
  ~Connection();
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  /// Next data message. Answers pings, returns nullopt on close, error or
  /// timeout (negative timeout waits forever).
  std::optional<Message> receive(std::chrono::milliseconds timeout = std::chrono::milliseconds(-1));

  /// True if a message starts arriving within `timeout`.
  bool readable(std::chrono::milliseconds timeout);

  void send_text(std::string_view text);
  void send_binary(std::string_view bytes);
  void close();
  bool closed() const { return closed_; }
  bool timedOut() const { return timedOut_; }
  int fd() const { return fd_; }

 private:
  void send_frame(Opcode opcode, std::string_view payload);
  bool fill(std::chrono::milliseconds timeout);

  int fd_;
  bool client_;
  FrameParser parser_;
  std::mutex sendMutex_;
  std::atomic<bool> closed_{false};
  bool timedOut_ = false;
  std::uint32_t maskState_;
};

/// Accepts connections and runs `handler` on one thread per connection.
class Server {
 public:
  using Handler = std::function<void(Connection&)>;

  /// Port 0 picks a free port.
  Server(std::uint16_t port, Handler handler, bool loopbackOnly = false);
  ~Server();

  std::uint16_t port() const { return port_; }
  /// Blocks until stop().
  void run();
  void stop();

 private:
  int listenFd_ = -1;
  std::uint16_t port_ = 0;
  Handler handler_;
  std::atomic<bool> running_{false};
  std::mutex mutex_;
  std::vector<std::thread> workers_;
  std::vector<int> clientFds_;
};

/// Opens a client connection to ws://host:port/path.
std::unique_ptr<Connection> connect(const std::string& host, std::uint16_t port,
                                    const std::string& path = "/");

}  // namespace blendforge::ws
