#include "blendforge/websocket.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstring>
#include <random>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/evp.h>

#include "blendforge/log.hpp"

namespace blendforge::ws {

namespace {

constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
constexpr std::size_t kMaxHeader = 16 * 1024;

std::string base64(const unsigned char* data, std::size_t size) {
  std::string out(4 * ((size + 2) / 3), '\0');
  const int written =
      EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data, static_cast<int>(size));
  out.resize(static_cast<std::size_t>(written));
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

struct HttpHead {
  std::string startLine;
  std::vector<std::pair<std::string, std::string>> headers;  // lower-cased names

  std::string get(std::string_view name) const {
    for (const auto& [k, v] : headers)
      if (k == name) return v;
    return {};
  }
};

HttpHead parse_head(std::string_view head) {
  HttpHead out;
  bool first = true;
  while (!head.empty()) {
    const auto eol = head.find("\r\n");
    const std::string_view line = head.substr(0, eol);
    head.remove_prefix(eol == std::string_view::npos ? head.size() : eol + 2);
    if (first) {
      out.startLine = std::string(line);
      first = false;
      continue;
    }
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    out.headers.emplace_back(lower(std::string(trim(line.substr(0, colon)))),
                             std::string(trim(line.substr(colon + 1))));
  }
  return out;
}

bool send_all(int fd, std::string_view bytes) {
  while (!bytes.empty()) {
    const ssize_t n = ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      return false;
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

// Reads until the blank line ending an HTTP head; returns head and leftover.
std::optional<std::pair<std::string, std::string>> read_head(int fd, int timeoutMs) {
  std::string buffer;
  std::array<char, 4096> chunk;
  while (buffer.size() < kMaxHeader) {
    const auto end = buffer.find("\r\n\r\n");
    if (end != std::string::npos) return std::pair{buffer.substr(0, end), buffer.substr(end + 4)};
    pollfd p{fd, POLLIN, 0};
    if (::poll(&p, 1, timeoutMs) <= 0) return std::nullopt;
    const ssize_t n = ::recv(fd, chunk.data(), chunk.size(), 0);
    if (n <= 0) return std::nullopt;
    buffer.append(chunk.data(), static_cast<std::size_t>(n));
  }
  return std::nullopt;
}

// Server side of the opening handshake.
std::optional<std::string> accept_handshake(int fd) {
  auto head = read_head(fd, 5000);
  if (!head) return std::nullopt;
  const HttpHead req = parse_head(head->first);
  const std::string key = req.get("sec-websocket-key");
  const bool ok = req.startLine.rfind("GET ", 0) == 0 &&
                  lower(req.get("upgrade")) == "websocket" &&
                  lower(req.get("connection")).find("upgrade") != std::string::npos &&
                  req.get("sec-websocket-version") == "13" && !key.empty();
  if (!ok) {
    send_all(fd, "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
    return std::nullopt;
  }
  const std::string response =
      "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
      "Sec-WebSocket-Accept: " +
      accept_key(key) + "\r\n\r\n";
  if (!send_all(fd, response)) return std::nullopt;
  return std::move(head->second);
}

}  // namespace

std::string accept_key(std::string_view clientKey) {
  const std::string input = std::string(clientKey) + std::string(kGuid);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(input.data(), input.size(), digest, &length, EVP_sha1(), nullptr) != 1)
    throw Error("SHA-1 digest failed");
  return base64(digest, length);
}

std::string encode_frame(Opcode opcode, std::string_view payload,
                         std::optional<std::uint32_t> maskKey) {
  std::string out;
  out.reserve(payload.size() + 14);
  out.push_back(static_cast<char>(0x80 | static_cast<std::uint8_t>(opcode)));
  const std::uint8_t maskBit = maskKey ? 0x80 : 0x00;
  const std::uint64_t size = payload.size();
  if (size < 126) {
    out.push_back(static_cast<char>(maskBit | size));
  } else if (size <= 0xFFFF) {
    out.push_back(static_cast<char>(maskBit | 126));
    out.push_back(static_cast<char>(size >> 8));
    out.push_back(static_cast<char>(size & 0xFF));
  } else {
    out.push_back(static_cast<char>(maskBit | 127));
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<char>((size >> shift) & 0xFF));
  }
  if (!maskKey) {
    out.append(payload);
    return out;
  }
  std::array<char, 4> mask;
  for (int i = 0; i < 4; ++i) mask[i] = static_cast<char>((*maskKey >> (24 - 8 * i)) & 0xFF);
  out.append(mask.data(), 4);
  const std::size_t start = out.size();
  out.append(payload);
  for (std::size_t i = 0; i < payload.size(); ++i) out[start + i] ^= mask[i % 4];
  return out;
}

std::optional<RawFrame> FrameParser::next() {
  const auto* p = reinterpret_cast<const unsigned char*>(buffer_.data());
  const std::size_t avail = buffer_.size();
  if (avail < 2) return std::nullopt;
  RawFrame frame;
  frame.fin = (p[0] & 0x80) != 0;
  if (p[0] & 0x70) throw Error("websocket frame uses reserved bits");
  frame.opcode = static_cast<Opcode>(p[0] & 0x0F);
  frame.masked = (p[1] & 0x80) != 0;
  std::uint64_t size = p[1] & 0x7F;
  std::size_t pos = 2;
  if (size == 126) {
    if (avail < 4) return std::nullopt;
    size = (std::uint64_t{p[2]} << 8) | p[3];
    pos = 4;
  } else if (size == 127) {
    if (avail < 10) return std::nullopt;
    size = 0;
    for (int i = 0; i < 8; ++i) size = (size << 8) | p[2 + i];
    pos = 10;
  }
  const auto op = static_cast<std::uint8_t>(frame.opcode);
  if (op >= 0x8 && (size > 125 || !frame.fin)) throw Error("malformed websocket control frame");
  if (!(op <= 0x2 || (op >= 0x8 && op <= 0xA))) throw Error("unknown websocket opcode");
  if (size > maxPayload_) throw Error("websocket frame too large");
  std::array<unsigned char, 4> mask{};
  if (frame.masked) {
    if (avail < pos + 4) return std::nullopt;
    std::memcpy(mask.data(), p + pos, 4);
    pos += 4;
  }
  if (avail < pos + size) return std::nullopt;
  frame.payload.assign(buffer_, pos, static_cast<std::size_t>(size));
  if (frame.masked)
    for (std::size_t i = 0; i < frame.payload.size(); ++i) frame.payload[i] ^= static_cast<char>(mask[i % 4]);
  buffer_.erase(0, pos + static_cast<std::size_t>(size));
  return frame;
}

Connection::Connection(int fd, bool client, std::string leftover)
    : fd_(fd), client_(client), maskState_(std::random_device{}()) {
  parser_.feed(leftover);
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

Connection::~Connection() {
  if (fd_ >= 0) ::close(fd_);
}

bool Connection::fill(std::chrono::milliseconds timeout) {
  pollfd p{fd_, POLLIN, 0};
  const int ready = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (ready == 0) {
    timedOut_ = true;
    return false;
  }
  if (ready < 0) {
    if (errno == EINTR) return true;
    closed_ = true;
    return false;
  }
  std::array<char, 65536> chunk;
  const ssize_t n = ::recv(fd_, chunk.data(), chunk.size(), 0);
  if (n <= 0) {
    if (n < 0 && errno == EINTR) return true;
    closed_ = true;
    return false;
  }
  parser_.feed({chunk.data(), static_cast<std::size_t>(n)});
  return true;
}

bool Connection::readable(std::chrono::milliseconds timeout) {
  if (!parser_.empty()) return true;
  pollfd p{fd_, POLLIN, 0};
  return ::poll(&p, 1, static_cast<int>(timeout.count())) > 0;
}

std::optional<Message> Connection::receive(std::chrono::milliseconds timeout) {
  timedOut_ = false;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::optional<Message> partial;
  while (!closed_) {
    std::optional<RawFrame> frame;
    try {
      frame = parser_.next();
    } catch (const Error& e) {
      log_warning(std::string("websocket: ") + e.what());
      send_frame(Opcode::Close, std::string("\x03\xEA", 2));  // 1002 protocol error
      closed_ = true;
      return std::nullopt;
    }
    if (!frame) {
      auto wait = std::chrono::milliseconds(-1);
      if (timeout.count() >= 0)
        wait = std::max(std::chrono::milliseconds(0),
                        std::chrono::duration_cast<std::chrono::milliseconds>(
                            deadline - std::chrono::steady_clock::now()));
      if (!fill(wait)) return std::nullopt;
      continue;
    }
    if (!client_ && !frame->masked) {
      send_frame(Opcode::Close, std::string("\x03\xEA", 2));
      closed_ = true;
      return std::nullopt;
    }
    switch (frame->opcode) {
      case Opcode::Ping:
        send_frame(Opcode::Pong, frame->payload);
        continue;
      case Opcode::Pong:
        continue;
      case Opcode::Close:
        send_frame(Opcode::Close, frame->payload.substr(0, 2));
        closed_ = true;
        return std::nullopt;
      case Opcode::Text:
      case Opcode::Binary:
        if (partial) throw Error("websocket message interleaved with a new one");
        partial = Message{frame->opcode == Opcode::Binary, std::move(frame->payload)};
        break;
      case Opcode::Continuation:
        if (!partial) {
          closed_ = true;
          return std::nullopt;
        }
        partial->data += frame->payload;
        break;
    }
    if (frame->fin) return partial;
  }
  return std::nullopt;
}

void Connection::send_frame(Opcode opcode, std::string_view payload) {
  std::lock_guard lock(sendMutex_);
  std::optional<std::uint32_t> mask;
  if (client_) {
    maskState_ ^= maskState_ << 13;
    maskState_ ^= maskState_ >> 17;
    maskState_ ^= maskState_ << 5;
    mask = maskState_;
  }
  if (!send_all(fd_, encode_frame(opcode, payload, mask))) closed_ = true;
}

void Connection::send_text(std::string_view text) { send_frame(Opcode::Text, text); }
void Connection::send_binary(std::string_view bytes) { send_frame(Opcode::Binary, bytes); }

void Connection::close() {
  if (closed_) return;
  send_frame(Opcode::Close, std::string("\x03\xE8", 2));  // 1000 normal
  closed_ = true;
  ::shutdown(fd_, SHUT_WR);
}

Server::Server(std::uint16_t port, Handler handler, bool loopbackOnly)
    : handler_(std::move(handler)) {
  listenFd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listenFd_ < 0) throw Error("cannot create socket");
  const int one = 1;
  ::setsockopt(listenFd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(loopbackOnly ? INADDR_LOOPBACK : INADDR_ANY);
  if (::bind(listenFd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
      ::listen(listenFd_, 16) < 0) {
    ::close(listenFd_);
    throw Error("cannot listen on port " + std::to_string(port) + ": " + std::strerror(errno));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listenFd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Server::~Server() {
  stop();
  if (listenFd_ >= 0) ::close(listenFd_);
}

void Server::run() {
  running_ = true;
  while (running_) {
    pollfd p{listenFd_, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0) continue;
    const int fd = ::accept(listenFd_, nullptr, nullptr);
    if (fd < 0) continue;
    std::lock_guard lock(mutex_);
    if (!running_) {
      ::close(fd);
      break;
    }
    clientFds_.push_back(fd);
    workers_.emplace_back([this, fd] {
      auto leftover = accept_handshake(fd);
      {
        // The connection closes the descriptor; unregister first so stop()
        // never touches a recycled one.
        std::unique_ptr<Connection> conn;
        if (leftover) conn = std::make_unique<Connection>(fd, false, std::move(*leftover));
        if (conn) {
          try {
            handler_(*conn);
          } catch (const std::exception& e) {
            log_warning(std::string("connection handler failed: ") + e.what());
          }
          conn->close();
        }
        std::lock_guard guard(mutex_);
        clientFds_.erase(std::remove(clientFds_.begin(), clientFds_.end(), fd), clientFds_.end());
        if (!conn) ::close(fd);
      }
    });
  }
}

void Server::stop() {
  running_ = false;
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mutex_);
    for (int fd : clientFds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers)
    if (t.joinable()) t.join();
}

std::unique_ptr<Connection> connect(const std::string& host, std::uint16_t port,
                                    const std::string& path) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &found) != 0 || !found)
    throw Error("cannot resolve " + host);
  int fd = -1;
  for (addrinfo* a = found; a != nullptr; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(found);
  if (fd < 0) throw Error("cannot connect to " + host + ":" + std::to_string(port));

  std::array<unsigned char, 16> nonce;
  std::random_device rd;
  for (auto& b : nonce) b = static_cast<unsigned char>(rd());
  const std::string key = base64(nonce.data(), nonce.size());
  const std::string request = "GET " + path + " HTTP/1.1\r\nHost: " + host + ":" +
                              std::to_string(port) +
                              "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                              "Sec-WebSocket-Key: " +
                              key + "\r\nSec-WebSocket-Version: 13\r\n\r\n";
  auto fail = [&](const std::string& why) {
    ::close(fd);
    return Error("websocket handshake with " + host + " failed: " + why);
  };
  if (!send_all(fd, request)) throw fail("send");
  auto head = read_head(fd, 5000);
  if (!head) throw fail("no response");
  const HttpHead response = parse_head(head->first);
  if (response.startLine.find(" 101") == std::string::npos) throw fail(response.startLine);
  if (response.get("sec-websocket-accept") != accept_key(key)) throw fail("bad accept key");
  return std::make_unique<Connection>(fd, true, std::move(head->second));
}

}  // namespace blendforge::ws
