#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

// Thin POSIX TCP helpers for the line-oriented protocol.
namespace scenefuse::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// "host:port" or ":port"; throws ConfigError.
  static Endpoint parse(std::string_view text);
  std::string str() const { return host + ":" + std::to_string(port); }
};

/// Owning file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release();
  void close();
  /// shutdown(SHUT_RDWR): unblocks readers on other threads.
  void shutdown();

 private:
  int fd_ = -1;
};

/// Throws BindFailure. Port 0 picks an ephemeral port.
Socket listen_tcp(const Endpoint& at, int backlog = 64);
std::uint16_t local_port(const Socket& s);
/// Throws ConnectionLost.
Socket connect_tcp(const Endpoint& to);
/// nullopt on timeout; throws ConnectionLost when accept fails.
std::optional<Socket> accept_tcp(const Socket& listener, std::chrono::milliseconds timeout);

/// Writes everything or returns false (peer gone). Never raises SIGPIPE.
bool send_all(int fd, std::string_view data);

/// Buffered '\n'-framed reader.
class LineReader {
 public:
  enum class Status { Line, Timeout, Closed, TooLong };

  explicit LineReader(int fd, std::size_t max_line = 1 << 20) : fd_(fd), max_line_(max_line) {}

  /// Reads the next line (without the terminator). A negative timeout blocks.
  Status read_line(std::string& line, std::chrono::milliseconds timeout = std::chrono::milliseconds(-1));

 private:
  int fd_;
  std::size_t max_line_;
  std::string buffer_;
  std::size_t scanned_ = 0;
};

}  // namespace scenefuse::net
