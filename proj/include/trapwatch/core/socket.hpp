#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>

namespace trapwatch::net {

/// Owning POSIX socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) noexcept : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void close() noexcept;
  /// Wakes up any thread blocked in accept/read on this socket.
  void shutdown() noexcept;

  void set_timeouts(std::chrono::milliseconds recv, std::chrono::milliseconds send);

 private:
  int fd_ = -1;
};

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};

/// "host:port", ":port" or a bare port number.
Endpoint parse_endpoint(std::string_view text, std::string_view default_host,
                        std::uint16_t default_port);

/// Bound + listening socket. Port 0 picks an ephemeral port.
Socket listen_tcp(const Endpoint& ep, int backlog = 64);
std::uint16_t local_port(const Socket& s);

/// Throws Errc::backend_unavailable on failure.
Socket connect_tcp(const Endpoint& ep, std::chrono::milliseconds timeout);

/// Byte stream over a socket, with TLS layered on by subclasses.
class Stream {
 public:
  virtual ~Stream() = default;
  /// Returns 0 on orderly close, <0 on error/timeout.
  virtual long read_some(char* buf, std::size_t len) = 0;
  virtual bool write_all(std::string_view data) = 0;
};

class PlainStream : public Stream {
 public:
  explicit PlainStream(int fd) : fd_(fd) {}
  long read_some(char* buf, std::size_t len) override;
  bool write_all(std::string_view data) override;

 private:
  int fd_;
};

/// Buffered CRLF line reader over a Stream.
class LineReader {
 public:
  explicit LineReader(Stream* stream, std::size_t max_line = 4096)
      : stream_(stream), max_line_(max_line) {}

  void reset(Stream* stream) {
    stream_ = stream;
    buffer_.clear();
  }
  /// Line without the trailing CRLF/LF. False on EOF, error, or overlong line.
  bool read_line(std::string& line);
  void set_max_line(std::size_t max_line) noexcept { max_line_ = max_line; }
  /// True when bytes are buffered beyond the last returned line.
  bool has_buffered() const noexcept { return !buffer_.empty(); }

 private:
  Stream* stream_;
  std::size_t max_line_;
  std::string buffer_;
};

}  // namespace trapwatch::net
