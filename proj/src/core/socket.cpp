#include "trapwatch/core/socket.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include <fmt/format.h>

#include "trapwatch/core/error.hpp"

namespace trapwatch::net {

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

void Socket::close() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::set_timeouts(std::chrono::milliseconds recv, std::chrono::milliseconds send) {
  auto to_tv = [](std::chrono::milliseconds ms) {
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(ms.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((ms.count() % 1000) * 1000);
    return tv;
  };
  auto r = to_tv(recv);
  auto s = to_tv(send);
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &r, sizeof r);
  ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &s, sizeof s);
}

Endpoint parse_endpoint(std::string_view text, std::string_view default_host,
                        std::uint16_t default_port) {
  Endpoint ep{std::string(default_host), default_port};
  if (text.empty()) return ep;
  auto colon = text.rfind(':');
  std::string_view port_part = text;
  if (colon != std::string_view::npos) {
    if (colon > 0) ep.host = std::string(text.substr(0, colon));
    port_part = text.substr(colon + 1);
  } else if (text.find_first_not_of("0123456789") != std::string_view::npos) {
    ep.host = std::string(text);
    return ep;
  }
  unsigned port = 0;
  auto res = std::from_chars(port_part.data(), port_part.data() + port_part.size(), port);
  if (res.ec != std::errc{} || res.ptr != port_part.data() + port_part.size() || port > 65535) {
    throw Error(Errc::config_error, fmt::format("bad endpoint '{}'", text));
  }
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

namespace {

addrinfo* resolve(const Endpoint& ep, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  auto port = std::to_string(ep.port);
  const char* host = ep.host.empty() ? nullptr : ep.host.c_str();
  int rc = ::getaddrinfo(host, port.c_str(), &hints, &res);
  if (rc != 0) {
    throw Error(Errc::backend_unavailable,
                fmt::format("cannot resolve {}:{}: {}", ep.host, ep.port, gai_strerror(rc)));
  }
  return res;
}

}  // namespace

Socket listen_tcp(const Endpoint& ep, int backlog) {
  addrinfo* res = resolve(ep, true);
  Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
  if (!s.valid()) {
    ::freeaddrinfo(res);
    throw Error(Errc::io_error, fmt::format("socket(): {}", std::strerror(errno)));
  }
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  int rc = ::bind(s.fd(), res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) {
    throw Error(Errc::io_error,
                fmt::format("bind {}:{}: {}", ep.host, ep.port, std::strerror(errno)));
  }
  if (::listen(s.fd(), backlog) != 0) {
    throw Error(Errc::io_error, fmt::format("listen: {}", std::strerror(errno)));
  }
  return s;
}

std::uint16_t local_port(const Socket& s) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) return 0;
  return ntohs(addr.sin_port);
}

Socket connect_tcp(const Endpoint& ep, std::chrono::milliseconds timeout) {
  addrinfo* res = resolve(ep, false);
  Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
  if (!s.valid()) {
    ::freeaddrinfo(res);
    throw Error(Errc::io_error, "socket() failed");
  }
  int flags = ::fcntl(s.fd(), F_GETFL, 0);
  ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(s.fd(), res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0 && errno != EINPROGRESS) {
    throw Error(Errc::backend_unavailable,
                fmt::format("connect {}:{}: {}", ep.host, ep.port, std::strerror(errno)));
  }
  if (rc != 0) {
    pollfd pfd{s.fd(), POLLOUT, 0};
    int n = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (n <= 0 || err != 0) {
      throw Error(n == 0 ? Errc::timeout : Errc::backend_unavailable,
                  fmt::format("connect {}:{}: {}", ep.host, ep.port,
                              n == 0 ? "timed out" : std::strerror(err)));
    }
  }
  ::fcntl(s.fd(), F_SETFL, flags);
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

long PlainStream::read_some(char* buf, std::size_t len) {
  for (;;) {
    auto n = ::recv(fd_, buf, len, 0);
    if (n < 0 && errno == EINTR) continue;
    return static_cast<long>(n);
  }
}

bool PlainStream::write_all(std::string_view data) {
  while (!data.empty()) {
    auto n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

bool LineReader::read_line(std::string& line) {
  for (;;) {
    auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::size_t end = nl;
      if (end > 0 && buffer_[end - 1] == '\r') --end;
      line.assign(buffer_, 0, end);
      buffer_.erase(0, nl + 1);
      return true;
    }
    if (buffer_.size() > max_line_) return false;
    char chunk[8192];
    auto n = stream_->read_some(chunk, sizeof chunk);
    if (n <= 0) return false;
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

}  // namespace trapwatch::net
