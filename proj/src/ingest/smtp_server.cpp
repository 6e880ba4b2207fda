#include "trapwatch/ingest/smtp_server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>

#include <algorithm>
#include <cctype>
#include <optional>

#include <fmt/format.h>
#include <openssl/err.h>
#include <openssl/ssl.h>
#include <spdlog/spdlog.h>

#include "trapwatch/core/error.hpp"
#include "trapwatch/core/hash.hpp"

namespace trapwatch::ingest {

struct SmtpServer::TlsContext {
  SSL_CTX* ctx = nullptr;
  ~TlsContext() { SSL_CTX_free(ctx); }
};

namespace {

class TlsStream : public net::Stream {
 public:
  TlsStream(SSL_CTX* ctx, int fd) : ssl_(SSL_new(ctx)) { SSL_set_fd(ssl_, fd); }
  ~TlsStream() override {
    SSL_shutdown(ssl_);
    SSL_free(ssl_);
  }
  bool handshake() { return SSL_accept(ssl_) == 1; }
  long read_some(char* buf, std::size_t len) override {
    const int n = SSL_read(ssl_, buf, static_cast<int>(std::min<std::size_t>(len, 1 << 30)));
    return n > 0 ? n : (SSL_get_error(ssl_, n) == SSL_ERROR_ZERO_RETURN ? 0 : -1);
  }
  bool write_all(std::string_view data) override {
    while (!data.empty()) {
      const int n = SSL_write(ssl_, data.data(), static_cast<int>(std::min<std::size_t>(data.size(), 1 << 30)));
      if (n <= 0) return false;
      data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
  }

 private:
  SSL* ssl_;
};

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

// "FROM:<a@b> SIZE=10" -> "a@b"; nullopt when malformed. Empty reverse path allowed.
std::optional<std::string> path_argument(std::string_view arg, std::string_view keyword) {
  if (arg.size() < keyword.size() || upper(arg.substr(0, keyword.size())) != keyword) return std::nullopt;
  arg.remove_prefix(keyword.size());
  while (!arg.empty() && arg.front() == ' ') arg.remove_prefix(1);
  if (arg.empty() || arg.front() != '<') return std::nullopt;
  auto gt = arg.find('>');
  if (gt == std::string_view::npos) return std::nullopt;
  return std::string(arg.substr(1, gt - 1));
}

std::string peer_name(int fd) {
  sockaddr_storage ss{};
  socklen_t len = sizeof ss;
  if (::getpeername(fd, reinterpret_cast<sockaddr*>(&ss), &len) != 0) return "?";
  char host[INET6_ADDRSTRLEN] = {};
  if (ss.ss_family == AF_INET) {
    auto* in = reinterpret_cast<sockaddr_in*>(&ss);
    ::inet_ntop(AF_INET, &in->sin_addr, host, sizeof host);
    return fmt::format("{}:{}", host, ntohs(in->sin_port));
  }
  auto* in6 = reinterpret_cast<sockaddr_in6*>(&ss);
  ::inet_ntop(AF_INET6, &in6->sin6_addr, host, sizeof host);
  return fmt::format("[{}]:{}", host, ntohs(in6->sin6_port));
}

}  // namespace

SmtpServer::SmtpServer(SmtpConfig config, MessageHandler handler)
    : config_(std::move(config)), handler_(std::move(handler)) {
  if (!handler_) throw Error(Errc::config_error, "SMTP server needs a message handler");
  if (config_.tls_cert.empty() != config_.tls_key.empty()) {
    throw Error(Errc::config_error, "TLS needs both a certificate and a key");
  }
  if (!config_.tls_cert.empty()) {
    tls_ = std::make_unique<TlsContext>();
    tls_->ctx = SSL_CTX_new(TLS_server_method());
    if (!tls_->ctx || SSL_CTX_use_certificate_chain_file(tls_->ctx, config_.tls_cert.c_str()) != 1 ||
        SSL_CTX_use_PrivateKey_file(tls_->ctx, config_.tls_key.c_str(), SSL_FILETYPE_PEM) != 1) {
      throw Error(Errc::config_error, fmt::format("cannot load TLS material {} / {}",
                                                  config_.tls_cert, config_.tls_key));
    }
    SSL_CTX_set_min_proto_version(tls_->ctx, TLS1_2_VERSION);
  }
}

SmtpServer::~SmtpServer() { stop(); }

void SmtpServer::start() {
  if (running_) return;
  listener_ = net::listen_tcp(config_.bind);
  port_ = net::local_port(listener_);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
  spdlog::info("smtp listening on {}:{}", config_.bind.host, port_);
}

void SmtpServer::stop() {
  if (!running_.exchange(false)) return;
  listener_.shutdown();
  if (acceptor_.joinable()) acceptor_.join();
  listener_.close();
  std::unique_lock lock(mutex_);
  for (int fd : live_) ::shutdown(fd, SHUT_RDWR);
  sessions_done_.wait(lock, [this] { return active_ == 0; });
}

void SmtpServer::accept_loop() {
  while (running_) {
    pollfd pfd{listener_.fd(), POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 200);
    if (!running_) break;
    if (ready <= 0) continue;
    const int fd = ::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    net::Socket sock(fd);
    {
      std::lock_guard lock(mutex_);
      if (active_ >= config_.max_sessions) {
        net::PlainStream(fd).write_all("421 4.3.2 too many sessions, try later\r\n");
        continue;
      }
      ++active_;
      live_.insert(fd);
    }
    std::string peer = peer_name(fd);
    std::thread([this, s = std::move(sock), peer]() mutable {
      const int fd = s.fd();
      try {
        session(std::move(s), peer);
      } catch (const std::exception& e) {
        spdlog::warn("smtp session {} ended: {}", peer, e.what());
      }
      std::lock_guard lock(mutex_);
      live_.erase(fd);
      --active_;
      sessions_done_.notify_all();
    }).detach();
  }
}

void SmtpServer::session(net::Socket sock, std::string peer) {
  sock.set_timeouts(config_.idle_timeout, config_.idle_timeout);
  net::PlainStream plain(sock.fd());
  std::unique_ptr<TlsStream> tls;
  net::Stream* stream = &plain;
  net::LineReader reader(stream);

  SmtpEnvelope env;
  env.peer = peer;
  bool greeted = false;
  bool have_from = false;
  auto reply = [&](int code, std::string_view text) {
    return stream->write_all(fmt::format("{} {}\r\n", code, text));
  };
  auto reset_transaction = [&] {
    env.mail_from.clear();
    env.rcpt_to.clear();
    have_from = false;
  };
  // Credentials only travel in the clear when TLS is not configured at all
  // or plaintext auth is explicitly allowed.
  auto auth_available = [&] {
    return !config_.users.empty() && (env.tls || !tls_ || config_.allow_plaintext_auth);
  };

  reply(220, fmt::format("{} ESMTP trapwatch ready", config_.hostname));
  std::string line;
  while (reader.read_line(line)) {
    const auto sp = line.find(' ');
    const std::string verb = upper(line.substr(0, sp));
    const std::string_view arg =
        sp == std::string::npos ? std::string_view{} : std::string_view(line).substr(sp + 1);

    if (verb == "HELO" || verb == "EHLO") {
      if (arg.empty()) {
        reply(501, "5.5.4 domain required");
        continue;
      }
      env.helo = std::string(arg);
      greeted = true;
      reset_transaction();
      if (verb == "HELO") {
        reply(250, config_.hostname);
        continue;
      }
      std::vector<std::string> ext{config_.hostname, fmt::format("SIZE {}", config_.max_message_bytes),
                                   "8BITMIME"};
      if (tls_ && !env.tls) ext.push_back("STARTTLS");
      if (auth_available()) ext.push_back("AUTH PLAIN");
      ext.push_back("HELP");
      std::string out;
      for (std::size_t i = 0; i < ext.size(); ++i) {
        out += fmt::format("250{}{}\r\n", i + 1 == ext.size() ? ' ' : '-', ext[i]);
      }
      stream->write_all(out);
    } else if (verb == "STARTTLS") {
      if (!tls_ || env.tls) {
        reply(502, "5.5.1 STARTTLS not available");
        continue;
      }
      if (reader.has_buffered()) {
        reply(501, "5.5.1 pipelined data after STARTTLS");
        continue;
      }
      reply(220, "2.0.0 ready to start TLS");
      tls = std::make_unique<TlsStream>(tls_->ctx, sock.fd());
      if (!tls->handshake()) {
        spdlog::warn("smtp {}: TLS handshake failed", peer);
        return;
      }
      stream = tls.get();
      reader.reset(stream);
      env = SmtpEnvelope{};
      env.peer = peer;
      env.tls = true;
      greeted = false;
      reset_transaction();
    } else if (verb == "AUTH") {
      if (!auth_available()) {
        reply(504, "5.5.4 AUTH not available");
        continue;
      }
      if (!env.auth_user.empty()) {
        reply(503, "5.5.1 already authenticated");
        continue;
      }
      std::string_view rest = arg;
      if (upper(rest.substr(0, 5)) != "PLAIN") {
        reply(504, "5.5.4 only PLAIN is supported");
        continue;
      }
      rest.remove_prefix(std::min<std::size_t>(rest.size(), 5));
      while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
      std::string token(rest);
      if (token.empty()) {
        reply(334, "");
        if (!reader.read_line(token)) return;
      }
      std::string decoded;
      try {
        decoded = base64_decode(token);
      } catch (const Error&) {
        reply(501, "5.5.2 cannot decode credentials");
        continue;
      }
      // authzid \0 authcid \0 password
      const auto a = decoded.find('\0');
      const auto b = a == std::string::npos ? a : decoded.find('\0', a + 1);
      if (b == std::string::npos) {
        reply(501, "5.5.2 malformed credentials");
        continue;
      }
      const std::string user = decoded.substr(a + 1, b - a - 1);
      const std::string pass = decoded.substr(b + 1);
      auto it = config_.users.find(user);
      if (it == config_.users.end() || it->second != pass) {
        reply(535, "5.7.8 authentication failed");
        continue;
      }
      env.auth_user = user;
      reply(235, "2.7.0 authenticated");
    } else if (verb == "MAIL") {
      if (!greeted) {
        reply(503, "5.5.1 say HELO first");
        continue;
      }
      if (config_.require_auth && env.auth_user.empty()) {
        reply(530, "5.7.0 authentication required");
        continue;
      }
      if (have_from) {
        reply(503, "5.5.1 nested MAIL command");
        continue;
      }
      auto from = path_argument(arg, "FROM:");
      if (!from) {
        reply(501, "5.5.4 syntax: MAIL FROM:<address>");
        continue;
      }
      auto size_at = upper(arg).find("SIZE=");
      if (size_at != std::string::npos) {
        const auto declared = std::strtoull(std::string(arg.substr(size_at + 5)).c_str(), nullptr, 10);
        if (declared > config_.max_message_bytes) {
          reply(552, "5.3.4 message size exceeds fixed limit");
          continue;
        }
      }
      env.mail_from = *from;
      have_from = true;
      reply(250, "2.1.0 sender OK");
    } else if (verb == "RCPT") {
      if (!have_from) {
        reply(503, "5.5.1 need MAIL first");
        continue;
      }
      auto to = path_argument(arg, "TO:");
      if (!to || to->empty()) {
        reply(501, "5.5.4 syntax: RCPT TO:<address>");
        continue;
      }
      if (env.rcpt_to.size() >= 100) {
        reply(452, "4.5.3 too many recipients");
        continue;
      }
      env.rcpt_to.push_back(*to);
      reply(250, "2.1.5 recipient OK");
    } else if (verb == "DATA") {
      if (!have_from || env.rcpt_to.empty()) {
        reply(503, "5.5.1 need MAIL and RCPT first");
        continue;
      }
      reply(354, "end data with <CR><LF>.<CR><LF>");
      std::string data;
      bool too_big = false;
      reader.set_max_line(1u << 20);
      bool terminated = false;
      while (reader.read_line(line)) {
        if (line == ".") {
          terminated = true;
          break;
        }
        if (too_big) continue;
        std::string_view l = line;
        if (!l.empty() && l.front() == '.') l.remove_prefix(1);
        if (data.size() + l.size() + 2 > config_.max_message_bytes) {
          too_big = true;
          data.clear();
          data.shrink_to_fit();
          continue;
        }
        data.append(l);
        data.append("\r\n");
      }
      reader.set_max_line(4096);
      if (!terminated) return;
      if (too_big) {
        reply(552, "5.3.4 message size exceeds fixed limit");
      } else {
        SmtpReply r;
        try {
          r = handler_(env, std::move(data));
        } catch (const std::exception& e) {
          spdlog::error("smtp {}: handler failed: {}", peer, e.what());
          r = SmtpReply{451, "4.3.0 local error, try again later"};
        }
        reply(r.code, r.text);
      }
      reset_transaction();
    } else if (verb == "RSET") {
      reset_transaction();
      reply(250, "2.0.0 reset");
    } else if (verb == "NOOP") {
      reply(250, "2.0.0 OK");
    } else if (verb == "VRFY") {
      reply(252, "2.5.2 cannot verify, will accept");
    } else if (verb == "HELP") {
      reply(214, "HELO EHLO MAIL RCPT DATA RSET NOOP VRFY QUIT STARTTLS AUTH");
    } else if (verb == "QUIT") {
      reply(221, "2.0.0 bye");
      return;
    } else {
      reply(500, "5.5.2 command not recognized");
    }
  }
}

SmtpSendResult smtp_send(const net::Endpoint& server, const std::string& mail_from,
                         const std::vector<std::string>& rcpt_to, const std::string& message,
                         std::chrono::milliseconds timeout) {
  auto sock = net::connect_tcp(server, timeout);
  sock.set_timeouts(timeout, timeout);
  net::PlainStream stream(sock.fd());
  net::LineReader reader(&stream);
  SmtpSendResult result;
  auto read_reply = [&] {
    std::string line;
    while (reader.read_line(line)) {
      if (line.size() > 3 && line[3] == '-') continue;
      result.code = line.size() >= 3 ? std::atoi(line.substr(0, 3).c_str()) : 0;
      result.text = line.size() > 4 ? line.substr(4) : "";
      return result.code;
    }
    result.code = 0;
    result.text = "connection closed";
    return 0;
  };
  auto command = [&](const std::string& cmd) {
    if (!stream.write_all(cmd + "\r\n")) {
      result = {0, "write failed"};
      return 0;
    }
    return read_reply();
  };
  if (read_reply() != 220) return result;
  if (command("EHLO trapwatch-client") != 250) return result;
  if (command(fmt::format("MAIL FROM:<{}>", mail_from)) != 250) return result;
  for (const auto& to : rcpt_to) {
    if (command(fmt::format("RCPT TO:<{}>", to)) != 250) return result;
  }
  if (command("DATA") != 354) return result;
  std::string payload;
  payload.reserve(message.size() + message.size() / 64 + 8);
  std::size_t start = 0;
  while (start < message.size()) {
    auto nl = message.find('\n', start);
    std::string_view l(message.data() + start,
                       (nl == std::string::npos ? message.size() : nl) - start);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (!l.empty() && l.front() == '.') payload += '.';
    payload.append(l);
    payload += "\r\n";
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  payload += ".\r\n";
  if (!stream.write_all(payload)) return {0, "write failed"};
  const int code = read_reply();
  const auto final_result = result;
  if (code) stream.write_all("QUIT\r\n");
  return final_result;
}

}  // namespace trapwatch::ingest
