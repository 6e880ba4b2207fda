#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "trapwatch/core/socket.hpp"

namespace trapwatch::ingest {

struct SmtpEnvelope {
  std::string helo;
  std::string mail_from;
  std::vector<std::string> rcpt_to;
  std::string peer;
  bool tls = false;
  std::string auth_user;
};

struct SmtpReply {
  int code = 250;
  std::string text = "OK";
};

/// Called once per completed DATA transaction with the unstuffed message.
using MessageHandler = std::function<SmtpReply(const SmtpEnvelope&, std::string data)>;

inline constexpr std::uint16_t kDefaultSmtpPort = 2525;

struct SmtpConfig {
  net::Endpoint bind{"0.0.0.0", kDefaultSmtpPort};
  std::string hostname = "trapwatch";
  std::size_t max_message_bytes = 64u * 1024u * 1024u;
  /// PEM files; STARTTLS is offered when both are set.
  std::string tls_cert;
  std::string tls_key;
  /// When set, MAIL requires a successful AUTH PLAIN.
  bool require_auth = false;
  /// Permit AUTH before STARTTLS (tests, trusted links).
  bool allow_plaintext_auth = false;
  std::map<std::string, std::string> users;
  std::chrono::seconds idle_timeout{300};
  std::size_t max_sessions = 64;
};

/// Minimal receiving MTA: HELO/EHLO, MAIL, RCPT, DATA, RSET, NOOP, VRFY,
/// HELP, QUIT, STARTTLS, AUTH PLAIN. It never relays; every accepted
/// message goes to the handler. One thread per session.
class SmtpServer {
 public:
  SmtpServer(SmtpConfig config, MessageHandler handler);
  ~SmtpServer();
  SmtpServer(const SmtpServer&) = delete;
  SmtpServer& operator=(const SmtpServer&) = delete;

  /// Binds and starts accepting. Throws Errc::io_error / config_error.
  void start();
  /// Stops accepting, closes live sessions and waits for them.
  void stop();
  std::uint16_t port() const noexcept { return port_; }

  struct TlsContext;

 private:
  void accept_loop();
  void session(net::Socket sock, std::string peer);

  SmtpConfig config_;
  MessageHandler handler_;
  std::unique_ptr<TlsContext> tls_;
  net::Socket listener_;
  std::uint16_t port_ = 0;
  std::thread acceptor_;
  std::atomic<bool> running_{false};
  std::mutex mutex_;
  std::condition_variable sessions_done_;
  std::set<int> live_;
  std::size_t active_ = 0;
};

/// Client side of the same dialogue, for tests and tools. Returns the final
/// reply code of the DATA transaction (or the first failing command).
struct SmtpSendResult {
  int code = 0;
  std::string text;
};
SmtpSendResult smtp_send(const net::Endpoint& server, const std::string& mail_from,
                         const std::vector<std::string>& rcpt_to, const std::string& message,
                         std::chrono::milliseconds timeout = std::chrono::seconds(30));

}  // namespace trapwatch::ingest
