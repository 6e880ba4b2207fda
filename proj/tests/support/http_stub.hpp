#pragma once

#include <atomic>
#include <functional>
#include <string>
#include <thread>

#include <httplib.h>

namespace trapwatch::test {

/// A local HTTP server on an ephemeral port, stopped on destruction.
class HttpStub {
 public:
  explicit HttpStub(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post(".*", [this, handler](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      handler(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~HttpStub() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::atomic<int> calls{0};

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace trapwatch::test
