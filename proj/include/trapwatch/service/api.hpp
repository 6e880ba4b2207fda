#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "trapwatch/alert/delivery.hpp"
#include "trapwatch/core/catalog.hpp"
#include "trapwatch/core/error.hpp"
#include "trapwatch/core/socket.hpp"
#include "trapwatch/ingest/spool.hpp"
#include "trapwatch/service/config.hpp"
#include "trapwatch/service/pipeline.hpp"
#include "trapwatch/store/store.hpp"

namespace trapwatch::service {

/// Body of every non-2xx response.
struct ApiError {
  int http_status = 500;
  std::string code;
  std::string message;
  std::string request_id;
};

nlohmann::json to_json(const ApiError& e);
/// HTTP status for a domain error code.
int http_status_for(Errc code) noexcept;

struct RouteInfo {
  std::string method;  // GET, POST, PUT, DELETE
  std::string path;    // /api/assets/{id}/image
  std::string summary;
};

/// Every route the server registers, in registration order.
const std::vector<RouteInfo>& api_routes();

/// OpenAPI-style description generated from api_routes().
nlohmann::json api_description();

struct ApiDependencies {
  store::EventStore& store;
  const Pipeline& pipeline;
  const SpeciesCatalog& catalog;
  const ServiceConfig& config;
  alert::DeliveryPool* delivery = nullptr;
  ingest::SpoolQueue* spool = nullptr;
};

/// HTTP/1.1 JSON API on its own listener thread. Handlers are stateless
/// and run concurrently over the store.
class ApiServer {
 public:
  explicit ApiServer(ApiDependencies deps);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds (port 0 picks one) and starts serving. Throws Errc::io_error.
  void start(const net::Endpoint& bind);
  void stop();
  std::uint16_t port() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace trapwatch::service
