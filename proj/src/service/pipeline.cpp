#include "trapwatch/service/pipeline.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "trapwatch/alert/engine.hpp"
#include "trapwatch/core/error.hpp"
#include "trapwatch/core/hash.hpp"
#include "trapwatch/gateway/image.hpp"

namespace trapwatch::service {

Pipeline::Pipeline(store::EventStore& store, const gateway::Detector& detector,
                   alert::DeliveryPool* delivery, const SpeciesCatalog& catalog)
    : store_(store), detector_(detector), delivery_(delivery), catalog_(catalog) {}

std::vector<AlertEvent> Pipeline::fire(const std::string& asset_id) const {
  const auto rules = store_.all_rules();
  auto fired = store_.fire_alerts(
      asset_id,
      [](const store::AlertContext& ctx) { return alert::evaluate_asset(ctx, now_utc()); },
      alert::max_cooldown_seconds(rules));
  if (delivery_ != nullptr) {
    for (const auto& a : fired) delivery_->submit(a);
  }
  return fired;
}

ProcessResult Pipeline::process(const ProcessRequest& request) const {
  if (request.bytes.empty()) throw Error(Errc::undecodable_image, "empty image");
  const std::string hash = sha256_hex(request.bytes);

  ProcessResult result;
  if (auto existing = store_.find_asset_by_hash(hash)) {
    // A crash between storing and alerting leaves alerts unevaluated;
    // fire_alerts is a no-op once they were.
    result.asset = *existing;
    result.detections = store_.detections_for_asset(existing->asset_id);
    result.duplicate = true;
    result.alerts = fire(existing->asset_id);
    return result;
  }

  auto type = gateway::sniff_image_type(request.bytes);
  if (!type) throw Error(Errc::undecodable_image, "not a JPEG or PNG image");
  auto image = gateway::decode_image(request.bytes);

  ImageAsset asset;
  asset.asset_id = asset_id_for_hash(hash);
  asset.content_hash = hash;
  asset.width = image.width();
  asset.height = image.height();
  asset.camera_id = request.camera_id;
  asset.received_at = request.received_at;
  asset.trigger_time = request.trigger_time.value_or(request.received_at);
  asset.storage_key = store::EventStore::blob_key(hash, gateway::file_extension(*type));

  auto detections = detector_.detect(asset, image);
  store_.put_blob(asset.storage_key, request.bytes);
  auto put = store_.put_asset(asset, detections);

  result.duplicate = put.duplicate;
  result.asset = put.duplicate ? *store_.get_asset(put.asset_id) : asset;
  result.detections = store_.detections_for_asset(put.asset_id);
  result.alerts = fire(put.asset_id);
  spdlog::debug("asset {} from {}: {} detections, {} alerts", put.asset_id,
                result.asset.source(), result.detections.size(), result.alerts.size());
  return result;
}

IngestWorkers::IngestWorkers(ingest::SpoolQueue& spool, const Pipeline& pipeline,
                             ingest::MessageAcceptor& acceptor, std::size_t threads,
                             std::chrono::milliseconds retry_delay)
    : spool_(spool),
      pipeline_(pipeline),
      acceptor_(acceptor),
      thread_count_(threads),
      retry_delay_(retry_delay) {}

IngestWorkers::~IngestWorkers() { stop(); }

void IngestWorkers::start() {
  if (running_.exchange(true)) return;
  for (std::size_t i = 0; i < thread_count_; ++i) threads_.emplace_back([this] { run(); });
}

void IngestWorkers::stop() {
  if (!running_.exchange(false)) return;
  for (auto& t : threads_) t.join();
  threads_.clear();
}

void IngestWorkers::run() {
  while (running_.load()) {
    auto item = spool_.take(std::chrono::milliseconds(200));
    if (!item) continue;
    handle(*item);
  }
}

void IngestWorkers::handle(const ingest::SpoolItem& item) {
  const auto& ev = item.event;
  ProcessRequest req;
  req.bytes = ev.image_bytes;
  req.camera_id = ev.camera_id;
  req.received_at = ev.receipt_time;
  req.trigger_time = ev.trigger_time;
  try {
    auto result = pipeline_.process(req);
    spool_.ack(item);
    ++processed_;
    if (hook_) hook_(ev, result);
  } catch (const Error& e) {
    switch (e.code()) {
      case Errc::backend_unavailable:
      case Errc::timeout:
      case Errc::non_2xx:
      case Errc::io_error:
        spdlog::warn("event {} deferred: {}", ev.event_id, e.what());
        spool_.release(item);
        std::this_thread::sleep_for(retry_delay_);
        return;
      default:
        break;
    }
    spdlog::warn("event {} quarantined: {}", ev.event_id, e.what());
    try {
      acceptor_.quarantine(ev.image_bytes, "bin",
                           fmt::format("{}: {}", to_string(e.code()), e.what()), ev.sender,
                           ev.receipt_time);
      spool_.ack(item);
    } catch (const std::exception& q) {
      spdlog::error("event {} could not be quarantined: {}", ev.event_id, q.what());
      spool_.release(item);
      std::this_thread::sleep_for(retry_delay_);
    }
  } catch (const std::exception& e) {
    spdlog::error("event {} failed: {}", ev.event_id, e.what());
    spool_.release(item);
    std::this_thread::sleep_for(retry_delay_);
  }
}

}  // namespace trapwatch::service
