#pragma once

#include <optional>
#include <string>

#include "trapwatch/core/time.hpp"

namespace trapwatch::ingest {

/// One image extracted from a camera delivery, waiting for processing.
struct IngestEvent {
  std::string event_id;
  std::string camera_id;
  std::string image_bytes;
  std::string declared_filename;
  std::string content_type;
  std::string message_id;
  std::string sender;
  Timestamp trigger_time{};
  Timestamp receipt_time{};
};

}  // namespace trapwatch::ingest
