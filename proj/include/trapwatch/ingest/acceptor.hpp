#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "trapwatch/ingest/event.hpp"
#include "trapwatch/ingest/mime.hpp"
#include "trapwatch/store/store.hpp"

namespace trapwatch::ingest {

struct AcceptConfig {
  std::size_t max_attachment_bytes = 25u * 1024u * 1024u;
  std::chrono::milliseconds message_id_window = std::chrono::hours(24);
  std::filesystem::path quarantine_dir;
};

enum class AcceptStatus {
  accepted,      // events produced
  deduplicated,  // acknowledged, nothing new
  quarantined,   // acknowledged, kept for audit
  rejected,      // refused at the SMTP level
};

struct AcceptResult {
  AcceptStatus status = AcceptStatus::accepted;
  std::vector<IngestEvent> events;
  int smtp_code = 250;
  std::string reason;
  /// Record this once the events are durably queued.
  std::string message_id;
};

/// Turns one delivered message into ingest events: identify the camera
/// (envelope sender, else a `camera:<id>` token in the Subject), drop
/// duplicates by Message-ID and by content hash, extract image/jpeg and
/// image/png attachments, and pick the trigger time (EXIF DateTimeOriginal,
/// else the Date header, else receipt).
class MessageAcceptor {
 public:
  MessageAcceptor(store::EventStore& store, AcceptConfig config);

  AcceptResult accept(std::string_view raw, std::string_view envelope_sender, Timestamp now);

  /// Writes `<id>.<ext>` plus `<id>.reason.json` into the quarantine
  /// directory and records the entry in the store.
  store::QuarantineEntry quarantine(std::string_view bytes, std::string_view ext,
                                    std::string_view reason, std::string_view sender,
                                    Timestamp now);

  const AcceptConfig& config() const noexcept { return config_; }

 private:
  store::EventStore& store_;
  AcceptConfig config_;
};

/// The trigger-time rule on its own.
Timestamp pick_trigger_time(std::string_view image_bytes, const MimeMessage& message,
                            Timestamp receipt);

}  // namespace trapwatch::ingest
