#include "trapwatch/ingest/acceptor.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <regex>
#include <set>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "trapwatch/core/error.hpp"
#include "trapwatch/core/hash.hpp"
#include "trapwatch/gateway/image.hpp"

namespace trapwatch::ingest {
namespace {

namespace fs = std::filesystem;

std::optional<std::string> subject_camera(const MimeMessage& msg) {
  auto subject = msg.header("Subject");
  if (!subject) return std::nullopt;
  static const std::regex token(R"((?:^|[^A-Za-z0-9_])camera:([A-Za-z0-9_.\-]+))",
                                std::regex::icase);
  std::smatch m;
  if (std::regex_search(*subject, m, token)) return m[1].str();
  return std::nullopt;
}

std::string trim_copy(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

void write_file(const fs::path& path, std::string_view data) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(Errc::io_error, fmt::format("cannot create {}", path.string()));
  std::size_t done = 0;
  while (done < data.size()) {
    const auto n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0 && errno == EINTR) continue;
    if (n < 0) {
      ::close(fd);
      throw Error(Errc::io_error, fmt::format("write failed on {}", path.string()));
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
}

}  // namespace

Timestamp pick_trigger_time(std::string_view image_bytes, const MimeMessage& message,
                            Timestamp receipt) {
  if (auto exif = gateway::exif_datetime_original(image_bytes)) {
    if (auto t = parse_exif_datetime(*exif)) return *t;
  }
  if (auto date = message.header("Date")) {
    if (auto t = parse_mail_date(*date)) return *t;
  }
  return receipt;
}

MessageAcceptor::MessageAcceptor(store::EventStore& store, AcceptConfig config)
    : store_(store), config_(std::move(config)) {
  if (config_.quarantine_dir.empty()) config_.quarantine_dir = store_.directory() / "quarantine";
  std::error_code ec;
  fs::create_directories(config_.quarantine_dir, ec);
  if (ec) {
    throw Error(Errc::io_error,
                fmt::format("cannot create {}: {}", config_.quarantine_dir.string(), ec.message()));
  }
}

store::QuarantineEntry MessageAcceptor::quarantine(std::string_view bytes, std::string_view ext,
                                                   std::string_view reason, std::string_view sender,
                                                   Timestamp now) {
  const auto id = random_id();
  const auto path = config_.quarantine_dir / fmt::format("{}.{}", id, ext);
  write_file(path, bytes);
  nlohmann::json sidecar{{"reason", reason},
                         {"sender", sender},
                         {"received_at", format_rfc3339(now)},
                         {"size", bytes.size()},
                         {"sha256", sha256_hex(bytes)}};
  write_file(config_.quarantine_dir / fmt::format("{}.reason.json", id), sidecar.dump(2) + "\n");
  spdlog::warn("quarantined {} from '{}': {}", path.filename().string(), sender, reason);
  return store_.add_quarantine(reason, sender, path.string(), now);
}

AcceptResult MessageAcceptor::accept(std::string_view raw, std::string_view envelope_sender,
                                     Timestamp now) {
  AcceptResult result;
  MimeMessage msg;
  try {
    msg = parse_mime(raw);
  } catch (const Error& e) {
    result.status = AcceptStatus::rejected;
    result.smtp_code = 554;
    result.reason = fmt::format("malformed message: {}", e.what());
    return result;
  }

  std::string sender = extract_address(envelope_sender);
  if (sender.empty()) {
    if (auto from = msg.header("From")) sender = extract_address(*from);
  }
  auto camera = store_.find_camera_by_sender(sender);
  if (!camera) {
    if (auto id = subject_camera(msg)) camera = store_.get_camera(*id);
  }
  if (!camera || !camera->active) {
    const auto why = camera ? fmt::format("camera {} is inactive", camera->camera_id)
                            : fmt::format("unknown sender '{}'", sender);
    quarantine(raw, "eml", why, sender, now);
    result.status = AcceptStatus::quarantined;
    result.reason = why;
    return result;
  }

  result.message_id = trim_copy(msg.header("Message-ID").value_or(""));
  if (store_.message_seen(result.message_id, now, config_.message_id_window)) {
    result.status = AcceptStatus::deduplicated;
    result.reason = fmt::format("message {} already received", result.message_id);
    return result;
  }

  std::vector<const MimePart*> images;
  for (const auto* part : leaf_parts(msg.root)) {
    const auto& type = part->content_type.media_type;
    if (type == "image/jpeg" || type == "image/png") images.push_back(part);
  }
  if (images.empty()) {
    result.status = AcceptStatus::rejected;
    result.smtp_code = 554;
    result.reason = "no image/jpeg or image/png attachment";
    return result;
  }
  for (const auto* part : images) {
    if (part->body.size() > config_.max_attachment_bytes) {
      result.status = AcceptStatus::rejected;
      result.smtp_code = 552;
      result.reason = fmt::format("attachment '{}' is {} bytes, limit {}", part->filename,
                                  part->body.size(), config_.max_attachment_bytes);
      return result;
    }
  }

  std::set<std::string> seen;
  for (const auto* part : images) {
    if (part->body.empty()) continue;
    const auto hash = sha256_hex(part->body);
    if (!seen.insert(hash).second || store_.find_asset_by_hash(hash)) continue;
    IngestEvent e;
    e.event_id = random_id();
    e.camera_id = camera->camera_id;
    e.image_bytes = part->body;
    e.declared_filename = part->filename;
    e.content_type = part->content_type.media_type;
    e.message_id = result.message_id;
    e.sender = sender;
    e.receipt_time = now;
    e.trigger_time = pick_trigger_time(part->body, msg, now);
    result.events.push_back(std::move(e));
  }
  if (result.events.empty()) {
    result.status = AcceptStatus::deduplicated;
    result.reason = "every image is already stored";
  }
  return result;
}

}  // namespace trapwatch::ingest
