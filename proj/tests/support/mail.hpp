#pragma once

#include <optional>
#include <string>
#include <vector>

#include "trapwatch/core/hash.hpp"

namespace trapwatch::test {

struct Attachment {
  std::string filename;
  std::string content_type = "image/jpeg";
  std::string bytes;
};

struct Mail {
  std::string from = "cam@traps.test";
  std::string to = "ingest@trapwatch.test";
  std::string subject = "Trail camera";
  std::optional<std::string> message_id;
  std::optional<std::string> date;
  std::string text = "Motion detected.";
  std::vector<Attachment> attachments;
};

/// multipart/mixed with base64 attachments wrapped at 76 columns.
inline std::string build_mail(const Mail& m) {
  const std::string boundary = "=_trapwatch_test_boundary";
  std::string out;
  out += "From: <" + m.from + ">\r\n";
  out += "To: <" + m.to + ">\r\n";
  out += "Subject: " + m.subject + "\r\n";
  if (m.message_id) out += "Message-ID: " + *m.message_id + "\r\n";
  if (m.date) out += "Date: " + *m.date + "\r\n";
  out += "MIME-Version: 1.0\r\n";
  out += "Content-Type: multipart/mixed; boundary=\"" + boundary + "\"\r\n\r\n";
  out += "--" + boundary + "\r\nContent-Type: text/plain; charset=us-ascii\r\n\r\n" + m.text + "\r\n";
  for (const auto& a : m.attachments) {
    out += "--" + boundary + "\r\n";
    out += "Content-Type: " + a.content_type + "; name=\"" + a.filename + "\"\r\n";
    out += "Content-Transfer-Encoding: base64\r\n";
    out += "Content-Disposition: attachment; filename=\"" + a.filename + "\"\r\n\r\n";
    const auto b64 = base64_encode(a.bytes);
    for (std::size_t i = 0; i < b64.size(); i += 76) out += b64.substr(i, 76) + "\r\n";
  }
  out += "--" + boundary + "--\r\n";
  return out;
}

}  // namespace trapwatch::test
