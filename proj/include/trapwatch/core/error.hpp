#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trapwatch {

/// Failure categories shared by every module. The API layer maps these onto
/// HTTP statuses and the CLI onto exit codes, so keep the list stable.
enum class Errc {
  invalid_argument,
  unknown_class,
  degenerate_box,
  frame_mismatch,
  malformed_xml,
  missing_size,
  missing_box,
  excluded_document,
  invalid_label,
  empty_dataset,
  invalid_override,
  empty_input,
  undecodable_image,
  backend_unavailable,
  backend_protocol_error,
  timeout,
  non_2xx,
  shape_mismatch,
  unknown_sender,
  no_attachment,
  oversize_attachment,
  queue_full,
  duplicate_asset,
  integrity_violation,
  bad_cursor,
  unknown_detection,
  not_found,
  unverified_detections,
  sink_unreachable,
  io_error,
  config_error,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace trapwatch
