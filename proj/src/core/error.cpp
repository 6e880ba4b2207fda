#include "trapwatch/core/error.hpp"

namespace trapwatch {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::unknown_class: return "unknown_class";
    case Errc::degenerate_box: return "degenerate_box";
    case Errc::frame_mismatch: return "frame_mismatch";
    case Errc::malformed_xml: return "malformed_xml";
    case Errc::missing_size: return "missing_size";
    case Errc::missing_box: return "missing_box";
    case Errc::excluded_document: return "excluded_document";
    case Errc::invalid_label: return "invalid_label";
    case Errc::empty_dataset: return "empty_dataset";
    case Errc::invalid_override: return "invalid_override";
    case Errc::empty_input: return "empty_input";
    case Errc::undecodable_image: return "undecodable_image";
    case Errc::backend_unavailable: return "backend_unavailable";
    case Errc::backend_protocol_error: return "backend_protocol_error";
    case Errc::timeout: return "timeout";
    case Errc::non_2xx: return "non_2xx";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::unknown_sender: return "unknown_sender";
    case Errc::no_attachment: return "no_attachment";
    case Errc::oversize_attachment: return "oversize_attachment";
    case Errc::queue_full: return "queue_full";
    case Errc::duplicate_asset: return "duplicate_asset";
    case Errc::integrity_violation: return "integrity_violation";
    case Errc::bad_cursor: return "bad_cursor";
    case Errc::unknown_detection: return "unknown_detection";
    case Errc::not_found: return "not_found";
    case Errc::unverified_detections: return "unverified_detections";
    case Errc::sink_unreachable: return "sink_unreachable";
    case Errc::io_error: return "io_error";
    case Errc::config_error: return "config_error";
  }
  return "unknown";
}

}  // namespace trapwatch
