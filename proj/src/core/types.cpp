#include "trapwatch/core/types.hpp"

#include "trapwatch/core/error.hpp"

namespace trapwatch {

std::string_view to_string(IrSensitivity s) noexcept {
  switch (s) {
    case IrSensitivity::low: return "low";
    case IrSensitivity::medium: return "medium";
    case IrSensitivity::high: return "high";
  }
  return "medium";
}

IrSensitivity parse_ir_sensitivity(std::string_view text) {
  if (text == "low") return IrSensitivity::low;
  if (text == "medium") return IrSensitivity::medium;
  if (text == "high") return IrSensitivity::high;
  throw Error(Errc::invalid_argument, "ir_sensitivity must be low, medium or high");
}

std::string asset_id_for_hash(std::string_view content_hash) {
  return std::string(content_hash.substr(0, 32));
}

std::string_view to_string(VerdictSentinel s) noexcept {
  return s == VerdictSentinel::blank ? "BLANK" : "NO_GOOD";
}

std::optional<VerdictSentinel> parse_sentinel(std::string_view text) {
  if (text == "BLANK") return VerdictSentinel::blank;
  if (text == "NO_GOOD" || text == "NO GOOD") return VerdictSentinel::no_good;
  return std::nullopt;
}

}  // namespace trapwatch
