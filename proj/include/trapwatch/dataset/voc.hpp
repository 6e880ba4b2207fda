#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trapwatch/core/box.hpp"

namespace trapwatch::dataset {

/// Object label that marks an image as rejected during tagging.
inline constexpr std::string_view kNoGoodLabel = "no good";

struct VocObject {
  std::string name;
  BoundingBox box;  // integer pixel corners, clamped to the image
  std::optional<bool> difficult;
};

struct VocDocument {
  std::string image_filename;
  int image_width = 0;
  int image_height = 0;
  std::vector<VocObject> objects;
  /// Set when any object is labelled "no good"; such documents are dropped
  /// from every downstream output.
  bool excluded = false;
};

/// Errors: malformed_xml, missing_size, missing_box, degenerate_box.
VocDocument parse_voc(std::string_view xml);
VocDocument load_voc(const std::filesystem::path& path);

}  // namespace trapwatch::dataset
