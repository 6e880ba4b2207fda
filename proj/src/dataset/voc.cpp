#include "trapwatch/dataset/voc.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fmt/format.h>

#include "trapwatch/core/error.hpp"

namespace trapwatch::dataset {
namespace {

namespace pt = boost::property_tree;

std::string trimmed(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool is_no_good(const std::string& name) {
  auto n = trimmed(name);
  std::transform(n.begin(), n.end(), n.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return n == kNoGoodLabel || n == "no_good" || n == "nogood";
}

std::optional<double> number_at(const pt::ptree& node, const char* path) {
  auto child = node.get_optional<std::string>(path);
  if (!child) return std::nullopt;
  try {
    std::size_t used = 0;
    auto s = trimmed(*child);
    double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

VocDocument parse_voc(std::string_view xml) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(xml)};
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw Error(Errc::malformed_xml, fmt::format("VOC XML: {}", e.what()));
  }
  auto root = tree.get_child_optional("annotation");
  if (!root) throw Error(Errc::malformed_xml, "VOC XML has no <annotation> root");

  VocDocument doc;
  doc.image_filename = trimmed(root->get<std::string>("filename", ""));

  auto width = number_at(*root, "size.width");
  auto height = number_at(*root, "size.height");
  if (!width || !height || *width < 1.0 || *height < 1.0) {
    throw Error(Errc::missing_size,
                fmt::format("VOC document '{}' has no usable <size>", doc.image_filename));
  }
  doc.image_width = static_cast<int>(std::lround(*width));
  doc.image_height = static_cast<int>(std::lround(*height));

  for (const auto& [tag, node] : *root) {
    if (tag != "object") continue;
    VocObject obj;
    obj.name = trimmed(node.get<std::string>("name", ""));
    if (auto d = number_at(node, "difficult")) obj.difficult = *d != 0.0;

    if (is_no_good(obj.name)) {
      doc.excluded = true;
      obj.name = std::string(kNoGoodLabel);
      // Rejected images are often tagged without a usable box.
      auto x0 = number_at(node, "bndbox.xmin");
      auto y0 = number_at(node, "bndbox.ymin");
      auto x1 = number_at(node, "bndbox.xmax");
      auto y1 = number_at(node, "bndbox.ymax");
      if (x0 && y0 && x1 && y1) {
        obj.box = {std::round(*x0), std::round(*y0), std::round(*x1), std::round(*y1)};
      }
      doc.objects.push_back(std::move(obj));
      continue;
    }

    auto x0 = number_at(node, "bndbox.xmin");
    auto y0 = number_at(node, "bndbox.ymin");
    auto x1 = number_at(node, "bndbox.xmax");
    auto y1 = number_at(node, "bndbox.ymax");
    if (!x0 || !y0 || !x1 || !y1) {
      throw Error(Errc::missing_box,
                  fmt::format("object '{}' in '{}' has no complete <bndbox>", obj.name,
                              doc.image_filename));
    }
    BoundingBox raw{std::round(*x0), std::round(*y0), std::round(*x1), std::round(*y1),
                    Frame::original};
    obj.box = clamp_box(raw, doc.image_width, doc.image_height);
    doc.objects.push_back(std::move(obj));
  }
  return doc;
}

VocDocument load_voc(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, fmt::format("cannot read {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_voc(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), fmt::format("{}: {}", path.filename().string(), e.what()));
  }
}

}  // namespace trapwatch::dataset
