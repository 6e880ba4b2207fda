#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace trapwatch::ingest {

using HeaderList = std::vector<std::pair<std::string, std::string>>;

/// Case-insensitive lookup of the first header named `name`.
std::optional<std::string> find_header(const HeaderList& headers, std::string_view name);

/// `type/subtype; key=value; ...` split into a lowercase media type and
/// parameters (keys lowercase, values unquoted).
struct ContentType {
  std::string media_type = "text/plain";
  std::map<std::string, std::string> params;
};
ContentType parse_content_type(std::string_view value);

struct MimePart {
  HeaderList headers;
  ContentType content_type;
  /// From Content-Disposition `filename` or Content-Type `name`.
  std::string filename;
  /// Body with the transfer encoding removed.
  std::string body;
  std::vector<MimePart> children;
};

struct MimeMessage {
  HeaderList headers;
  MimePart root;
  std::optional<std::string> header(std::string_view name) const {
    return find_header(headers, name);
  }
};

/// Parses an RFC 5322 / MIME message. Throws Errc::invalid_argument when
/// there are no header fields or a multipart boundary is missing.
MimeMessage parse_mime(std::string_view raw);

/// Depth-first list of non-multipart parts.
std::vector<const MimePart*> leaf_parts(const MimePart& root);

/// `Name <user@host>` or `<user@host>` or `user@host`, lowercased.
std::string extract_address(std::string_view value);

std::string decode_quoted_printable(std::string_view text);

}  // namespace trapwatch::ingest
