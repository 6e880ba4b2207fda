#include "trapwatch/ingest/mime.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

#include "trapwatch/core/error.hpp"
#include "trapwatch/core/hash.hpp"

namespace trapwatch::ingest {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Splits at the first empty line. Accepts CRLF or bare LF.
std::pair<std::string_view, std::string_view> split_head(std::string_view raw) {
  if (raw.rfind("\r\n", 0) == 0) return {{}, raw.substr(2)};
  if (raw.rfind("\n", 0) == 0) return {{}, raw.substr(1)};
  std::size_t crlf = raw.find("\r\n\r\n");
  std::size_t lf = raw.find("\n\n");
  if (crlf == std::string_view::npos && lf == std::string_view::npos) {
    return {raw, {}};
  }
  if (crlf != std::string_view::npos && (lf == std::string_view::npos || crlf < lf)) {
    return {raw.substr(0, crlf), raw.substr(crlf + 4)};
  }
  return {raw.substr(0, lf), raw.substr(lf + 2)};
}

HeaderList parse_headers(std::string_view head) {
  HeaderList out;
  std::size_t pos = 0;
  while (pos < head.size()) {
    auto nl = head.find('\n', pos);
    std::string_view line = head.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? head.size() : nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if ((line.front() == ' ' || line.front() == '\t') && !out.empty()) {
      out.back().second += ' ';
      out.back().second += trim(line);
      continue;
    }
    auto colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    out.emplace_back(std::string(trim(line.substr(0, colon))), std::string(trim(line.substr(colon + 1))));
  }
  return out;
}

std::map<std::string, std::string> parse_params(std::string_view rest) {
  std::map<std::string, std::string> params;
  while (!rest.empty()) {
    // Separator is the first ';' outside quotes.
    std::size_t semi = std::string_view::npos;
    bool quoted = false;
    for (std::size_t i = 0; i < rest.size(); ++i) {
      if (rest[i] == '"') quoted = !quoted;
      if (rest[i] == ';' && !quoted) {
        semi = i;
        break;
      }
    }
    std::string_view item = trim(rest.substr(0, semi));
    rest = semi == std::string_view::npos ? std::string_view{} : rest.substr(semi + 1);
    auto eq = item.find('=');
    if (eq == std::string_view::npos) continue;
    std::string key = lower(trim(item.substr(0, eq)));
    std::string_view value = trim(item.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    params[key] = std::string(value);
  }
  return params;
}

std::string decode_body(std::string_view body, std::string_view encoding) {
  const auto enc = lower(trim(encoding));
  if (enc == "base64") return base64_decode(body);
  if (enc == "quoted-printable") return decode_quoted_printable(body);
  return std::string(body);
}

MimePart parse_part(std::string_view raw, int depth) {
  if (depth > 16) throw Error(Errc::invalid_argument, "MIME nesting too deep");
  auto [head, body] = split_head(raw);
  MimePart part;
  part.headers = parse_headers(head);
  if (auto ct = find_header(part.headers, "Content-Type")) part.content_type = parse_content_type(*ct);
  if (auto cd = find_header(part.headers, "Content-Disposition")) {
    auto semi = cd->find(';');
    if (semi != std::string::npos) {
      auto params = parse_params(std::string_view(*cd).substr(semi + 1));
      if (auto it = params.find("filename"); it != params.end()) part.filename = it->second;
    }
  }
  if (part.filename.empty()) {
    if (auto it = part.content_type.params.find("name"); it != part.content_type.params.end()) {
      part.filename = it->second;
    }
  }
  if (part.content_type.media_type.rfind("multipart/", 0) == 0) {
    auto it = part.content_type.params.find("boundary");
    if (it == part.content_type.params.end() || it->second.empty()) {
      throw Error(Errc::invalid_argument, "multipart part without a boundary");
    }
    const std::string delim = "--" + it->second;
    std::size_t pos = body.find(delim);
    if (pos == std::string_view::npos) {
      throw Error(Errc::invalid_argument, "multipart boundary never appears");
    }
    for (;;) {
      std::size_t after = pos + delim.size();
      if (body.substr(after, 2) == "--") break;  // closing delimiter
      auto eol = body.find('\n', after);
      if (eol == std::string_view::npos) break;
      std::size_t start = eol + 1;
      std::size_t next = body.find(delim, start);
      while (next != std::string_view::npos && next > 0 && body[next - 1] != '\n') {
        next = body.find(delim, next + 1);
      }
      if (next == std::string_view::npos) {
        throw Error(Errc::invalid_argument, "multipart body is not terminated");
      }
      std::size_t end = next;
      if (end > start && body[end - 1] == '\n') --end;
      if (end > start && body[end - 1] == '\r') --end;
      part.children.push_back(parse_part(body.substr(start, end - start), depth + 1));
      pos = next;
    }
    return part;
  }
  part.body = decode_body(body, find_header(part.headers, "Content-Transfer-Encoding").value_or(""));
  return part;
}

void collect(const MimePart& p, std::vector<const MimePart*>& out) {
  if (p.children.empty() && p.content_type.media_type.rfind("multipart/", 0) != 0) {
    out.push_back(&p);
    return;
  }
  for (const auto& c : p.children) collect(c, out);
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

}  // namespace

std::optional<std::string> find_header(const HeaderList& headers, std::string_view name) {
  for (const auto& [k, v] : headers) {
    if (k.size() == name.size() &&
        std::equal(k.begin(), k.end(), name.begin(), [](char a, char b) {
          return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
        })) {
      return v;
    }
  }
  return std::nullopt;
}

ContentType parse_content_type(std::string_view value) {
  ContentType ct;
  auto semi = value.find(';');
  auto type = lower(trim(value.substr(0, semi)));
  if (!type.empty()) ct.media_type = type;
  if (semi != std::string_view::npos) ct.params = parse_params(value.substr(semi + 1));
  return ct;
}

MimeMessage parse_mime(std::string_view raw) {
  if (split_head(raw).first.empty()) throw Error(Errc::invalid_argument, "message has no headers");
  MimeMessage msg;
  msg.root = parse_part(raw, 0);
  msg.headers = msg.root.headers;
  if (msg.headers.empty()) throw Error(Errc::invalid_argument, "message has no headers");
  return msg;
}

std::vector<const MimePart*> leaf_parts(const MimePart& root) {
  std::vector<const MimePart*> out;
  collect(root, out);
  return out;
}

std::string extract_address(std::string_view value) {
  auto lt = value.rfind('<');
  auto gt = value.rfind('>');
  if (lt != std::string_view::npos && gt != std::string_view::npos && gt > lt) {
    value = value.substr(lt + 1, gt - lt - 1);
  }
  return lower(trim(value));
}

std::string decode_quoted_printable(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '=') {
      out.push_back(c);
      continue;
    }
    if (i + 1 < text.size() && (text[i + 1] == '\n' || text[i + 1] == '\r')) {
      // Soft line break.
      i += text[i + 1] == '\r' && i + 2 < text.size() && text[i + 2] == '\n' ? 2 : 1;
      continue;
    }
    if (i + 2 < text.size() && hex_value(text[i + 1]) >= 0 && hex_value(text[i + 2]) >= 0) {
      out.push_back(static_cast<char>(hex_value(text[i + 1]) * 16 + hex_value(text[i + 2])));
      i += 2;
      continue;
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace trapwatch::ingest
