#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace trapwatch {

/// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
/// Skips whitespace; throws Errc::invalid_argument on malformed input.
std::string base64_decode(std::string_view text);

std::string hex_encode(std::string_view bytes);
/// Returns false on odd length or non-hex characters.
bool hex_decode(std::string_view hex, std::string& out);

/// 128 random bits as 32 hex characters.
std::string random_id();

}  // namespace trapwatch
