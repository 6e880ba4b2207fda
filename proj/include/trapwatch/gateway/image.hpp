#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trapwatch/gateway/letterbox.hpp"

namespace trapwatch::gateway {

enum class ImageType { jpeg, png };

/// Magic-number sniffing; nullopt for anything else.
std::optional<ImageType> sniff_image_type(std::string_view bytes);
/// "jpg" or "png".
std::string_view file_extension(ImageType type) noexcept;
std::string_view mime_type(ImageType type) noexcept;

/// A decoded 8-bit BGR image. Pixel storage is opaque.
class DecodedImage {
 public:
  DecodedImage();
  ~DecodedImage();
  DecodedImage(DecodedImage&&) noexcept;
  DecodedImage& operator=(DecodedImage&&) noexcept;

  int width() const noexcept;
  int height() const noexcept;

  /// Letterboxed RGB planes scaled to [0,1], channel-major (CHW), size
  /// 3 * target * target. Padding is mid-gray.
  std::vector<float> to_tensor(const LetterboxTransform& t) const;

  struct Impl;

 private:
  explicit DecodedImage(std::unique_ptr<Impl> impl);
  friend DecodedImage decode_image(std::string_view bytes);
  friend DecodedImage make_test_image(int width, int height, unsigned seed);
  friend std::string encode_image(const DecodedImage& image, ImageType type);

  std::unique_ptr<Impl> impl_;
};

/// JPEG or PNG bytes. EXIF orientation is ignored so boxes stay in the
/// stored pixel frame. Throws Errc::undecodable_image.
DecodedImage decode_image(std::string_view bytes);

/// Deterministic noise image, for fixtures and tests.
DecodedImage make_test_image(int width, int height, unsigned seed);

/// JPEG-encode (quality 90) or PNG-encode an image.
std::string encode_image(const DecodedImage& image, ImageType type);

/// EXIF DateTimeOriginal (falling back to DateTime) from a JPEG APP1
/// segment, as the raw `YYYY:MM:DD HH:MM:SS` string.
std::optional<std::string> exif_datetime_original(std::string_view jpeg);

/// Inserts an APP1 EXIF segment carrying DateTimeOriginal into a JPEG.
std::string with_exif_datetime(std::string_view jpeg, std::string_view datetime);

}  // namespace trapwatch::gateway
