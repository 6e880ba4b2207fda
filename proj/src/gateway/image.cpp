#include "trapwatch/gateway/image.hpp"

#include <cstdint>
#include <cstring>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "trapwatch/core/error.hpp"

namespace trapwatch::gateway {

struct DecodedImage::Impl {
  cv::Mat bgr;
};

namespace {

constexpr double kPadGray = 114.0;

std::uint16_t read16(const unsigned char* p, bool le) {
  return le ? static_cast<std::uint16_t>(p[0] | (p[1] << 8))
            : static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

std::uint32_t read32(const unsigned char* p, bool le) {
  return le ? static_cast<std::uint32_t>(p[0] | (p[1] << 8) | (p[2] << 16) |
                                         (static_cast<std::uint32_t>(p[3]) << 24))
            : static_cast<std::uint32_t>((static_cast<std::uint32_t>(p[0]) << 24) |
                                         (p[1] << 16) | (p[2] << 8) | p[3]);
}

// Looks for an ASCII tag in one IFD of a TIFF block; also reports the Exif
// sub-IFD pointer when present.
struct IfdScan {
  std::optional<std::string> value;
  std::optional<std::uint32_t> exif_ifd;
};

IfdScan scan_ifd(const unsigned char* tiff, std::size_t size, std::uint32_t offset, bool le,
                 std::uint16_t wanted) {
  IfdScan out;
  if (offset + 2 > size) return out;
  const std::uint16_t count = read16(tiff + offset, le);
  for (std::uint16_t i = 0; i < count; ++i) {
    const std::size_t entry = offset + 2 + 12u * i;
    if (entry + 12 > size) break;
    const std::uint16_t tag = read16(tiff + entry, le);
    const std::uint16_t type = read16(tiff + entry + 2, le);
    const std::uint32_t n = read32(tiff + entry + 4, le);
    if (tag == 0x8769 && type == 4) out.exif_ifd = read32(tiff + entry + 8, le);
    if (tag == wanted && type == 2 && n > 0) {
      const unsigned char* data = n <= 4 ? tiff + entry + 8 : nullptr;
      if (!data) {
        const std::uint32_t at = read32(tiff + entry + 8, le);
        if (at + n > size) continue;
        data = tiff + at;
      }
      std::string s(reinterpret_cast<const char*>(data), n);
      while (!s.empty() && (s.back() == '\0' || s.back() == ' ')) s.pop_back();
      out.value = std::move(s);
    }
  }
  return out;
}

void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

std::optional<ImageType> sniff_image_type(std::string_view bytes) {
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
      static_cast<unsigned char>(bytes[1]) == 0xD8 && static_cast<unsigned char>(bytes[2]) == 0xFF) {
    return ImageType::jpeg;
  }
  if (bytes.size() >= 8 && bytes.substr(0, 8) == std::string_view("\x89PNG\r\n\x1a\n", 8)) {
    return ImageType::png;
  }
  return std::nullopt;
}

std::string_view file_extension(ImageType type) noexcept {
  return type == ImageType::png ? "png" : "jpg";
}

std::string_view mime_type(ImageType type) noexcept {
  return type == ImageType::png ? "image/png" : "image/jpeg";
}

DecodedImage::DecodedImage() : impl_(std::make_unique<Impl>()) {}
DecodedImage::DecodedImage(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
DecodedImage::~DecodedImage() = default;
DecodedImage::DecodedImage(DecodedImage&&) noexcept = default;
DecodedImage& DecodedImage::operator=(DecodedImage&&) noexcept = default;

int DecodedImage::width() const noexcept { return impl_->bgr.cols; }
int DecodedImage::height() const noexcept { return impl_->bgr.rows; }

std::vector<float> DecodedImage::to_tensor(const LetterboxTransform& t) const {
  if (t.source_width != width() || t.source_height != height()) {
    throw Error(Errc::invalid_argument, "letterbox transform was built for another image size");
  }
  cv::Mat resized;
  const bool shrinking = t.scaled_width < width();
  cv::resize(impl_->bgr, resized, cv::Size(t.scaled_width, t.scaled_height), 0, 0,
             shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  cv::Mat padded;
  cv::copyMakeBorder(resized, padded, t.pad_top, t.pad_bottom(), t.pad_left, t.pad_right(),
                     cv::BORDER_CONSTANT, cv::Scalar(kPadGray, kPadGray, kPadGray));
  const auto plane = static_cast<std::size_t>(t.target) * static_cast<std::size_t>(t.target);
  std::vector<float> out(3 * plane);
  for (int y = 0; y < padded.rows; ++y) {
    const auto* row = padded.ptr<cv::Vec3b>(y);
    for (int x = 0; x < padded.cols; ++x) {
      const auto i = static_cast<std::size_t>(y) * t.target + x;
      // BGR storage, RGB planes.
      out[i] = row[x][2] / 255.0f;
      out[plane + i] = row[x][1] / 255.0f;
      out[2 * plane + i] = row[x][0] / 255.0f;
    }
  }
  return out;
}

DecodedImage decode_image(std::string_view bytes) {
  if (!sniff_image_type(bytes)) {
    throw Error(Errc::undecodable_image, "not a JPEG or PNG image");
  }
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1,
              const_cast<char*>(bytes.data()));
  auto impl = std::make_unique<DecodedImage::Impl>();
  try {
    impl->bgr = cv::imdecode(buf, cv::IMREAD_COLOR | cv::IMREAD_IGNORE_ORIENTATION);
  } catch (const cv::Exception& e) {
    throw Error(Errc::undecodable_image, e.what());
  }
  if (impl->bgr.empty()) throw Error(Errc::undecodable_image, "image data could not be decoded");
  return DecodedImage(std::move(impl));
}

DecodedImage make_test_image(int width, int height, unsigned seed) {
  if (width < 1 || height < 1) throw Error(Errc::invalid_argument, "test image needs a positive size");
  auto impl = std::make_unique<DecodedImage::Impl>();
  impl->bgr.create(height, width, CV_8UC3);
  cv::RNG rng(seed);
  rng.fill(impl->bgr, cv::RNG::UNIFORM, 0, 256);
  return DecodedImage(std::move(impl));
}

std::string encode_image(const DecodedImage& image, ImageType type) {
  std::vector<unsigned char> buf;
  std::vector<int> params;
  if (type == ImageType::jpeg) params = {cv::IMWRITE_JPEG_QUALITY, 90};
  if (!cv::imencode(type == ImageType::png ? ".png" : ".jpg", image.impl_->bgr, buf, params)) {
    throw Error(Errc::io_error, "image encoding failed");
  }
  return std::string(buf.begin(), buf.end());
}

std::optional<std::string> exif_datetime_original(std::string_view jpeg) {
  const auto* p = reinterpret_cast<const unsigned char*>(jpeg.data());
  const std::size_t n = jpeg.size();
  if (n < 4 || p[0] != 0xFF || p[1] != 0xD8) return std::nullopt;
  std::size_t pos = 2;
  while (pos + 4 <= n && p[pos] == 0xFF) {
    const unsigned char marker = p[pos + 1];
    if (marker == 0xDA || marker == 0xD9) break;  // image data starts
    const std::size_t len = (static_cast<std::size_t>(p[pos + 2]) << 8) | p[pos + 3];
    if (len < 2 || pos + 2 + len > n) break;
    const unsigned char* seg = p + pos + 4;
    const std::size_t seg_len = len - 2;
    if (marker == 0xE1 && seg_len > 14 && std::memcmp(seg, "Exif\0\0", 6) == 0) {
      const unsigned char* tiff = seg + 6;
      const std::size_t size = seg_len - 6;
      const bool le = tiff[0] == 'I' && tiff[1] == 'I';
      if (!le && !(tiff[0] == 'M' && tiff[1] == 'M')) return std::nullopt;
      const std::uint32_t ifd0 = read32(tiff + 4, le);
      auto top = scan_ifd(tiff, size, ifd0, le, 0x0132);
      if (top.exif_ifd) {
        auto sub = scan_ifd(tiff, size, *top.exif_ifd, le, 0x9003);
        if (sub.value) return sub.value;
      }
      return top.value;
    }
    pos += 2 + len;
  }
  return std::nullopt;
}

std::string with_exif_datetime(std::string_view jpeg, std::string_view datetime) {
  if (sniff_image_type(jpeg) != ImageType::jpeg) {
    throw Error(Errc::invalid_argument, "EXIF can only be added to a JPEG");
  }
  std::string value(datetime.substr(0, 19));
  value.resize(20, '\0');
  // Little-endian TIFF: IFD0 holds only the Exif pointer, the Exif IFD holds
  // DateTimeOriginal.
  std::string tiff = "II";
  put16(tiff, 42);
  put32(tiff, 8);
  put16(tiff, 1);
  put16(tiff, 0x8769);
  put16(tiff, 4);
  put32(tiff, 1);
  put32(tiff, 26);
  put32(tiff, 0);
  put16(tiff, 1);
  put16(tiff, 0x9003);
  put16(tiff, 2);
  put32(tiff, 20);
  put32(tiff, 44);
  put32(tiff, 0);
  tiff += value;
  std::string seg = std::string("Exif\0\0", 6) + tiff;
  const std::size_t len = seg.size() + 2;
  std::string out;
  out.reserve(jpeg.size() + len + 2);
  out.append(jpeg.substr(0, 2));
  out.push_back(static_cast<char>(0xFF));
  out.push_back(static_cast<char>(0xE1));
  out.push_back(static_cast<char>(len >> 8));
  out.push_back(static_cast<char>(len & 0xff));
  out += seg;
  out.append(jpeg.substr(2));
  return out;
}

}  // namespace trapwatch::gateway
