#pragma once

// PNG input/output through libpng's simplified API. 8-bit only; RGBA is
// stored as straight (non-premultiplied) alpha.

#include <png.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "facecloak/errors.hpp"
#include "facecloak/image.hpp"

namespace facecloak {

namespace detail {

struct PngImageGuard {
  png_image* img;
  ~PngImageGuard() { png_image_free(img); }
};

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) throw FileNotFoundError("no such file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

inline bool has_png_signature(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

}  // namespace detail

/// Decodes PNG bytes. Gray stays Gray, color becomes RGB, anything with an
/// alpha channel (including gray+alpha and tRNS) becomes RGBA.
inline RasterImage decode_png(std::span<const std::uint8_t> bytes) {
  if (!detail::has_png_signature(bytes)) throw ImageFormatError("not a PNG stream (bad signature)");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  detail::PngImageGuard guard{&img};
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw ImageFormatError(std::string("corrupt PNG: ") + img.message);

  Layout layout = Layout::Gray;
  if (img.format & PNG_FORMAT_FLAG_ALPHA) {
    layout = Layout::RGBA;
    img.format = PNG_FORMAT_RGBA;
  } else if (img.format & PNG_FORMAT_FLAG_COLOR) {
    layout = Layout::RGB;
    img.format = PNG_FORMAT_RGB;
  } else {
    img.format = PNG_FORMAT_GRAY;
  }
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr))
    throw ImageFormatError(std::string("corrupt PNG: ") + img.message);
  return RasterImage::from_bytes(static_cast<int>(img.width), static_cast<int>(img.height), layout, buf);
}

/// Encodes to an 8-bit PNG of the image's own layout (color types 0, 2, 6).
inline std::vector<std::uint8_t> encode_png(const RasterImage& image) {
  if (image.empty()) throw InvalidArgumentError("cannot encode an empty image");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  switch (image.layout()) {
    case Layout::Gray:
      img.format = PNG_FORMAT_GRAY;
      break;
    case Layout::RGB:
      img.format = PNG_FORMAT_RGB;
      break;
    case Layout::RGBA:
      img.format = PNG_FORMAT_RGBA;
      break;
  }
  detail::PngImageGuard guard{&img};
  const auto bytes = image.to_bytes();
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, bytes.data(), 0, nullptr))
    throw IoError(std::string("PNG encode failed: ") + img.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, bytes.data(), 0, nullptr))
    throw IoError(std::string("PNG encode failed: ") + img.message);
  out.resize(size);
  return out;
}

/// Loads a raster file in its native layout. Only PNG is supported.
inline RasterImage load_image(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  if (!detail::has_png_signature(bytes))
    throw ImageFormatError("unsupported image format (only PNG is read): " + path.string());
  try {
    return decode_png(bytes);
  } catch (const ImageFormatError& e) {
    throw ImageFormatError(path.string() + ": " + e.what());
  }
}

inline void save_png(const RasterImage& image, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_png(image));
}

}  // namespace facecloak
