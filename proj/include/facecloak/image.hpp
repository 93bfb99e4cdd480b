#pragma once

// Raster images with normalized intensities, plus the pixel-level operations
// every other module builds on.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "facecloak/errors.hpp"

namespace facecloak {

enum class Layout { Gray, RGB, RGBA };

constexpr int channel_count(Layout layout) noexcept {
  switch (layout) {
    case Layout::Gray:
      return 1;
    case Layout::RGB:
      return 3;
    case Layout::RGBA:
      return 4;
  }
  return 0;
}

inline const char* layout_name(Layout layout) noexcept {
  switch (layout) {
    case Layout::Gray:
      return "gray";
    case Layout::RGB:
      return "rgb";
    case Layout::RGBA:
      return "rgba";
  }
  return "?";
}

/// Axis-aligned box in pixels, top-left origin.
struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  constexpr long long area() const noexcept { return static_cast<long long>(w) * h; }
  constexpr int right() const noexcept { return x + w; }
  constexpr int bottom() const noexcept { return y + h; }
  constexpr bool valid() const noexcept { return w > 0 && h > 0; }
  constexpr bool contains(int px, int py) const noexcept {
    return px >= x && px < x + w && py >= y && py < y + h;
  }
  friend constexpr bool operator==(const Rect&, const Rect&) = default;
};

/// Intersection of two boxes; w/h are zero when they do not overlap.
constexpr Rect intersect(const Rect& a, const Rect& b) noexcept {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.right(), b.right());
  const int y1 = std::min(a.bottom(), b.bottom());
  if (x1 <= x0 || y1 <= y0) return Rect{x0, y0, 0, 0};
  return Rect{x0, y0, x1 - x0, y1 - y0};
}

/// Intersection over union; 0 for disjoint boxes.
inline double iou(const Rect& a, const Rect& b) noexcept {
  const long long inter = intersect(a, b).area();
  const long long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

struct Color {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  friend constexpr bool operator==(const Color&, const Color&) = default;
};

inline constexpr Color kWhite{1.0, 1.0, 1.0};
inline constexpr Color kBlack{0.0, 0.0, 0.0};

/// BT.601 luma weights.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

inline double luma(double r, double g, double b) noexcept {
  return kLumaR * r + kLumaG * g + kLumaB * b;
}

inline std::uint8_t quantize_byte(double v) noexcept {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline double dequantize_byte(std::uint8_t b) noexcept { return b / 255.0; }

/// Row-major, channel-interleaved grid of intensities in [0,1].
///
/// Operations in this library never mutate their inputs; the mutable accessors
/// exist for code that is building a fresh image.
class RasterImage {
 public:
  RasterImage() = default;

  RasterImage(int width, int height, Layout layout, double fill = 0.0)
      : width_(width), height_(height), layout_(layout) {
    check_dims(width, height);
    if (!(fill >= 0.0 && fill <= 1.0)) throw InvalidArgumentError("fill value outside [0,1]");
    pixels_.assign(static_cast<std::size_t>(width) * height * channel_count(layout), fill);
  }

  RasterImage(int width, int height, Layout layout, std::vector<double> pixels)
      : width_(width), height_(height), layout_(layout), pixels_(std::move(pixels)) {
    check_dims(width, height);
    if (pixels_.size() != static_cast<std::size_t>(width) * height * channel_count(layout))
      throw DimensionMismatchError("pixel count does not match width x height x channels");
    for (double v : pixels_)
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgumentError("pixel intensity outside [0,1]");
  }

  static RasterImage from_bytes(int width, int height, Layout layout,
                                std::span<const std::uint8_t> bytes) {
    std::vector<double> px(bytes.size());
    std::transform(bytes.begin(), bytes.end(), px.begin(), dequantize_byte);
    return RasterImage(width, height, layout, std::move(px));
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  Layout layout() const noexcept { return layout_; }
  int channels() const noexcept { return channel_count(layout_); }
  bool empty() const noexcept { return pixels_.empty(); }
  std::size_t size() const noexcept { return pixels_.size(); }
  Rect bounds() const noexcept { return Rect{0, 0, width_, height_}; }

  std::span<const double> pixels() const noexcept { return pixels_; }
  std::span<double> mutable_pixels() noexcept { return pixels_; }

  double at(int x, int y, int c = 0) const noexcept { return pixels_[index(x, y, c)]; }
  double& at(int x, int y, int c = 0) noexcept { return pixels_[index(x, y, c)]; }

  std::size_t index(int x, int y, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channel_count(layout_) + c;
  }

  std::vector<std::uint8_t> to_bytes() const {
    std::vector<std::uint8_t> out(pixels_.size());
    std::transform(pixels_.begin(), pixels_.end(), out.begin(), quantize_byte);
    return out;
  }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  static void check_dims(int width, int height) {
    if (width < 1 || height < 1) throw InvalidArgumentError("image dimensions must be >= 1");
  }

  int width_ = 0;
  int height_ = 0;
  Layout layout_ = Layout::Gray;
  std::vector<double> pixels_;
};

/// BT.601 luma; alpha is ignored and Gray input is returned unchanged.
inline RasterImage to_grayscale(const RasterImage& img) {
  if (img.layout() == Layout::Gray) return img;
  RasterImage out(img.width(), img.height(), Layout::Gray);
  const auto src = img.pixels();
  auto dst = out.mutable_pixels();
  const int ch = img.channels();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const double* p = &src[i * ch];
    dst[i] = std::clamp(luma(p[0], p[1], p[2]), 0.0, 1.0);
  }
  return out;
}

/// Replicates a gray image into three identical RGB channels.
inline RasterImage gray_to_rgb(const RasterImage& img) {
  if (img.layout() != Layout::Gray) throw InvalidArgumentError("gray_to_rgb expects a Gray image");
  RasterImage out(img.width(), img.height(), Layout::RGB);
  const auto src = img.pixels();
  auto dst = out.mutable_pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = src[i];
  return out;
}

/// Converts any layout to RGB: gray is replicated, alpha is dropped.
inline RasterImage to_rgb(const RasterImage& img);

/// Composites straight-alpha RGBA over a solid background, the way a viewer
/// shows the file: out = a * src + (1 - a) * bg.
inline RasterImage flatten_alpha(const RasterImage& img, Color background) {
  if (img.layout() != Layout::RGBA) throw InvalidArgumentError("flatten_alpha expects an RGBA image");
  RasterImage out(img.width(), img.height(), Layout::RGB);
  const auto src = img.pixels();
  auto dst = out.mutable_pixels();
  const double bg[3] = {background.r, background.g, background.b};
  const std::size_t n = static_cast<std::size_t>(img.width()) * img.height();
  for (std::size_t i = 0; i < n; ++i) {
    const double a = src[4 * i + 3];
    for (int c = 0; c < 3; ++c) dst[3 * i + c] = std::clamp(a * src[4 * i + c] + (1.0 - a) * bg[c], 0.0, 1.0);
  }
  return out;
}

/// Discards the alpha channel, which is what alpha-unaware pipelines see.
inline RasterImage drop_alpha(const RasterImage& img) {
  if (img.layout() != Layout::RGBA) throw InvalidArgumentError("drop_alpha expects an RGBA image");
  RasterImage out(img.width(), img.height(), Layout::RGB);
  const auto src = img.pixels();
  auto dst = out.mutable_pixels();
  const std::size_t n = static_cast<std::size_t>(img.width()) * img.height();
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) dst[3 * i + c] = src[4 * i + c];
  return out;
}

inline RasterImage to_rgb(const RasterImage& img) {
  switch (img.layout()) {
    case Layout::Gray:
      return gray_to_rgb(img);
    case Layout::RGB:
      return img;
    case Layout::RGBA:
      return drop_alpha(img);
  }
  return img;
}

/// Multiplies every intensity by `factor` (clamped to [0,1]).
inline RasterImage scale_intensity(const RasterImage& img, double factor) {
  RasterImage out = img;
  for (double& v : out.mutable_pixels()) v = std::clamp(v * factor, 0.0, 1.0);
  return out;
}

/// Rounds every intensity onto the 8-bit grid (k/255).
inline RasterImage quantize_8bit(const RasterImage& img) {
  RasterImage out = img;
  for (double& v : out.mutable_pixels()) v = dequantize_byte(quantize_byte(v));
  return out;
}

/// Where output samples land on the source grid.
enum class SampleGrid {
  /// First and last output pixels sample the first and last source pixels
  /// exactly: src = dst * (src_n - 1) / (dst_n - 1).
  CornerAligned,
  /// Pixel centers are aligned: src = (dst + 0.5) * src_n / dst_n - 0.5,
  /// clamped to the edge. This is what most image libraries call "linear".
  PixelCenter,
};

namespace detail {

struct Tap {
  int i0;
  int i1;
  double frac;
};

inline std::vector<Tap> bilinear_taps(int src_n, int dst_n, SampleGrid grid) {
  std::vector<Tap> taps(dst_n);
  for (int d = 0; d < dst_n; ++d) {
    double s = 0.0;
    if (grid == SampleGrid::CornerAligned) {
      s = dst_n == 1 ? 0.5 * (src_n - 1) : static_cast<double>(d) * (src_n - 1) / (dst_n - 1);
    } else {
      s = (d + 0.5) * static_cast<double>(src_n) / dst_n - 0.5;
    }
    s = std::clamp(s, 0.0, static_cast<double>(src_n - 1));
    int i0 = static_cast<int>(std::floor(s));
    double f = s - i0;
    if (i0 >= src_n - 1) {
      i0 = src_n - 1;
      f = 0.0;
    }
    taps[d] = Tap{i0, std::min(i0 + 1, src_n - 1), f};
  }
  return taps;
}

}  // namespace detail

/// Bilinear resampling with edge clamping. Deterministic; the default grid is
/// corner-aligned (a 2-pixel row [0,1] resized to 3 gives [0, 0.5, 1]).
inline RasterImage resize_bilinear(const RasterImage& img, int new_w, int new_h,
                                   SampleGrid grid = SampleGrid::CornerAligned) {
  if (new_w < 1 || new_h < 1) throw InvalidArgumentError("resize target must be at least 1x1");
  if (new_w == img.width() && new_h == img.height()) return img;
  const auto xt = detail::bilinear_taps(img.width(), new_w, grid);
  const auto yt = detail::bilinear_taps(img.height(), new_h, grid);
  const int ch = img.channels();
  RasterImage out(new_w, new_h, img.layout());
  for (int y = 0; y < new_h; ++y) {
    const auto& ty = yt[y];
    for (int x = 0; x < new_w; ++x) {
      const auto& tx = xt[x];
      for (int c = 0; c < ch; ++c) {
        const double top = img.at(tx.i0, ty.i0, c) * (1.0 - tx.frac) + img.at(tx.i1, ty.i0, c) * tx.frac;
        const double bot = img.at(tx.i0, ty.i1, c) * (1.0 - tx.frac) + img.at(tx.i1, ty.i1, c) * tx.frac;
        out.at(x, y, c) = std::clamp(top * (1.0 - ty.frac) + bot * ty.frac, 0.0, 1.0);
      }
    }
  }
  return out;
}

/// Copies the pixels inside `region` (clipped to the image) into a new image.
inline RasterImage crop(const RasterImage& img, const Rect& region) {
  const Rect r = intersect(region, img.bounds());
  if (!r.valid()) throw InvalidArgumentError("crop region lies outside the image");
  RasterImage out(r.w, r.h, img.layout());
  for (int y = 0; y < r.h; ++y)
    for (int x = 0; x < r.w; ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = img.at(r.x + x, r.y + y, c);
  return out;
}

/// Peak signal-to-noise ratio in dB for intensities in [0,1]; infinity when equal.
inline double psnr(const RasterImage& a, const RasterImage& b) {
  if (a.width() != b.width() || a.height() != b.height() || a.layout() != b.layout())
    throw DimensionMismatchError("psnr: images differ in shape");
  double acc = 0.0;
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) acc += (pa[i] - pb[i]) * (pa[i] - pb[i]);
  const double m = acc / static_cast<double>(pa.size());
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

inline double mean_intensity(const RasterImage& img) {
  double acc = 0.0;
  for (double v : img.pixels()) acc += v;
  return acc / static_cast<double>(img.size());
}

}  // namespace facecloak
