#pragma once

// Random cosmetic shapes constrained to a face box, and their hard-edged
// rasterization.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "facecloak/errors.hpp"
#include "facecloak/image.hpp"
#include "facecloak/rng.hpp"

namespace facecloak {

enum class ShapeKind { Rectangle, Circle, Triangle, Line };

inline constexpr std::array<ShapeKind, 4> kAllShapeKinds{ShapeKind::Rectangle, ShapeKind::Circle,
                                                         ShapeKind::Triangle, ShapeKind::Line};

inline std::string_view shape_kind_name(ShapeKind k) noexcept {
  switch (k) {
    case ShapeKind::Rectangle:
      return "rectangle";
    case ShapeKind::Circle:
      return "circle";
    case ShapeKind::Triangle:
      return "triangle";
    case ShapeKind::Line:
      return "line";
  }
  return "?";
}

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend constexpr bool operator==(const Point&, const Point&) = default;
};

struct RectangleGeometry {
  Rect rect;
  friend constexpr bool operator==(const RectangleGeometry&, const RectangleGeometry&) = default;
};
struct CircleGeometry {
  Point center;
  double radius = 0.0;
  friend constexpr bool operator==(const CircleGeometry&, const CircleGeometry&) = default;
};
struct TriangleGeometry {
  std::array<Point, 3> vertices{};
  friend constexpr bool operator==(const TriangleGeometry&, const TriangleGeometry&) = default;
};
struct LineGeometry {
  Point a;
  Point b;
  friend constexpr bool operator==(const LineGeometry&, const LineGeometry&) = default;
};

using ShapeGeometry = std::variant<RectangleGeometry, CircleGeometry, TriangleGeometry, LineGeometry>;

/// One cosmetic overlay. Coordinates are image pixels; pixel (i, j) is
/// sampled at its center (i + 0.5, j + 0.5). Nothing outside `clip` is drawn.
struct Shape {
  ShapeGeometry geometry;
  double size = 0.0;  // characteristic size drawn for it, px
  Color color;
  double opacity = 1.0;
  int thickness = 1;  // outline / line width, px
  bool filled = false;
  Rect clip;

  ShapeKind kind() const noexcept { return static_cast<ShapeKind>(geometry.index()); }
  friend bool operator==(const Shape&, const Shape&) = default;
};

enum class ColorMode { UniformRandomRgb, GrayscaleTones };

template <typename T>
struct Range {
  T lo{};
  T hi{};
  friend constexpr bool operator==(const Range&, const Range&) = default;
};

struct PerturbationConfig {
  int shapes_per_iteration = 15;
  Range<double> size_range{0.05, 0.60};  // fraction of the face box's smaller side
  Range<int> thickness_range{1, 8};
  Range<double> opacity_range{1.0, 1.0};
  ColorMode color_mode = ColorMode::UniformRandomRgb;

  void validate() const {
    if (shapes_per_iteration < 1) throw InvalidArgumentError("shapes_per_iteration must be >= 1");
    if (!(size_range.lo > 0.0 && size_range.lo <= size_range.hi && size_range.hi <= 1.0))
      throw InvalidArgumentError("size_range must satisfy 0 < lo <= hi <= 1");
    if (!(thickness_range.lo >= 1 && thickness_range.lo <= thickness_range.hi))
      throw InvalidArgumentError("thickness_range must satisfy 1 <= lo <= hi");
    if (!(opacity_range.lo >= 0.0 && opacity_range.lo <= opacity_range.hi && opacity_range.hi <= 1.0))
      throw InvalidArgumentError("opacity_range must satisfy 0 <= lo <= hi <= 1");
  }
  friend bool operator==(const PerturbationConfig&, const PerturbationConfig&) = default;
};

/// Draws one shape inside `face`.
///
/// Draw order (fixed, part of the reproducibility contract): kind, size,
/// kind-specific placement, thickness, fill flag, opacity, color. Rectangles
/// and circles are placed so they fit the box; triangles are inscribed in a
/// circle of diameter `size`; lines have length `size` through a uniform
/// center at a uniform angle. Anything that still pokes out is clipped.
inline Shape random_shape(SeededRng& rng, const Rect& face, const PerturbationConfig& cfg) {
  if (!face.valid()) throw InvalidArgumentError("random_shape: face box must be non-empty");
  Shape shape;
  shape.clip = face;
  const double min_side = std::min(face.w, face.h);
  const auto kind = static_cast<ShapeKind>(rng.uniform_int(0, 3));
  const double s = rng.uniform(cfg.size_range.lo, cfg.size_range.hi) * min_side;
  shape.size = s;

  const auto fit_center = [&rng](double lo, double extent, double r) {
    return 2.0 * r <= extent ? rng.uniform(lo + r, lo + extent - r) : (rng.uniform(), lo + extent / 2.0);
  };

  switch (kind) {
    case ShapeKind::Rectangle: {
      const double s2 = rng.uniform(cfg.size_range.lo, cfg.size_range.hi) * min_side;
      const int w = std::clamp(static_cast<int>(std::lround(s)), 1, face.w);
      const int h = std::clamp(static_cast<int>(std::lround(s2)), 1, face.h);
      const int x = face.x + rng.uniform_int(0, face.w - w);
      const int y = face.y + rng.uniform_int(0, face.h - h);
      shape.geometry = RectangleGeometry{Rect{x, y, w, h}};
      break;
    }
    case ShapeKind::Circle: {
      const double r = s / 2.0;
      const double cx = fit_center(face.x, face.w, r);
      const double cy = fit_center(face.y, face.h, r);
      shape.geometry = CircleGeometry{Point{cx, cy}, r};
      break;
    }
    case ShapeKind::Triangle: {
      const double r = s / 2.0;
      const double cx = fit_center(face.x, face.w, r);
      const double cy = fit_center(face.y, face.h, r);
      TriangleGeometry tri;
      for (auto& v : tri.vertices) {
        const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
        v = Point{cx + r * std::cos(a), cy + r * std::sin(a)};
      }
      shape.geometry = tri;
      break;
    }
    case ShapeKind::Line: {
      const double cx = rng.uniform(face.x, face.right());
      const double cy = rng.uniform(face.y, face.bottom());
      const double a = rng.uniform(0.0, std::numbers::pi);
      const double dx = 0.5 * s * std::cos(a);
      const double dy = 0.5 * s * std::sin(a);
      shape.geometry = LineGeometry{Point{cx - dx, cy - dy}, Point{cx + dx, cy + dy}};
      break;
    }
  }

  shape.thickness = rng.uniform_int(cfg.thickness_range.lo, cfg.thickness_range.hi);
  const bool filled = rng.coin();
  shape.filled = kind != ShapeKind::Line && filled;
  shape.opacity = rng.uniform(cfg.opacity_range.lo, cfg.opacity_range.hi);
  if (cfg.color_mode == ColorMode::UniformRandomRgb) {
    const double r = rng.uniform();
    const double g = rng.uniform();
    const double b = rng.uniform();
    shape.color = Color{r, g, b};
  } else {
    const double v = rng.uniform();
    shape.color = Color{v, v, v};
  }
  return shape;
}

namespace detail {

inline double segment_distance(Point p, Point a, Point b) noexcept {
  const double vx = b.x - a.x;
  const double vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx);
  const double dy = p.y - (a.y + t * vy);
  return std::hypot(dx, dy);
}

inline double edge_side(Point a, Point b, Point p) noexcept {
  return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

// Distance from p to the outline of the box [x0,x1] x [y0,y1].
inline double box_outline_distance(Point p, double x0, double y0, double x1, double y1) noexcept {
  const bool inside = p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;
  if (inside) return std::min({p.x - x0, x1 - p.x, p.y - y0, y1 - p.y});
  const double dx = std::max({x0 - p.x, 0.0, p.x - x1});
  const double dy = std::max({y0 - p.y, 0.0, p.y - y1});
  return std::hypot(dx, dy);
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace detail

/// Whether the shape covers pixel (px, py). Color and opacity are ignored.
///
/// Filled shapes cover pixels whose center is inside (edges inclusive);
/// outlines cover centers within thickness/2 of the boundary; a line covers
/// centers within thickness/2 of its segment.
inline bool covers(const Shape& shape, int px, int py) noexcept {
  if (!shape.clip.contains(px, py)) return false;
  const Point p{px + 0.5, py + 0.5};
  const double half = 0.5 * shape.thickness;
  return std::visit(
      detail::overloaded{
          [&](const RectangleGeometry& g) {
            const Rect& r = g.rect;
            if (shape.filled) return r.contains(px, py);
            return detail::box_outline_distance(p, r.x, r.y, r.right(), r.bottom()) <= half;
          },
          [&](const CircleGeometry& g) {
            const double d = std::hypot(p.x - g.center.x, p.y - g.center.y);
            return shape.filled ? d <= g.radius : std::abs(d - g.radius) <= half;
          },
          [&](const TriangleGeometry& g) {
            const auto& v = g.vertices;
            if (shape.filled) {
              const double d0 = detail::edge_side(v[0], v[1], p);
              const double d1 = detail::edge_side(v[1], v[2], p);
              const double d2 = detail::edge_side(v[2], v[0], p);
              const bool has_neg = d0 < 0 || d1 < 0 || d2 < 0;
              const bool has_pos = d0 > 0 || d1 > 0 || d2 > 0;
              return !(has_neg && has_pos);
            }
            return std::min({detail::segment_distance(p, v[0], v[1]), detail::segment_distance(p, v[1], v[2]),
                             detail::segment_distance(p, v[2], v[0])}) <= half;
          },
          [&](const LineGeometry& g) { return detail::segment_distance(p, g.a, g.b) <= half; },
      },
      shape.geometry);
}

/// Pixels that can possibly be covered: geometry bounds grown by the stroke,
/// intersected with the clip box.
inline Rect shape_bounds(const Shape& shape) noexcept {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::visit(detail::overloaded{
                 [&](const RectangleGeometry& g) {
                   x0 = g.rect.x;
                   y0 = g.rect.y;
                   x1 = g.rect.right();
                   y1 = g.rect.bottom();
                 },
                 [&](const CircleGeometry& g) {
                   x0 = g.center.x - g.radius;
                   x1 = g.center.x + g.radius;
                   y0 = g.center.y - g.radius;
                   y1 = g.center.y + g.radius;
                 },
                 [&](const TriangleGeometry& g) {
                   x0 = x1 = g.vertices[0].x;
                   y0 = y1 = g.vertices[0].y;
                   for (const auto& v : g.vertices) {
                     x0 = std::min(x0, v.x);
                     x1 = std::max(x1, v.x);
                     y0 = std::min(y0, v.y);
                     y1 = std::max(y1, v.y);
                   }
                 },
                 [&](const LineGeometry& g) {
                   x0 = std::min(g.a.x, g.b.x);
                   x1 = std::max(g.a.x, g.b.x);
                   y0 = std::min(g.a.y, g.b.y);
                   y1 = std::max(g.a.y, g.b.y);
                 },
             },
             shape.geometry);
  const double grow = 0.5 * shape.thickness + 1.0;
  const int ix0 = static_cast<int>(std::floor(x0 - grow));
  const int iy0 = static_cast<int>(std::floor(y0 - grow));
  const int ix1 = static_cast<int>(std::ceil(x1 + grow));
  const int iy1 = static_cast<int>(std::ceil(y1 + grow));
  return intersect(Rect{ix0, iy0, ix1 - ix0, iy1 - iy0}, shape.clip);
}

namespace detail {

inline void draw_into(RasterImage& img, const Shape& shape) {
  const Rect area = intersect(shape_bounds(shape), img.bounds());
  if (!area.valid()) return;
  const double op = shape.opacity;
  const double keep = 1.0 - op;
  const double rgb[3] = {shape.color.r, shape.color.g, shape.color.b};
  const double gray_value = luma(rgb[0], rgb[1], rgb[2]);
  const int color_channels = img.layout() == Layout::Gray ? 1 : 3;
  for (int y = area.y; y < area.bottom(); ++y)
    for (int x = area.x; x < area.right(); ++x) {
      if (!covers(shape, x, y)) continue;
      for (int c = 0; c < color_channels; ++c) {
        const double src = color_channels == 1 ? gray_value : rgb[c];
        double& v = img.at(x, y, c);
        v = std::clamp(op * src + keep * v, 0.0, 1.0);
      }
    }
}

}  // namespace detail

/// Returns a copy of `img` with the shape alpha-blended over it:
/// out = opacity * color + (1 - opacity) * under. Alpha channels are left
/// alone; gray images receive the color's luma.
inline RasterImage rasterize(const RasterImage& img, const Shape& shape) {
  RasterImage out = img;
  detail::draw_into(out, shape);
  return out;
}

struct Disguise {
  RasterImage image;
  std::vector<Shape> shapes;
};

/// Generates cfg.shapes_per_iteration shapes, then draws them in generation
/// order onto a copy of the image.
inline Disguise apply_disguise(const RasterImage& img, const Rect& face, const PerturbationConfig& cfg,
                               SeededRng& rng) {
  cfg.validate();
  Disguise out{img, {}};
  out.shapes.reserve(cfg.shapes_per_iteration);
  for (int i = 0; i < cfg.shapes_per_iteration; ++i) out.shapes.push_back(random_shape(rng, face, cfg));
  for (const auto& s : out.shapes) detail::draw_into(out.image, s);
  return out;
}

/// Row-major boolean grid.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}
  bool at(int x, int y) const noexcept { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y) noexcept { bits[static_cast<std::size_t>(y) * width + x] = 1; }
  std::size_t count() const noexcept { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Union of the pixels covered by any of the shapes on a canvas of the given size.
inline BinaryMask coverage_mask(std::span<const Shape> shapes, int canvas_w, int canvas_h) {
  BinaryMask mask(canvas_w, canvas_h);
  const Rect canvas{0, 0, canvas_w, canvas_h};
  for (const auto& s : shapes) {
    const Rect area = intersect(shape_bounds(s), canvas);
    if (!area.valid()) continue;
    for (int y = area.y; y < area.bottom(); ++y)
      for (int x = area.x; x < area.right(); ++x)
        if (covers(s, x, y)) mask.set(x, y);
  }
  return mask;
}

}  // namespace facecloak
