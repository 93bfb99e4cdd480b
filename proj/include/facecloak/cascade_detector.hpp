#pragma once

// Viola-Jones evaluation of a Haar cascade: integral images, variance
// normalized window scoring, an image-pyramid scan and rectangle grouping.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "facecloak/cascade_model.hpp"
#include "facecloak/errors.hpp"
#include "facecloak/image.hpp"

namespace facecloak {

/// Summed-area tables of a gray image and of its squared intensities.
///
/// Grids are (width+1) x (height+1) with a zero top row and left column.
/// Accumulation is double precision in row-major order: each entry is the
/// entry above plus the running sum of the current row up to that column.
class IntegralImage {
 public:
  explicit IntegralImage(const RasterImage& gray) : width_(gray.width()), height_(gray.height()) {
    if (gray.layout() != Layout::Gray) throw InvalidArgumentError("integral image requires a Gray image");
    const std::size_t stride = static_cast<std::size_t>(width_) + 1;
    sum_.assign(stride * (height_ + 1), 0.0);
    sqsum_.assign(stride * (height_ + 1), 0.0);
    const auto px = gray.pixels();
    for (int y = 0; y < height_; ++y) {
      double row = 0.0;
      double row_sq = 0.0;
      const double* src = &px[static_cast<std::size_t>(y) * width_];
      const std::size_t above = static_cast<std::size_t>(y) * stride;
      const std::size_t here = above + stride;
      for (int x = 0; x < width_; ++x) {
        row += src[x];
        row_sq += src[x] * src[x];
        sum_[here + x + 1] = sum_[above + x + 1] + row;
        sqsum_[here + x + 1] = sqsum_[above + x + 1] + row_sq;
      }
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int stride() const noexcept { return width_ + 1; }

  /// Sum of all pixels with column < x and row < y.
  double sum_at(int x, int y) const noexcept { return sum_[static_cast<std::size_t>(y) * stride() + x]; }
  double sqsum_at(int x, int y) const noexcept { return sqsum_[static_cast<std::size_t>(y) * stride() + x]; }

  double rect_sum(const Rect& r) const noexcept {
    return sum_at(r.right(), r.bottom()) - sum_at(r.x, r.bottom()) - sum_at(r.right(), r.y) + sum_at(r.x, r.y);
  }
  double rect_sqsum(const Rect& r) const noexcept {
    return sqsum_at(r.right(), r.bottom()) - sqsum_at(r.x, r.bottom()) - sqsum_at(r.right(), r.y) +
           sqsum_at(r.x, r.y);
  }

  std::span<const double> sums() const noexcept { return sum_; }
  std::span<const double> sqsums() const noexcept { return sqsum_; }

 private:
  int width_;
  int height_;
  std::vector<double> sum_;
  std::vector<double> sqsum_;
};

inline IntegralImage integral(const RasterImage& gray) { return IntegralImage(gray); }

/// A face found by the detector. `neighbors` is the number of raw windows
/// merged into it; `weight` is the best final-stage score among them.
struct Detection {
  Rect rect;
  int neighbors = 0;
  double weight = 0.0;
  friend bool operator==(const Detection&, const Detection&) = default;
};

/// A raw accepted window before grouping.
struct Candidate {
  Rect rect;
  double score = 0.0;
};

struct WindowEvaluation {
  bool passed = false;
  double score = 0.0;       // sum of the last stage that was evaluated
  int stages_passed = 0;
};

struct DetectParams {
  double scale_factor = 1.1;
  int min_neighbors = 3;
  int min_size = 30;
  int max_size = 0;  // 0: no upper bound besides the image
  double group_eps = 0.2;

  void validate() const {
    if (!(scale_factor > 1.0)) throw InvalidArgumentError("scale_factor must be > 1");
    if (min_neighbors < 0) throw InvalidArgumentError("min_neighbors must be >= 0");
    if (min_size < 0 || max_size < 0) throw InvalidArgumentError("min_size/max_size must be >= 0");
    if (group_eps < 0.0) throw InvalidArgumentError("group_eps must be >= 0");
  }
};

/// Windows whose intensity standard deviation falls below this are treated as
/// sigma = 1 (their feature values are all zero anyway).
inline constexpr double kMinWindowStddev = 1e-6;

namespace detail {

inline int round_half_even(double v) noexcept { return static_cast<int>(std::nearbyint(v)); }

// Cascade with feature rects flattened to corner offsets for one integral
// stride, so the hot loop is four loads per rect.
class CompiledCascade {
 public:
  CompiledCascade(const CascadeModel& model, int stride, double scale) : model_(&model) {
    const auto sr = [scale](int v) { return round_half_even(v * scale); };
    win_w_ = sr(model.window_w);
    win_h_ = sr(model.window_h);
    const Rect norm{sr(1), sr(1), win_w_ - 2 * sr(1), win_h_ - 2 * sr(1)};
    norm_ = corners(norm, stride);
    norm_area_ = static_cast<double>(norm.area());
    features_.reserve(model.features.size());
    for (const auto& f : model.features) {
      Compiled cf;
      cf.count = static_cast<int>(f.rects.size());
      for (int i = 0; i < cf.count; ++i) {
        const Rect& r = f.rects[i].rect;
        cf.ofs[i] = corners(Rect{sr(r.x), sr(r.y), std::max(1, sr(r.w)), std::max(1, sr(r.h))}, stride);
        cf.weight[i] = f.rects[i].weight;
      }
      features_.push_back(cf);
    }
  }

  int window_w() const noexcept { return win_w_; }
  int window_h() const noexcept { return win_h_; }

  WindowEvaluation run(const IntegralImage& ii, int x, int y) const noexcept {
    const double* sum = ii.sums().data() + static_cast<std::size_t>(y) * ii.stride() + x;
    const double* sq = ii.sqsums().data() + static_cast<std::size_t>(y) * ii.stride() + x;
    const double s = box(sum, norm_);
    const double sq_s = box(sq, norm_);
    const double mean = s / norm_area_;
    const double var = sq_s / norm_area_ - mean * mean;
    double sigma = std::sqrt(std::max(0.0, var));
    if (sigma < kMinWindowStddev) sigma = 1.0;
    const double inv_norm = 1.0 / (norm_area_ * sigma);

    WindowEvaluation ev;
    const auto& stages = model_->stages;
    for (std::size_t si = 0; si < stages.size(); ++si) {
      double stage_sum = 0.0;
      for (const auto& wc : stages[si].classifiers) {
        const Compiled& f = features_[wc.feature_index];
        double value = f.weight[0] * box(sum, f.ofs[0]) + f.weight[1] * box(sum, f.ofs[1]);
        if (f.count == 3) value += f.weight[2] * box(sum, f.ofs[2]);
        stage_sum += value * inv_norm < wc.threshold ? wc.below : wc.above;
      }
      ev.score = stage_sum;
      if (stage_sum < stages[si].threshold) return ev;
      ev.stages_passed = static_cast<int>(si) + 1;
    }
    ev.passed = true;
    return ev;
  }

 private:
  struct Corners {
    std::ptrdiff_t tl, tr, bl, br;
  };
  struct Compiled {
    Corners ofs[3]{};
    double weight[3]{};
    int count = 0;
  };

  static Corners corners(const Rect& r, int stride) {
    const auto at = [stride](int x, int y) { return static_cast<std::ptrdiff_t>(y) * stride + x; };
    return Corners{at(r.x, r.y), at(r.right(), r.y), at(r.x, r.bottom()), at(r.right(), r.bottom())};
  }
  static double box(const double* base, const Corners& c) noexcept {
    return base[c.br] - base[c.bl] - base[c.tr] + base[c.tl];
  }

  const CascadeModel* model_;
  int win_w_ = 0;
  int win_h_ = 0;
  Corners norm_{};
  double norm_area_ = 0.0;
  std::vector<Compiled> features_;
};

}  // namespace detail

/// Scores one window of the integral image against the cascade.
///
/// `window` gives the top-left corner (its size is taken from the model at
/// `scale`); feature rects are scaled by rounding. Intensity normalization
/// uses the window shrunk by one model pixel on each side. A stump outputs
/// `below` when feature / (area * sigma) < threshold; the window passes when
/// every stage sum reaches its stage threshold.
inline WindowEvaluation evaluate_window(const CascadeModel& model, const IntegralImage& ii, const Rect& window,
                                        double scale = 1.0) {
  if (!(scale >= 1.0)) throw InvalidArgumentError("evaluate_window: scale must be >= 1");
  const detail::CompiledCascade cc(model, ii.stride(), scale);
  if (window.x < 0 || window.y < 0 || window.x + cc.window_w() > ii.width() ||
      window.y + cc.window_h() > ii.height())
    throw InvalidArgumentError("evaluate_window: window outside the image");
  return cc.run(ii, window.x, window.y);
}

/// Clusters rectangles whose corners all lie within
/// eps * (min width + min height) / 2 of each other (transitively), averages
/// each cluster and drops clusters with <= min_neighbors members. A surviving
/// cluster nested inside a larger, better-supported one is also dropped.
inline std::vector<Detection> group_rectangles(std::span<const Candidate> candidates, int min_neighbors,
                                               double eps) {
  if (eps < 0.0) throw InvalidArgumentError("group_rectangles: eps must be >= 0");
  const std::size_t n = candidates.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  const auto find = [&parent](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  const auto similar = [eps](const Rect& a, const Rect& b) {
    const double delta = eps * (std::min(a.w, b.w) + std::min(a.h, b.h)) * 0.5;
    return std::abs(a.x - b.x) <= delta && std::abs(a.y - b.y) <= delta &&
           std::abs(a.right() - b.right()) <= delta && std::abs(a.bottom() - b.bottom()) <= delta;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (similar(candidates[i].rect, candidates[j].rect)) {
        const auto a = find(i);
        const auto b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }

  struct Cluster {
    long long sx = 0, sy = 0, sw = 0, sh = 0;
    int count = 0;
    double weight = 0.0;
    Rect mean;
  };
  std::vector<Cluster> clusters;
  std::vector<int> label(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto root = find(i);
    if (label[root] < 0) {
      label[root] = static_cast<int>(clusters.size());
      clusters.emplace_back();
    }
    Cluster& c = clusters[label[root]];
    const Rect& r = candidates[i].rect;
    c.sx += r.x;
    c.sy += r.y;
    c.sw += r.w;
    c.sh += r.h;
    c.weight = c.count == 0 ? candidates[i].score : std::max(c.weight, candidates[i].score);
    ++c.count;
  }
  for (auto& c : clusters) {
    const float inv = 1.f / static_cast<float>(c.count);
    const auto avg = [inv](long long s) { return detail::round_half_even(static_cast<float>(s) * inv); };
    c.mean = Rect{avg(c.sx), avg(c.sy), avg(c.sw), avg(c.sh)};
  }

  std::vector<Detection> out;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const Cluster& c1 = clusters[i];
    if (c1.count <= min_neighbors) continue;
    bool nested = false;
    for (std::size_t j = 0; j < clusters.size() && !nested; ++j) {
      const Cluster& c2 = clusters[j];
      if (j == i || c2.count <= min_neighbors) continue;
      const Rect& r1 = c1.mean;
      const Rect& r2 = c2.mean;
      const int dx = detail::round_half_even(r2.w * eps);
      const int dy = detail::round_half_even(r2.h * eps);
      nested = r1.x >= r2.x - dx && r1.y >= r2.y - dy && r1.right() <= r2.right() + dx &&
               r1.bottom() <= r2.bottom() + dy && (c2.count > std::max(3, c1.count) || c1.count < 3);
    }
    if (!nested) out.push_back(Detection{c1.mean, c1.count, c1.weight});
  }
  return out;
}

inline std::vector<Detection> group_rectangles(std::span<const Rect> rects, int min_neighbors, double eps) {
  std::vector<Candidate> cands;
  cands.reserve(rects.size());
  for (const auto& r : rects) cands.push_back(Candidate{r, 0.0});
  return group_rectangles(std::span<const Candidate>(cands), min_neighbors, eps);
}

/// Orders detections by descending weight, then top-to-bottom, left-to-right.
inline void sort_detections(std::vector<Detection>& dets) {
  std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    if (a.rect.y != b.rect.y) return a.rect.y < b.rect.y;
    if (a.rect.x != b.rect.x) return a.rect.x < b.rect.x;
    if (a.rect.w != b.rect.w) return a.rect.w < b.rect.w;
    return a.rect.h < b.rect.h;
  });
}

/// One level of the image pyramid.
struct PyramidLevel {
  double factor = 1.0;  // original pixels per level pixel
  int width = 0;
  int height = 0;
  int window_w = 0;  // window size in original pixels
  int window_h = 0;
};

/// Pyramid levels scanned for an image of the given size. The factor grows
/// geometrically from 1; levels whose mapped window is below min_size are
/// skipped and the scan stops once the window no longer fits.
inline std::vector<PyramidLevel> pyramid_levels(const CascadeModel& model, int width, int height,
                                                const DetectParams& params) {
  std::vector<PyramidLevel> levels;
  const int max_w = params.max_size > 0 ? params.max_size : width;
  const int max_h = params.max_size > 0 ? params.max_size : height;
  for (double factor = 1.0;; factor *= params.scale_factor) {
    const int win_w = detail::round_half_even(model.window_w * factor);
    const int win_h = detail::round_half_even(model.window_h * factor);
    const int lw = detail::round_half_even(width / factor);
    const int lh = detail::round_half_even(height / factor);
    if (lw - model.window_w <= 0 || lh - model.window_h <= 0) break;
    if (win_w > max_w || win_h > max_h) break;
    if (win_w < params.min_size || win_h < params.min_size) continue;
    // Factors are carried at single precision, like the reference runtime.
    const double f = static_cast<float>(factor);
    levels.push_back(PyramidLevel{f, detail::round_half_even(width / f), detail::round_half_even(height / f),
                                  detail::round_half_even(model.window_w * f),
                                  detail::round_half_even(model.window_h * f)});
  }
  return levels;
}

/// Gray, 8-bit-quantized version of the image used for scanning.
inline RasterImage detection_gray(const RasterImage& img) { return quantize_8bit(to_grayscale(img)); }

/// Every window accepted by the full cascade, mapped to original coordinates.
///
/// Each level is resampled from the full-resolution gray image (pixel-center
/// bilinear, re-quantized to 8 bits). Windows are visited on a 2 px grid
/// below scale 2 and a 1 px grid above; a window rejected by the very first
/// stage also skips its right-hand neighbor.
inline std::vector<Candidate> scan_candidates(const CascadeModel& model, const RasterImage& img,
                                              const DetectParams& params) {
  params.validate();
  const RasterImage gray = detection_gray(img);
  std::vector<Candidate> out;
  for (const auto& level : pyramid_levels(model, gray.width(), gray.height(), params)) {
    const RasterImage scaled =
        quantize_8bit(resize_bilinear(gray, level.width, level.height, SampleGrid::PixelCenter));
    const IntegralImage ii(scaled);
    const detail::CompiledCascade cc(model, ii.stride(), 1.0);
    const float f = static_cast<float>(level.factor);
    // Windows strictly inside the level: x + window < width.
    const int step = level.factor >= 2.0 ? 1 : 2;
    for (int y = 0; y + model.window_h < level.height; y += step) {
      for (int x = 0; x + model.window_w < level.width; x += step) {
        const WindowEvaluation ev = cc.run(ii, x, y);
        if (!ev.passed) {
          // Rejected by the first stage: the next window is unlikely to pass either.
          if (ev.stages_passed == 0) x += step;
          continue;
        }
        out.push_back(Candidate{Rect{detail::round_half_even(static_cast<float>(x) * f),
                                     detail::round_half_even(static_cast<float>(y) * f), level.window_w,
                                     level.window_h},
                                ev.score});
      }
    }
  }
  return out;
}

/// Multi-scale face detection: pyramid scan, grouping, clipping to the image
/// and deterministic ordering (descending weight, then y, then x).
inline std::vector<Detection> detect_multiscale(const CascadeModel& model, const RasterImage& img,
                                                const DetectParams& params = {}) {
  const auto candidates = scan_candidates(model, img, params);
  auto dets = group_rectangles(std::span<const Candidate>(candidates), params.min_neighbors, params.group_eps);
  for (auto& d : dets) {
    d.rect = intersect(d.rect, img.bounds());
  }
  std::erase_if(dets, [](const Detection& d) { return !d.rect.valid(); });
  sort_detections(dets);
  return dets;
}

}  // namespace facecloak
