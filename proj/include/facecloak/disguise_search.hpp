#pragma once

// Randomized disguise campaigns: perturb a detected face over and over,
// re-detect, and aggregate where the successful disguises put their paint.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "facecloak/cascade_detector.hpp"
#include "facecloak/errors.hpp"
#include "facecloak/image.hpp"
#include "facecloak/rng.hpp"
#include "facecloak/shapes.hpp"

namespace facecloak {

struct CampaignConfig {
  int iterations = 200;
  PerturbationConfig perturbation;
  DetectParams detector;
  double success_iou = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    if (iterations < 1) throw InvalidArgumentError("iterations must be >= 1");
    if (!(success_iou > 0.0 && success_iou < 1.0)) throw InvalidArgumentError("success_iou must be in (0,1)");
    perturbation.validate();
    detector.validate();
  }
};

struct TrialRecord {
  int index = 0;
  std::vector<Shape> shapes;
  std::vector<Detection> post_detections;
  bool evaded = false;
};

/// Per-pixel counts over the baseline face box.
struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<int> counts;

  Heatmap() = default;
  Heatmap(int w, int h) : width(w), height(h), counts(static_cast<std::size_t>(w) * h, 0) {}
  int at(int x, int y) const noexcept { return counts[static_cast<std::size_t>(y) * width + x]; }
  int max_count() const noexcept { return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end()); }
  friend bool operator==(const Heatmap&, const Heatmap&) = default;
};

/// A face-box-relative rectangle in fractions of the box: [x0,x1) x [y0,y1).
struct FractionRect {
  double x0 = 0.0;
  double x1 = 0.0;
  double y0 = 0.0;
  double y1 = 0.0;
};

struct KeyRegion {
  std::string name;
  std::vector<FractionRect> blocks;
};

using KeyRegionMap = std::vector<KeyRegion>;

/// Heuristic landmark-dense (brow, nose bridge, mouth, jawline) and sparse
/// (forehead, cheeks) regions of a frontal face box.
inline KeyRegionMap default_key_regions() {
  return {
      {"brow", {{0.10, 0.90, 0.18, 0.34}}},
      {"nose_bridge", {{0.38, 0.62, 0.25, 0.60}}},
      {"mouth", {{0.25, 0.75, 0.62, 0.80}}},
      {"jawline", {{0.05, 0.95, 0.80, 1.00}}},
      {"forehead", {{0.15, 0.85, 0.00, 0.18}}},
      {"cheeks", {{0.05, 0.30, 0.40, 0.70}, {0.70, 0.95, 0.40, 0.70}}},
  };
}

inline constexpr std::array<std::string_view, 3> kDenseRegionNames{"brow", "jawline", "mouth"};
inline constexpr std::array<std::string_view, 2> kSparseRegionNames{"forehead", "cheeks"};

/// Pixel columns [first, last) whose centers fall in [lo, hi) of an extent.
inline std::pair<int, int> fraction_span(double lo, double hi, int extent) noexcept {
  const int a = static_cast<int>(std::ceil(lo * extent - 0.5));
  const int b = static_cast<int>(std::ceil(hi * extent - 0.5));
  return {std::clamp(a, 0, extent), std::clamp(b, 0, extent)};
}

/// Membership mask of a (possibly multi-block) region on a w x h face box.
inline BinaryMask region_mask(const KeyRegion& region, int w, int h) {
  BinaryMask mask(w, h);
  for (const auto& b : region.blocks) {
    if (!(b.x0 >= 0.0 && b.x1 <= 1.0 && b.y0 >= 0.0 && b.y1 <= 1.0 && b.x0 <= b.x1 && b.y0 <= b.y1))
      throw InvalidArgumentError("region '" + region.name + "' has fractions outside [0,1]");
    const auto [x0, x1] = fraction_span(b.x0, b.x1, w);
    const auto [y0, y1] = fraction_span(b.y0, b.y1, h);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) mask.set(x, y);
  }
  return mask;
}

inline BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  BinaryMask out = a;
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] |= b.bits[i];
  return out;
}

/// Mean heatmap count over the mask's pixels divided by n_trials.
inline double masked_density(const Heatmap& heatmap, const BinaryMask& mask, int n_trials,
                             const std::string& name = "region") {
  if (n_trials < 1) throw InvalidArgumentError("density needs n_trials >= 1");
  long long total = 0;
  long long pixels = 0;
  for (std::size_t i = 0; i < mask.bits.size(); ++i)
    if (mask.bits[i]) {
      total += heatmap.counts[i];
      ++pixels;
    }
  if (pixels == 0) throw EmptyRegionError("region '" + name + "' covers no pixels of the face box");
  return static_cast<double>(total) / (static_cast<double>(pixels) * n_trials);
}

struct RegionDensity {
  std::string name;
  double density = 0.0;
};

/// density(region) = sum of counts over region pixels / (pixel count * n_trials).
inline std::vector<RegionDensity> region_density(const Heatmap& heatmap, const KeyRegionMap& regions,
                                                 int n_trials) {
  std::vector<RegionDensity> out;
  for (const auto& r : regions)
    out.push_back({r.name, masked_density(heatmap, region_mask(r, heatmap.width, heatmap.height), n_trials, r.name)});
  return out;
}

struct RegionStat {
  std::string name;
  std::optional<double> evading;      // mean coverage density among evading trials
  std::optional<double> non_evading;  // ... and among the rest
  friend bool operator==(const RegionStat&, const RegionStat&) = default;
};

/// Coverage density of the landmark-dense union (brow, jawline, mouth) versus
/// the sparse union (forehead, cheeks) among evading trials.
struct KeyRegionContrast {
  std::optional<double> dense_density;
  std::optional<double> sparse_density;
  std::optional<double> difference;
  int sign = 0;
  friend bool operator==(const KeyRegionContrast&, const KeyRegionContrast&) = default;
};

struct CampaignReport {
  int image_width = 0;
  int image_height = 0;
  Detection baseline;
  CampaignConfig config;
  std::vector<TrialRecord> trials;
  int evading_trials = 0;
  double evasion_rate = 0.0;
  Heatmap success_heatmap;  // coverage of evading trials
  Heatmap failure_heatmap;  // coverage of trials that were still detected
  std::vector<RegionStat> region_stats;
  KeyRegionContrast contrast;
};

/// True when no detection overlaps the baseline box with IoU >= threshold.
inline bool is_evaded(std::span<const Detection> post, const Rect& baseline, double success_iou) {
  return std::none_of(post.begin(), post.end(),
                      [&](const Detection& d) { return iou(d.rect, baseline) >= success_iou; });
}

/// Highest-weight detection, or NoFaceError.
inline Detection baseline_detection(const CascadeModel& model, const RasterImage& img, const DetectParams& params) {
  const auto dets = detect_multiscale(model, img, params);
  if (dets.empty()) throw NoFaceError("no face detected in the baseline image");
  return dets.front();
}

/// Coverage of one trial's shapes, restricted to the face box.
inline BinaryMask trial_face_coverage(std::span<const Shape> shapes, const Rect& face) {
  BinaryMask mask(face.w, face.h);
  for (const auto& s : shapes) {
    const Rect area = intersect(shape_bounds(s), face);
    if (!area.valid()) continue;
    for (int y = area.y; y < area.bottom(); ++y)
      for (int x = area.x; x < area.right(); ++x)
        if (covers(s, x, y)) mask.set(x - face.x, y - face.y);
  }
  return mask;
}

/// Heatmaps, rate and region statistics, recomputed from the trial list.
struct CampaignAggregate {
  int evading_trials = 0;
  double evasion_rate = 0.0;
  Heatmap success;
  Heatmap failure;
  std::vector<RegionStat> region_stats;
  KeyRegionContrast contrast;
};

inline CampaignAggregate aggregate_trials(std::span<const TrialRecord> trials, const Rect& face,
                                          const KeyRegionMap& regions = default_key_regions()) {
  CampaignAggregate agg;
  agg.success = Heatmap(face.w, face.h);
  agg.failure = Heatmap(face.w, face.h);
  for (const auto& t : trials) {
    const BinaryMask cov = trial_face_coverage(t.shapes, face);
    Heatmap& target = t.evaded ? agg.success : agg.failure;
    for (std::size_t i = 0; i < cov.bits.size(); ++i) target.counts[i] += cov.bits[i];
    agg.evading_trials += t.evaded ? 1 : 0;
  }
  const int n = static_cast<int>(trials.size());
  const int n_fail = n - agg.evading_trials;
  agg.evasion_rate = n > 0 ? static_cast<double>(agg.evading_trials) / n : 0.0;

  for (const auto& r : regions) {
    const BinaryMask m = region_mask(r, face.w, face.h);
    RegionStat st{r.name, std::nullopt, std::nullopt};
    if (agg.evading_trials > 0) st.evading = masked_density(agg.success, m, agg.evading_trials, r.name);
    if (n_fail > 0) st.non_evading = masked_density(agg.failure, m, n_fail, r.name);
    agg.region_stats.push_back(std::move(st));
  }

  if (agg.evading_trials > 0) {
    const auto union_of = [&](auto names) {
      BinaryMask acc(face.w, face.h);
      for (const auto& r : regions)
        if (std::find(names.begin(), names.end(), r.name) != names.end())
          acc = mask_union(acc, region_mask(r, face.w, face.h));
      return acc;
    };
    const double dense = masked_density(agg.success, union_of(kDenseRegionNames), agg.evading_trials, "dense union");
    const double sparse =
        masked_density(agg.success, union_of(kSparseRegionNames), agg.evading_trials, "sparse union");
    agg.contrast = KeyRegionContrast{dense, sparse, dense - sparse, (dense > sparse) - (dense < sparse)};
  }
  return agg;
}

/// Runs one perturbation trial with RNG substream `index`.
inline TrialRecord run_trial(const RasterImage& img, const CascadeModel& model, const CampaignConfig& cfg,
                             const Rect& face, int index) {
  SeededRng rng(cfg.seed, static_cast<std::uint64_t>(index));
  Disguise d = apply_disguise(img, face, cfg.perturbation, rng);
  TrialRecord rec;
  rec.index = index;
  rec.shapes = std::move(d.shapes);
  rec.post_detections = detect_multiscale(model, d.image, cfg.detector);
  rec.evaded = is_evaded(rec.post_detections, face, cfg.success_iou);
  return rec;
}

/// Reproduces the perturbed image of a recorded trial.
inline RasterImage replay_trial(const RasterImage& img, const CampaignConfig& cfg, const Rect& face, int index) {
  SeededRng rng(cfg.seed, static_cast<std::uint64_t>(index));
  return apply_disguise(img, face, cfg.perturbation, rng).image;
}

/// The disguise campaign. Trials may run on up to `jobs` threads; each owns
/// RNG substream i and results are stored by index, so the report does not
/// depend on `jobs`.
inline CampaignReport run_campaign(const RasterImage& img, const CascadeModel& model, const CampaignConfig& cfg,
                                   int jobs = 1) {
  cfg.validate();
  CampaignReport rep;
  rep.image_width = img.width();
  rep.image_height = img.height();
  rep.config = cfg;
  rep.baseline = baseline_detection(model, img, cfg.detector);
  const Rect face = rep.baseline.rect;

  rep.trials.resize(cfg.iterations);
  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int i = next++; i < cfg.iterations; i = next++) rep.trials[i] = run_trial(img, model, cfg, face, i);
  };
  const int n_threads = std::clamp(jobs, 1, cfg.iterations);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  auto agg = aggregate_trials(rep.trials, face);
  rep.evading_trials = agg.evading_trials;
  rep.evasion_rate = agg.evasion_rate;
  rep.success_heatmap = std::move(agg.success);
  rep.failure_heatmap = std::move(agg.failure);
  rep.region_stats = std::move(agg.region_stats);
  rep.contrast = agg.contrast;
  return rep;
}

/// Recomputes every derived field of a report from its trials and lists the
/// mismatches (empty when consistent).
inline std::vector<std::string> check_report(const CampaignReport& rep) {
  std::vector<std::string> problems;
  const Rect face = rep.baseline.rect;
  if (static_cast<int>(rep.trials.size()) != rep.config.iterations)
    problems.push_back("trial count differs from configured iterations");
  for (std::size_t i = 0; i < rep.trials.size(); ++i) {
    const auto& t = rep.trials[i];
    if (t.index != static_cast<int>(i)) problems.push_back("trial " + std::to_string(i) + " has index " + std::to_string(t.index));
    if (t.evaded != is_evaded(t.post_detections, face, rep.config.success_iou))
      problems.push_back("trial " + std::to_string(i) + " evasion flag disagrees with its detections");
  }
  const auto agg = aggregate_trials(rep.trials, face);
  if (agg.evading_trials != rep.evading_trials) problems.push_back("evading trial count mismatch");
  if (agg.evasion_rate != rep.evasion_rate) problems.push_back("evasion_rate mismatch");
  if (!(agg.success == rep.success_heatmap)) problems.push_back("success heatmap mismatch");
  if (!(agg.failure == rep.failure_heatmap)) problems.push_back("failure heatmap mismatch");
  if (!(agg.region_stats == rep.region_stats)) problems.push_back("region stats mismatch");
  if (!(agg.contrast == rep.contrast)) problems.push_back("key-region contrast mismatch");
  for (std::size_t i = 0; i < agg.success.counts.size(); ++i)
    if (rep.success_heatmap.counts[i] + rep.failure_heatmap.counts[i] > rep.config.iterations) {
      problems.push_back("heatmap counts exceed iterations");
      break;
    }
  return problems;
}

struct OpacityLevelResult {
  double opacity = 0.0;
  int evading_trials = 0;
  double evasion_rate = 0.0;
};

/// Runs the same campaign (same seed, hence the same shape geometry and
/// colors) once per opacity level with the opacity range pinned to that level.
inline std::vector<OpacityLevelResult> sweep_opacity(const RasterImage& img, const CascadeModel& model,
                                                     const CampaignConfig& cfg, std::span<const double> levels,
                                                     int jobs = 1) {
  std::vector<OpacityLevelResult> out;
  for (double level : levels) {
    if (!(level >= 0.0 && level <= 1.0)) throw InvalidArgumentError("opacity levels must lie in [0,1]");
    CampaignConfig c = cfg;
    c.perturbation.opacity_range = {level, level};
    const auto rep = run_campaign(img, model, c, jobs);
    out.push_back({level, rep.evading_trials, rep.evasion_rate});
  }
  return out;
}

/// Renders counts as a gray image, scaled linearly so the maximum is white.
inline RasterImage heatmap_to_image(const Heatmap& hm) {
  RasterImage img(std::max(1, hm.width), std::max(1, hm.height), Layout::Gray);
  const int peak = hm.max_count();
  if (peak == 0) return img;
  auto px = img.mutable_pixels();
  for (std::size_t i = 0; i < hm.counts.size(); ++i) px[i] = static_cast<double>(hm.counts[i]) / peak;
  return img;
}

}  // namespace facecloak
