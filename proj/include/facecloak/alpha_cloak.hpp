#pragma once

// Transparency cloaking: fit a per-pixel alpha so that the PNG composited over
// white shows the target face while its raw RGB layer carries a different
// ("no-face") image.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <span>
#include <vector>

#include "facecloak/cascade_detector.hpp"
#include "facecloak/errors.hpp"
#include "facecloak/image.hpp"
#include "facecloak/png_io.hpp"

namespace facecloak {

/// Single-channel transparency grid, values in [0,1].
struct AlphaField {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  AlphaField() = default;
  AlphaField(int w, int h, double fill) : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}
  double at(int x, int y) const noexcept { return values[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const AlphaField&, const AlphaField&) = default;
};

struct CloakConfig {
  int steps = 1000;
  double learning_rate = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double background_scale = 0.5;
  double white_level = 1.0;
  int log_interval = 100;
  int working_size = 256;

  void validate() const {
    if (steps < 1) throw InvalidArgumentError("steps must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidArgumentError("learning_rate must be > 0");
    if (!(background_scale > 0.0 && background_scale < white_level))
      throw InvalidArgumentError("background_scale must lie in (0, white_level)");
    if (!(white_level > 0.0 && white_level <= 1.0)) throw InvalidArgumentError("white_level must lie in (0,1]");
    if (log_interval < 1) throw InvalidArgumentError("log_interval must be >= 1");
    if (working_size < 1) throw InvalidArgumentError("working_size must be >= 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_epsilon > 0.0))
      throw InvalidArgumentError("invalid Adam hyperparameters");
  }
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long long t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

struct LossSample {
  int step = 0;
  double mse = 0.0;
};

struct CloakResult {
  AlphaField alpha;
  std::vector<LossSample> loss_trace;
  double final_mse = 0.0;
};

namespace detail {

inline void check_pair(const AlphaField& alpha, const RasterImage& img, const char* what) {
  if (alpha.width != img.width() || alpha.height != img.height())
    throw DimensionMismatchError(std::string(what) + ": alpha field and image differ in size");
}

inline void check_same(const RasterImage& a, const RasterImage& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height() || a.layout() != b.layout())
    throw DimensionMismatchError(std::string(what) + ": images differ in size or layout");
}

/// Pairwise (cascade) summation over a contiguous row-major range.
inline double pairwise_sum(std::span<const double> v) noexcept {
  if (v.size() <= 16) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace detail

/// out_i = alpha_i * b_i + (1 - alpha_i) * white, applied to every channel.
inline RasterImage blend(const AlphaField& alpha, const RasterImage& background, double white_level) {
  detail::check_pair(alpha, background, "blend");
  RasterImage out(background.width(), background.height(), background.layout());
  const int ch = background.channels();
  const auto src = background.pixels();
  auto dst = out.mutable_pixels();
  for (std::size_t i = 0; i < alpha.values.size(); ++i) {
    const double a = alpha.values[i];
    for (int c = 0; c < ch; ++c)
      dst[i * ch + c] = std::clamp(a * src[i * ch + c] + (1.0 - a) * white_level, 0.0, 1.0);
  }
  return out;
}

/// Mean squared error over every pixel and channel (pairwise row-major sum).
inline double mse(const RasterImage& a, const RasterImage& b) {
  detail::check_same(a, b, "mse");
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  std::vector<double> sq(pa.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = (pa[i] - pb[i]) * (pa[i] - pb[i]);
  return detail::pairwise_sum(sq) / static_cast<double>(sq.size());
}

/// dL/dalpha_i = (2/N) * sum_c (blend_ic - t_ic) * (b_ic - white), N = pixels * channels.
inline std::vector<double> alpha_gradient(const AlphaField& alpha, const RasterImage& background,
                                          const RasterImage& target, double white_level) {
  detail::check_pair(alpha, background, "alpha_gradient");
  detail::check_same(background, target, "alpha_gradient");
  const int ch = background.channels();
  const double scale = 2.0 / static_cast<double>(background.size());
  const auto b = background.pixels();
  const auto t = target.pixels();
  std::vector<double> grad(alpha.values.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double a = alpha.values[i];
    double g = 0.0;
    for (int c = 0; c < ch; ++c) {
      const double bi = b[i * ch + c];
      g += (a * bi + (1.0 - a) * white_level - t[i * ch + c]) * (bi - white_level);
    }
    grad[i] = scale * g;
  }
  return grad;
}

/// Per-pixel minimizer of the blend error, clamped to [0,1]:
/// alpha* = sum_c (w - t_c)(w - b_c) / sum_c (w - b_c)^2, which is
/// (w - t) / (w - b) for a single (or replicated) channel. Pixels whose
/// background equals white are assigned 0.
inline AlphaField closed_form_alpha(const RasterImage& target, const RasterImage& background_scaled,
                                    double white_level) {
  detail::check_same(target, background_scaled, "closed_form_alpha");
  AlphaField alpha(target.width(), target.height(), 0.0);
  const int ch = target.channels();
  const auto t = target.pixels();
  const auto b = background_scaled.pixels();
  for (std::size_t i = 0; i < alpha.values.size(); ++i) {
    double num = 0.0;
    double den = 0.0;
    for (int c = 0; c < ch; ++c) {
      const double wb = white_level - b[i * ch + c];
      num += (white_level - t[i * ch + c]) * wb;
      den += wb * wb;
    }
    alpha.values[i] = std::sqrt(den) < 1e-9 ? 0.0 : std::clamp(num / den, 0.0, 1.0);
  }
  return alpha;
}

/// Read as gray, resize to size x size, replicate into RGB.
inline RasterImage prepare_cloak_input(const RasterImage& img, int size) {
  return gray_to_rgb(resize_bilinear(to_grayscale(img), size, size, SampleGrid::PixelCenter));
}

/// Adam on the blend MSE starting from alpha = 1, projecting alpha onto [0,1]
/// after every update.
///
/// `target` and `background` must already be prepared (same size and layout);
/// the background is multiplied by cfg.background_scale here. The loss is
/// logged before the update of every step divisible by cfg.log_interval;
/// final_mse is measured after the last update.
///
/// With a constant learning rate, pixels that have converged see v decay until
/// the effective step outgrows the curvature and they ring briefly before
/// settling again. At the defaults this starts around step 1000, so very long
/// runs can end a few hundredths away from the optimum on isolated pixels.
inline CloakResult optimize_alpha(const RasterImage& target, const RasterImage& background, const CloakConfig& cfg) {
  cfg.validate();
  detail::check_same(target, background, "optimize_alpha");
  const RasterImage bg = scale_intensity(background, cfg.background_scale);
  const double w = cfg.white_level;
  const int ch = bg.channels();
  const std::size_t n_px = static_cast<std::size_t>(bg.width()) * bg.height();
  const double grad_scale = 2.0 / static_cast<double>(bg.size());
  const auto b = bg.pixels();
  const auto t = target.pixels();

  CloakResult res;
  res.alpha = AlphaField(bg.width(), bg.height(), 1.0);
  auto& alpha = res.alpha.values;
  AdamState adam(n_px);
  std::vector<double> sq(bg.size());
  std::vector<double> grad(n_px);

  const auto evaluate = [&](bool want_grad) {
    for (std::size_t i = 0; i < n_px; ++i) {
      const double a = alpha[i];
      double g = 0.0;
      for (int c = 0; c < ch; ++c) {
        const std::size_t k = i * ch + c;
        const double diff = a * b[k] + (1.0 - a) * w - t[k];
        sq[k] = diff * diff;
        g += diff * (b[k] - w);
      }
      if (want_grad) grad[i] = grad_scale * g;
    }
    return detail::pairwise_sum(sq) / static_cast<double>(sq.size());
  };

  for (int step = 0; step < cfg.steps; ++step) {
    const double loss = evaluate(true);
    if (step % cfg.log_interval == 0) res.loss_trace.push_back({step, loss});
    ++adam.t;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam.t));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam.t));
    for (std::size_t i = 0; i < n_px; ++i) {
      const double g = grad[i];
      adam.m[i] = cfg.adam_beta1 * adam.m[i] + (1.0 - cfg.adam_beta1) * g;
      adam.v[i] = cfg.adam_beta2 * adam.v[i] + (1.0 - cfg.adam_beta2) * g * g;
      const double m_hat = adam.m[i] / bc1;
      const double v_hat = adam.v[i] / bc2;
      alpha[i] = std::clamp(alpha[i] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon), 0.0, 1.0);
    }
  }
  res.final_mse = evaluate(false);
  return res;
}

/// Prepared inputs plus the fitted alpha for one target/background pair.
struct CloakBuild {
  RasterImage target;             // prepared target
  RasterImage background_scaled;  // prepared background * background_scale
  CloakResult result;
};

inline CloakBuild build_cloak(const RasterImage& target_raw, const RasterImage& background_raw,
                              const CloakConfig& cfg) {
  cfg.validate();
  CloakBuild out;
  out.target = prepare_cloak_input(target_raw, cfg.working_size);
  const RasterImage bg = prepare_cloak_input(background_raw, cfg.working_size);
  out.result = optimize_alpha(out.target, bg, cfg);
  out.background_scaled = scale_intensity(bg, cfg.background_scale);
  return out;
}

/// Packs the scaled background as straight RGB and alpha as the A channel.
inline RasterImage cloak_image(const RasterImage& background_scaled, const AlphaField& alpha) {
  detail::check_pair(alpha, background_scaled, "cloak_image");
  const RasterImage rgb = to_rgb(background_scaled);
  RasterImage out(rgb.width(), rgb.height(), Layout::RGBA);
  const auto src = rgb.pixels();
  auto dst = out.mutable_pixels();
  for (std::size_t i = 0; i < alpha.values.size(); ++i) {
    for (int c = 0; c < 3; ++c) dst[4 * i + c] = src[3 * i + c];
    dst[4 * i + 3] = std::clamp(alpha.values[i], 0.0, 1.0);
  }
  return out;
}

/// Writes the cloak as an 8-bit RGBA PNG.
inline void export_cloak(const RasterImage& background_scaled, const AlphaField& alpha,
                         const std::filesystem::path& path) {
  save_png(cloak_image(background_scaled, alpha), path);
}

inline void write_loss_trace(const std::filesystem::path& path, std::span<const LossSample> trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# step mse\n" << std::setprecision(17);
  for (const auto& s : trace) out << s.step << ' ' << s.mse << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

struct CloakVerification {
  std::vector<Detection> human_view;    // flattened over white
  std::vector<Detection> machine_view;  // alpha dropped
  bool human_detected = false;
  bool machine_evaded = false;
  std::optional<double> human_psnr;  // against the supplied target
};

struct VerifyOptions {
  std::optional<Rect> reference_box;  // when set, detections are judged by IoU against it
  double human_iou = 0.5;
  double evade_iou = 0.3;
  std::optional<RasterImage> target;  // for the human-view PSNR
};

/// Runs the detector on both renderings of an RGBA image.
///
/// Without a reference box, "detected" means any detection and "evaded" means
/// none. With one, the human view must have a detection with IoU >= human_iou
/// and the machine view none with IoU >= evade_iou.
inline CloakVerification verify_cloak_image(const RasterImage& rgba, const CascadeModel& model,
                                            const DetectParams& params, const VerifyOptions& opts = {}) {
  if (rgba.layout() != Layout::RGBA) throw ImageFormatError("cloak verification needs an RGBA image");
  CloakVerification v;
  const RasterImage human = flatten_alpha(rgba, kWhite);
  const RasterImage machine = drop_alpha(rgba);
  v.human_view = detect_multiscale(model, human, params);
  v.machine_view = detect_multiscale(model, machine, params);
  if (opts.reference_box) {
    const Rect ref = *opts.reference_box;
    v.human_detected = std::any_of(v.human_view.begin(), v.human_view.end(),
                                   [&](const Detection& d) { return iou(d.rect, ref) >= opts.human_iou; });
    v.machine_evaded = std::none_of(v.machine_view.begin(), v.machine_view.end(),
                                    [&](const Detection& d) { return iou(d.rect, ref) >= opts.evade_iou; });
  } else {
    v.human_detected = !v.human_view.empty();
    v.machine_evaded = v.machine_view.empty();
  }
  if (opts.target) v.human_psnr = psnr(human, to_rgb(*opts.target));
  return v;
}

inline CloakVerification verify_cloak(const std::filesystem::path& path, const CascadeModel& model,
                                      const DetectParams& params, const VerifyOptions& opts = {}) {
  return verify_cloak_image(load_image(path), model, params, opts);
}

}  // namespace facecloak
