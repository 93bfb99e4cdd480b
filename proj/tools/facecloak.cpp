// facecloak: detect, perturb, campaign, cloak, verify, flatten.
//
// Exit codes: 0 ok / face found / cloak verified, 1 usage, 2 I/O or model
// error, 3 no face, 4 both views detected, 5 neither view detected,
// 6 human view missed while the machine view still finds the face.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "facecloak/facecloak.hpp"

#ifndef FACECLOAK_DEFAULT_CASCADE
#define FACECLOAK_DEFAULT_CASCADE "haarcascade_frontalface_default.xml"
#endif

namespace fs = std::filesystem;
using namespace facecloak;

namespace {

enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kIo = 2,
  kNoFace = 3,
  kBothDetected = 4,
  kNeitherDetected = 5,
  kHumanMissed = 6,
};

struct Globals {
  std::string cascade = FACECLOAK_DEFAULT_CASCADE;
  std::uint64_t seed = 0;
  std::string out = ".";
  std::string format = "json";
  int jobs = 1;
};

struct DetectFlags {
  DetectParams params;
  std::string remote;  // provider config; empty means the local cascade
};

struct PerturbFlags {
  PerturbationConfig cfg;
  std::optional<double> opacity;
  std::string color_mode = "rgb";
  std::vector<int> face;  // x y w h; empty means detect

  PerturbationConfig resolved() const {
    PerturbationConfig c = cfg;
    if (opacity) c.opacity_range = {*opacity, *opacity};
    c.color_mode = color_mode == "gray" ? ColorMode::GrayscaleTones : ColorMode::UniformRandomRgb;
    return c;
  }
};

void add_detect_flags(CLI::App* cmd, DetectFlags& f) {
  cmd->add_option("--scale-factor", f.params.scale_factor, "Pyramid step")->capture_default_str();
  cmd->add_option("--min-neighbors", f.params.min_neighbors, "Windows needed per face")->capture_default_str();
  cmd->add_option("--min-size", f.params.min_size, "Smallest face side in px")->capture_default_str();
  cmd->add_option("--max-size", f.params.max_size, "Largest face side in px (0: unbounded)")->capture_default_str();
  cmd->add_option("--group-eps", f.params.group_eps, "Grouping tolerance")->capture_default_str();
}

void add_perturb_flags(CLI::App* cmd, PerturbFlags& f) {
  cmd->add_option("--shapes", f.cfg.shapes_per_iteration, "Shapes per disguise")->capture_default_str();
  cmd->add_option("--size-min", f.cfg.size_range.lo, "Smallest shape, fraction of face side")->capture_default_str();
  cmd->add_option("--size-max", f.cfg.size_range.hi, "Largest shape, fraction of face side")->capture_default_str();
  cmd->add_option("--thickness-min", f.cfg.thickness_range.lo, "Thinnest stroke in px")->capture_default_str();
  cmd->add_option("--thickness-max", f.cfg.thickness_range.hi, "Thickest stroke in px")->capture_default_str();
  cmd->add_option("--opacity-min", f.cfg.opacity_range.lo, "Lowest shape opacity")->capture_default_str();
  cmd->add_option("--opacity-max", f.cfg.opacity_range.hi, "Highest shape opacity")->capture_default_str();
  cmd->add_option("--opacity", f.opacity, "Fixed opacity (overrides the range)");
  cmd->add_option("--color-mode", f.color_mode, "rgb or gray")
      ->check(CLI::IsMember({"rgb", "gray"}))
      ->capture_default_str();
}

/// stdout printer honoring --format.
class Printer {
 public:
  explicit Printer(const Globals& g) : json_(g.format == "json") {}
  bool json() const noexcept { return json_; }
  void emit(const Json& j, const std::string& text) const {
    if (json_)
      std::cout << j.dump(2) << '\n';
    else
      std::cout << text;
  }

 private:
  bool json_;
};

std::string detections_text(std::span<const Detection> dets) {
  std::ostringstream os;
  os << dets.size() << " face(s)\n";
  for (const auto& d : dets)
    os << "  x=" << d.rect.x << " y=" << d.rect.y << " w=" << d.rect.w << " h=" << d.rect.h
       << " neighbors=" << d.neighbors << " weight=" << d.weight << '\n';
  return os.str();
}

fs::path out_dir(const Globals& g) {
  fs::path p(g.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create output directory " + p.string() + ": " + ec.message());
  return p;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f || !(f << s)) throw IoError("cannot write " + p.string());
}

Json globals_json(const Globals& g) {
  return {{"cascade", g.cascade}, {"seed", g.seed}, {"out", g.out}, {"format", g.format}, {"jobs", g.jobs}};
}

std::unique_ptr<Detector> make_detector(const Globals& g, const DetectFlags& f, std::optional<CascadeModel>& model) {
  if (!f.remote.empty()) return std::make_unique<RemoteDetector>(RemoteDetectorConfig::load(f.remote));
  model = load_cascade(g.cascade);
  return std::make_unique<LocalDetector>(*model);
}

Rect resolve_face(const std::vector<int>& face, const CascadeModel& model, const RasterImage& img,
                  const DetectParams& params) {
  if (face.empty()) return baseline_detection(model, img, params).rect;
  if (face.size() != 4) throw InvalidArgumentError("--face takes x y w h");
  const Rect r{face[0], face[1], face[2], face[3]};
  if (!r.valid()) throw InvalidArgumentError("--face must have positive size");
  return r;
}

// ---------------------------------------------------------------------------

int cmd_detect(const Globals& g, const std::string& image, const DetectFlags& f) {
  std::optional<CascadeModel> model;
  auto det = make_detector(g, f, model);
  const RasterImage img = load_image(image);
  const auto dets = det->detect(img, f.params);
  Json j{{"report_version", kReportVersion},
         {"kind", "detect"},
         {"config", {{"global", globals_json(g)}, {"image", image}, {"detector", detect_params_json(f.params)}}},
         {"image", {{"width", img.width()}, {"height", img.height()}}},
         {"detections", detections_json(dets)}};
  Printer(g).emit(j, detections_text(dets));
  return dets.empty() ? kNoFace : kOk;
}

int cmd_perturb(const Globals& g, const std::string& image, const DetectFlags& df, const PerturbFlags& pf) {
  const PerturbationConfig cfg = pf.resolved();
  cfg.validate();
  const CascadeModel model = load_cascade(g.cascade);
  const RasterImage img = load_image(image);
  const Rect face = resolve_face(pf.face, model, img, df.params);
  SeededRng rng(g.seed, 0);
  const Disguise d = apply_disguise(img, face, cfg, rng);

  const fs::path dir = out_dir(g);
  const fs::path png = dir / "perturbed.png";
  const fs::path sidecar = dir / "perturbed.shapes.json";
  save_png(d.image, png);
  Json j{{"report_version", kReportVersion},
         {"kind", "perturb"},
         {"config",
          {{"global", globals_json(g)}, {"image", image}, {"perturbation", perturbation_json(cfg)},
           {"detector", detect_params_json(df.params)}}},
         {"face", rect_json(face)},
         {"output", png.string()},
         {"shapes", shapes_json(d.shapes)}};
  write_text(sidecar, dump_report(j));
  std::ostringstream os;
  os << "face " << face.x << ' ' << face.y << ' ' << face.w << ' ' << face.h << "\n"
     << d.shapes.size() << " shapes drawn\nwrote " << png.string() << " and " << sidecar.string() << '\n';
  Printer(g).emit(j, os.str());
  return kOk;
}

int cmd_campaign(const Globals& g, const std::string& image, const DetectFlags& df, const PerturbFlags& pf,
                 int iterations, double success_iou) {
  CampaignConfig cfg;
  cfg.iterations = iterations;
  cfg.perturbation = pf.resolved();
  cfg.detector = df.params;
  cfg.success_iou = success_iou;
  cfg.seed = g.seed;
  cfg.validate();
  const CascadeModel model = load_cascade(g.cascade);
  const RasterImage img = load_image(image);
  const CampaignReport rep = run_campaign(img, model, cfg, g.jobs);
  const auto problems = check_report(rep);
  for (const auto& p : problems) std::cerr << "report check: " << p << '\n';

  const fs::path dir = out_dir(g);
  Json report = campaign_report_json(rep);
  report["config"]["image"] = image;
  write_text(dir / "report.json", dump_report(report));
  save_png(heatmap_to_image(rep.success_heatmap), dir / "heatmap_success.png");
  save_png(heatmap_to_image(rep.failure_heatmap), dir / "heatmap_failure.png");

  Json summary{{"report_version", kReportVersion},
               {"kind", "campaign_summary"},
               {"config", {{"global", globals_json(g)}, {"campaign", report["config"]}}},
               {"baseline", detection_json(rep.baseline)},
               {"iterations", cfg.iterations},
               {"evading_trials", rep.evading_trials},
               {"evasion_rate", rep.evasion_rate},
               {"key_region_contrast", report["key_region_contrast"]},
               {"report", (dir / "report.json").string()},
               {"consistent", problems.empty()}};
  std::ostringstream os;
  os << "baseline " << rep.baseline.rect.x << ' ' << rep.baseline.rect.y << ' ' << rep.baseline.rect.w << ' '
     << rep.baseline.rect.h << "\n"
     << rep.evading_trials << " of " << cfg.iterations << " trials evaded (rate " << rep.evasion_rate << ")\n"
     << "key-region contrast sign " << rep.contrast.sign << "\nwrote " << (dir / "report.json").string() << '\n';
  Printer(g).emit(summary, os.str());
  return problems.empty() ? kOk : kIo;
}

int cmd_cloak(const Globals& g, const std::string& target, const std::string& background, const CloakConfig& cfg) {
  cfg.validate();
  const CloakBuild build = build_cloak(load_image(target), load_image(background), cfg);
  const fs::path dir = out_dir(g);
  const fs::path png = dir / "cloak.png";
  const fs::path trace = dir / "loss.txt";
  export_cloak(build.background_scaled, build.result.alpha, png);
  write_loss_trace(trace, build.result.loss_trace);

  const RasterImage float_blend = blend(build.result.alpha, build.background_scaled, cfg.white_level);
  const double export_psnr = psnr(flatten_alpha(load_image(png), kWhite), to_rgb(float_blend));
  Json j{{"report_version", kReportVersion},
         {"kind", "cloak"},
         {"config",
          {{"global", globals_json(g)}, {"target", target}, {"background", background},
           {"cloak", cloak_config_json(cfg)}}},
         {"final_mse", build.result.final_mse},
         {"export_psnr_db", export_psnr},
         {"loss_trace", loss_trace_json(build.result.loss_trace)},
         {"output", png.string()},
         {"trace", trace.string()}};
  std::ostringstream os;
  os << "final mse " << build.result.final_mse << "\nexport psnr " << export_psnr << " dB\nwrote " << png.string()
     << " and " << trace.string() << '\n';
  Printer(g).emit(j, os.str());
  return kOk;
}

int cmd_verify(const Globals& g, const std::string& path, const DetectFlags& f, const std::vector<int>& reference,
               const std::string& target, double human_iou, double evade_iou) {
  std::optional<CascadeModel> model;
  auto det = make_detector(g, f, model);
  const RasterImage img = load_image(path);
  if (img.layout() != Layout::RGBA) std::cerr << "note: " << path << " has no alpha channel; both views are identical\n";
  const DualViewReport views = compare_views(img, *det, f.params);

  bool human = !views.human_view.empty();
  bool evaded = views.machine_view.empty();
  std::optional<Rect> ref;
  if (!reference.empty()) {
    if (reference.size() != 4) throw InvalidArgumentError("--reference takes x y w h");
    ref = Rect{reference[0], reference[1], reference[2], reference[3]};
    human = std::any_of(views.human_view.begin(), views.human_view.end(),
                        [&](const Detection& d) { return iou(d.rect, *ref) >= human_iou; });
    evaded = is_evaded(views.machine_view, *ref, evade_iou);
  }
  std::optional<double> human_psnr;
  if (!target.empty()) {
    const RasterImage t = load_image(target);
    const RasterImage hv = img.layout() == Layout::RGBA ? flatten_alpha(img, kWhite) : to_rgb(img);
    human_psnr = psnr(hv, to_rgb(t));
  }

  const int code = human ? (evaded ? kOk : kBothDetected) : (evaded ? kNeitherDetected : kHumanMissed);
  const char* verdict = code == kOk             ? "cloaked"
                        : code == kBothDetected ? "both-detected"
                        : code == kNeitherDetected ? "neither-detected"
                                                   : "human-missed";
  Json j{{"report_version", kReportVersion},
         {"kind", "verify"},
         {"config",
          {{"global", globals_json(g)}, {"image", path}, {"detector", detect_params_json(f.params)},
           {"remote", f.remote.empty() ? Json(nullptr) : Json(f.remote)},
           {"reference", ref ? rect_json(*ref) : Json(nullptr)}, {"human_iou", human_iou}, {"evade_iou", evade_iou}}},
         {"human_view", detections_json(views.human_view)},
         {"machine_view", detections_json(views.machine_view)},
         {"human_detected", human},
         {"machine_evaded", evaded},
         {"human_psnr_db", human_psnr ? Json(*human_psnr) : Json(nullptr)},
         {"verdict", verdict}};
  std::ostringstream os;
  os << "human view: " << detections_text(views.human_view) << "machine view: " << detections_text(views.machine_view)
     << "verdict " << verdict << '\n';
  Printer(g).emit(j, os.str());
  return code;
}

int cmd_flatten(const Globals& g, const std::string& path, const std::vector<double>& bg, bool drop) {
  const RasterImage img = load_image(path);
  if (img.layout() != Layout::RGBA) throw ImageFormatError(path + " has no alpha channel");
  if (bg.size() != 3) throw InvalidArgumentError("--background takes r g b in [0,1]");
  const RasterImage out = drop ? drop_alpha(img) : flatten_alpha(img, Color{bg[0], bg[1], bg[2]});
  const fs::path dir = out_dir(g);
  const fs::path png = dir / (drop ? "machine_view.png" : "human_view.png");
  save_png(out, png);
  Json j{{"report_version", kReportVersion},
         {"kind", "flatten"},
         {"config", {{"global", globals_json(g)}, {"image", path}, {"background", bg}, {"drop_alpha", drop}}},
         {"output", png.string()}};
  Printer(g).emit(j, "wrote " + png.string() + "\n");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Face-detector camouflage toolkit: disguise search and transparency cloaks", "facecloak"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from an INI/TOML file (explicit flags win)");

  Globals g;
  app.add_option("--cascade", g.cascade, "OpenCV cascade XML")->capture_default_str();
  app.add_option("--seed", g.seed, "Seed for every random draw")->capture_default_str();
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--format", g.format, "stdout format")->check(CLI::IsMember({"json", "text"}))->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  int code = kOk;
  std::function<int()> run;

  // detect
  std::string detect_image;
  DetectFlags detect_flags;
  auto* detect = app.add_subcommand("detect", "Print faces found in an image (exit 3 when none)");
  detect->add_option("image", detect_image, "Input image")->required();
  add_detect_flags(detect, detect_flags);
  detect->add_option("--remote", detect_flags.remote, "Provider config for a remote detector");
  detect->callback([&] { run = [&] { return cmd_detect(g, detect_image, detect_flags); }; });

  // perturb
  std::string perturb_image;
  DetectFlags perturb_det;
  PerturbFlags perturb_flags;
  auto* perturb = app.add_subcommand("perturb", "Draw one random disguise over the detected face");
  perturb->add_option("image", perturb_image, "Input image")->required();
  add_perturb_flags(perturb, perturb_flags);
  add_detect_flags(perturb, perturb_det);
  perturb->add_option("--face", perturb_flags.face, "Face box x y w h (default: detect)")->expected(4);
  perturb->callback([&] { run = [&] { return cmd_perturb(g, perturb_image, perturb_det, perturb_flags); }; });

  // campaign
  std::string campaign_image;
  DetectFlags campaign_det;
  PerturbFlags campaign_flags;
  int iterations = 200;
  double success_iou = 0.3;
  auto* campaign = app.add_subcommand("campaign", "Run many random disguises and aggregate the evasions");
  campaign->add_option("image", campaign_image, "Input image")->required();
  campaign->add_option("--iterations", iterations, "Disguises to try")->capture_default_str();
  campaign->add_option("--success-iou", success_iou, "Overlap that still counts as detected")->capture_default_str();
  add_perturb_flags(campaign, campaign_flags);
  add_detect_flags(campaign, campaign_det);
  campaign->callback([&] {
    run = [&] { return cmd_campaign(g, campaign_image, campaign_det, campaign_flags, iterations, success_iou); };
  });

  // cloak
  std::string cloak_target, cloak_background;
  CloakConfig cloak_cfg;
  auto* cloak = app.add_subcommand("cloak", "Fit an alpha layer hiding the background behind the target");
  cloak->add_option("target", cloak_target, "Image shown to viewers")->required();
  cloak->add_option("background", cloak_background, "Image seen by alpha-unaware pipelines")->required();
  cloak->add_option("--steps", cloak_cfg.steps, "Adam steps")->capture_default_str();
  cloak->add_option("--lr", cloak_cfg.learning_rate, "Adam learning rate")->capture_default_str();
  cloak->add_option("--beta1", cloak_cfg.adam_beta1, "Adam first-moment decay")->capture_default_str();
  cloak->add_option("--beta2", cloak_cfg.adam_beta2, "Adam second-moment decay")->capture_default_str();
  cloak->add_option("--epsilon", cloak_cfg.adam_epsilon, "Adam epsilon")->capture_default_str();
  cloak->add_option("--background-scale", cloak_cfg.background_scale, "Background intensity factor")
      ->capture_default_str();
  cloak->add_option("--log-interval", cloak_cfg.log_interval, "Steps between loss samples")->capture_default_str();
  cloak->add_option("--working-size", cloak_cfg.working_size, "Square working resolution")->capture_default_str();
  cloak->callback([&] { run = [&] { return cmd_cloak(g, cloak_target, cloak_background, cloak_cfg); }; });

  // verify
  std::string verify_image, verify_target;
  DetectFlags verify_det;
  std::vector<int> verify_ref;
  double human_iou = 0.5, evade_iou = 0.3;
  auto* verify = app.add_subcommand("verify", "Detect on the composited and alpha-dropped views (exit 0 iff cloaked)");
  verify->add_option("image", verify_image, "Cloak PNG")->required();
  add_detect_flags(verify, verify_det);
  verify->add_option("--remote", verify_det.remote, "Provider config for a remote detector");
  verify->add_option("--reference", verify_ref, "Expected face box x y w h")->expected(4);
  verify->add_option("--target", verify_target, "Target image for the human-view PSNR");
  verify->add_option("--human-iou", human_iou, "Overlap required in the human view")->capture_default_str();
  verify->add_option("--evade-iou", evade_iou, "Overlap that breaks evasion in the machine view")
      ->capture_default_str();
  verify->callback([&] {
    run = [&] { return cmd_verify(g, verify_image, verify_det, verify_ref, verify_target, human_iou, evade_iou); };
  });

  // flatten
  std::string flatten_image;
  std::vector<double> flatten_bg{1.0, 1.0, 1.0};
  bool flatten_drop = false;
  auto* flatten = app.add_subcommand("flatten", "Render the human (composited) or machine (alpha-dropped) view");
  flatten->add_option("image", flatten_image, "RGBA PNG")->required();
  flatten->add_option("--background", flatten_bg, "Composite color r g b in [0,1]")->expected(3);
  flatten->add_flag("--drop-alpha", flatten_drop, "Write the raw RGB layer instead");
  flatten->callback([&] { run = [&] { return cmd_flatten(g, flatten_image, flatten_bg, flatten_drop); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    code = run();
  } catch (const NoFaceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = kNoFace;
  } catch (const InvalidArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    code = kIo;
  }
  return code;
}
