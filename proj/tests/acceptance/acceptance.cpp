// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//
// Artifacts (campaign report, cloak, heatmaps, contrast record) are written to
// ./acceptance_artifacts under the working directory. Tracked regression values
// live in tracked_values.json next to this file; a missing entry is recorded on
// first run and compared afterwards.

#include <boost/uuid/detail/sha1.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "facecloak/facecloak.hpp"

using namespace facecloak;
namespace fs = std::filesystem;

namespace {

const fs::path kData = FACECLOAK_TEST_DATA;
const fs::path kTracked = fs::path(FACECLOAK_TRACKED_DIR) / "tracked_values.json";
const fs::path kArtifacts = fs::current_path() / "acceptance_artifacts";

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit_s;
  std::function<Outcome()> run;
};

const CascadeModel& model() {
  static const CascadeModel m = load_cascade(kData / "haarcascade_frontalface_default.xml");
  return m;
}

const RasterImage& portrait() {
  static const RasterImage img = load_image(kData / "portrait.png");
  return img;
}

std::string sha1_hex(const std::string& s) {
  boost::uuids::detail::sha1 h;
  h.process_bytes(s.data(), s.size());
  boost::uuids::detail::sha1::digest_type d;
  h.get_digest(d);
  std::ostringstream os;
  for (unsigned v : d) os << std::hex << std::setw(8) << std::setfill('0') << v;
  return os.str();
}

nlohmann::json load_tracked() {
  std::ifstream in(kTracked);
  if (!in) return nlohmann::json::object();
  return nlohmann::json::parse(in);
}

void save_tracked(const nlohmann::json& j) {
  std::ofstream out(kTracked, std::ios::trunc);
  out << j.dump(2) << '\n';
}

/// Compares against (or records) a tracked value. Returns an empty string when
/// it matches or was newly recorded, otherwise a mismatch description.
std::string check_tracked(const std::string& key, const nlohmann::json& value, std::string& note) {
  auto tracked = load_tracked();
  if (!tracked.contains(key)) {
    tracked[key] = value;
    save_tracked(tracked);
    note = "recorded " + key;
    return {};
  }
  if (tracked[key] != value) return key + " is " + value.dump() + ", tracked " + tracked[key].dump();
  note = key + " matches tracked value";
  return {};
}

CampaignConfig table1_campaign() {
  CampaignConfig cfg;
  cfg.iterations = 200;
  cfg.perturbation.shapes_per_iteration = 15;
  cfg.perturbation.opacity_range = {1.0, 1.0};
  cfg.seed = 20240601;
  return cfg;
}

// Shared with criterion 8 (which analyses this report) so it is computed once.
const CampaignReport& table1_report() {
  static const CampaignReport rep = run_campaign(portrait(), model(), table1_campaign());
  return rep;
}

// Maximum bipartite matching between reference and produced boxes at IoU >= thr.
int matching_size(const std::vector<Rect>& ref, const std::vector<Rect>& got, double thr) {
  std::vector<int> owner(got.size(), -1);
  std::function<bool(int, std::vector<bool>&)> augment = [&](int r, std::vector<bool>& seen) {
    for (std::size_t g = 0; g < got.size(); ++g) {
      if (seen[g] || iou(ref[r], got[g]) < thr) continue;
      seen[g] = true;
      if (owner[g] < 0 || augment(owner[g], seen)) {
        owner[g] = r;
        return true;
      }
    }
    return false;
  };
  int n = 0;
  for (std::size_t r = 0; r < ref.size(); ++r) {
    std::vector<bool> seen(got.size(), false);
    n += augment(static_cast<int>(r), seen);
  }
  return n;
}

RasterImage random_replicated(int n, std::mt19937& gen) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  RasterImage g(n, n, Layout::Gray);
  for (double& v : g.mutable_pixels()) v = d(gen);
  return gray_to_rgb(g);
}

// ---------------------------------------------------------------------------

Outcome integral_oracle() {
  std::mt19937 gen(1);
  long long checked = 0;
  for (int n = 0; n < 100; ++n) {
    // k/256 values keep every partial sum exact, whatever the summation order.
    std::vector<double> px(32 * 32);
    for (auto& v : px) v = static_cast<double>(gen() % 256) / 256.0;
    const RasterImage img(32, 32, Layout::Gray, px);
    const IntegralImage ii(img);
    for (int k = 0; k < 10; ++k) {
      const int x0 = static_cast<int>(gen() % 32), y0 = static_cast<int>(gen() % 32);
      const Rect r{x0, y0, 1 + static_cast<int>(gen() % (32 - x0)), 1 + static_cast<int>(gen() % (32 - y0))};
      double s = 0.0;
      for (int y = r.y; y < r.bottom(); ++y)
        for (int x = r.x; x < r.right(); ++x) s += img.at(x, y);
      if (ii.rect_sum(r) != s)
        return {false, "image " + std::to_string(n) + " rect " + std::to_string(k) + " differs"};
      ++checked;
    }
  }
  return {true, std::to_string(checked) + " rect sums exact"};
}

Outcome detector_parity() {
  std::ifstream in(kData / "reference_detections.json");
  const auto ref = nlohmann::json::parse(in);
  DetectParams p;
  p.scale_factor = ref["scale_factor"];
  p.min_neighbors = ref["min_neighbors"];
  p.min_size = ref["min_size"];
  int images = 0, faces = 0, spurious = 0, missed = 0;
  std::string worst;
  for (const auto& e : ref["images"]) {
    std::vector<Rect> want;
    for (const auto& f : e["faces"]) want.push_back({f["x"], f["y"], f["w"], f["h"]});
    std::vector<Rect> got;
    for (const auto& d : detect_multiscale(model(), load_image(kData / e["image"].get<std::string>()), p))
      got.push_back(d.rect);
    const int m = matching_size(want, got, 0.6);
    missed += static_cast<int>(want.size()) - m;
    spurious += static_cast<int>(got.size()) - m;
    if (m != static_cast<int>(want.size()) || m != static_cast<int>(got.size()))
      worst += " " + e["image"].get<std::string>();
    faces += static_cast<int>(want.size());
    ++images;
  }
  std::ostringstream os;
  os << images << " images, " << faces << " reference boxes, " << missed << " missed, " << spurious << " spurious";
  if (!worst.empty()) os << " (" << worst.substr(1) << ")";
  return {images >= 5 && missed == 0 && spurious == 0, os.str()};
}

Outcome gradient_check() {
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    const RasterImage b = scale_intensity(random_replicated(8, gen), 0.5);
    const RasterImage t = random_replicated(8, gen);
    AlphaField a(8, 8, 0.0);
    for (double& v : a.values) v = 0.02 + 0.96 * u(gen);
    const auto g = alpha_gradient(a, b, t, 1.0);
    const double h = 1e-4;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      AlphaField ap = a, am = a;
      ap.values[i] += h;
      am.values[i] -= h;
      const double fd = (mse(blend(ap, b, 1.0), t) - mse(blend(am, b, 1.0), t)) / (2 * h);
      const double scale = std::max({std::abs(fd), std::abs(g[i]), 1e-12});
      worst = std::max(worst, std::abs(fd - g[i]) / scale);
    }
  }
  std::ostringstream os;
  os << "max relative error " << std::scientific << std::setprecision(2) << worst << " (limit 1e-4)";
  return {worst <= 1e-4, os.str()};
}

Outcome optimizer_oracle() {
  std::mt19937 gen(4);
  // Default schedule (1000 steps, lr 0.05). Left running much longer, plain Adam
  // on these quadratics enters periodic late bursts as v decays (see the optimizer
  // notes), so the step budget is kept at the default rather than the maximum.
  CloakConfig cfg;
  double worst_inf = 0.0, worst_gap = -1.0;
  bool trace_ok = true;
  for (int pair = 0; pair < 20; ++pair) {
    const RasterImage t = random_replicated(64, gen);
    const RasterImage bg = random_replicated(64, gen);
    const auto res = optimize_alpha(t, bg, cfg);
    const RasterImage bs = scale_intensity(bg, cfg.background_scale);
    const AlphaField oracle = closed_form_alpha(t, bs, cfg.white_level);
    for (std::size_t i = 0; i < oracle.values.size(); ++i)
      worst_inf = std::max(worst_inf, std::abs(res.alpha.values[i] - oracle.values[i]));
    worst_gap = std::max(worst_gap, res.final_mse - mse(blend(oracle, bs, cfg.white_level), t));
    trace_ok = trace_ok && !res.loss_trace.empty() && res.final_mse <= res.loss_trace.front().mse &&
               res.loss_trace.back().mse <= res.loss_trace.front().mse;
  }
  std::ostringstream os;
  os << cfg.steps << " steps, max |alpha - closed form| " << std::setprecision(4) << worst_inf << " (limit 0.02), max mse gap "
     << std::scientific << std::setprecision(2) << worst_gap << " (limit 1e-4), trace "
     << (trace_ok ? "decreasing" : "NOT decreasing");
  return {worst_inf <= 0.02 && worst_gap <= 1e-4 && trace_ok, os.str()};
}

Outcome transparency_pipeline() {
  const CampaignConfig cfg = table1_campaign();
  const CampaignReport rep = run_campaign(portrait(), model(), cfg);
  if (rep.evading_trials == 0) return {false, "campaign produced no evading background"};

  CloakConfig cc;
  const RasterImage target = prepare_cloak_input(portrait(), cc.working_size);
  const auto target_dets = detect_multiscale(model(), target, cfg.detector);
  if (target_dets.empty()) return {false, "prepared target has no baseline face"};
  const Rect baseline = target_dets.front().rect;

  fs::create_directories(kArtifacts);
  int tried = 0;
  std::string last;
  for (const auto& trial : rep.trials) {
    if (!trial.evaded) continue;
    ++tried;
    const RasterImage background = replay_trial(portrait(), cfg, rep.baseline.rect, trial.index);
    const CloakBuild build = build_cloak(portrait(), background, cc);
    const fs::path path = kArtifacts / "cloak.png";
    export_cloak(build.background_scaled, build.result.alpha, path);
    VerifyOptions opts;
    opts.reference_box = baseline;
    opts.human_iou = 0.5;
    opts.evade_iou = 0.3;
    const auto v = verify_cloak(path, model(), cfg.detector, opts);
    const RasterImage float_blend = blend(build.result.alpha, build.background_scaled, cc.white_level);
    const double q_psnr = psnr(flatten_alpha(load_image(path), kWhite), float_blend);
    std::ostringstream os;
    os << "trial " << trial.index << ": human " << (v.human_detected ? "detected" : "missed") << ", machine "
       << (v.machine_evaded ? "evaded" : "detected") << ", export PSNR " << std::fixed << std::setprecision(1)
       << q_psnr << " dB";
    last = os.str();
    if (v.human_detected && v.machine_evaded && q_psnr >= 40.0) {
      fs::copy_file(path, kArtifacts / "cloak_verified.png", fs::copy_options::overwrite_existing);
      return {true, last + " (" + std::to_string(tried) + " of " + std::to_string(rep.evading_trials) +
                        " evading backgrounds tried)"};
    }
  }
  return {false, "no evading background produced a verified cloak; last " + last};
}

Outcome table1_campaign_run() {
  const CampaignReport& a = table1_report();
  const CampaignReport b = run_campaign(portrait(), model(), table1_campaign());
  const std::string sa = dump_report(campaign_report_json(a));
  const std::string sb = dump_report(campaign_report_json(b));
  fs::create_directories(kArtifacts);
  std::ofstream(kArtifacts / "campaign_report.json", std::ios::trunc) << sa;
  save_png(heatmap_to_image(a.success_heatmap), kArtifacts / "heatmap_success.png");
  save_png(heatmap_to_image(a.failure_heatmap), kArtifacts / "heatmap_failure.png");

  const std::string digest = sha1_hex(sa);
  std::string note;
  const std::string mismatch = check_tracked("campaign_report_sha1", digest, note);
  std::ostringstream os;
  os << a.evading_trials << "/" << a.config.iterations << " evading (rate " << a.evasion_rate << "), "
     << a.trials.front().shapes.size() << " shapes per trial, runs " << (sa == sb ? "identical" : "DIFFER")
     << ", digest " << digest.substr(0, 12) << ", " << (mismatch.empty() ? note : mismatch);
  std::string rate_note;
  check_tracked("campaign_evasion_rate", a.evasion_rate, rate_note);
  return {a.evading_trials >= 1 && sa == sb && mismatch.empty() && a.trials.front().shapes.size() == 15u,
          os.str()};
}

Outcome opacity_direction() {
  CampaignConfig cfg = table1_campaign();
  const std::vector<double> levels{0.0, 0.3, 1.0};
  const auto res = sweep_opacity(portrait(), model(), cfg, levels);
  std::ostringstream os;
  os << "rates: 0.0 -> " << res[0].evasion_rate << ", 0.3 -> " << res[1].evasion_rate << ", 1.0 -> "
     << res[2].evasion_rate;
  return {res[0].evasion_rate == 0.0 && res[2].evasion_rate >= res[1].evasion_rate, os.str()};
}

Outcome region_consistency() {
  const CampaignReport& rep = table1_report();
  const Rect face = rep.baseline.rect;
  const auto regions = default_key_regions();

  // Oracle: recount every face-box pixel of every trial straight from the
  // coverage predicate, and test region membership by pixel center.
  std::vector<long long> succ(static_cast<std::size_t>(face.w) * face.h, 0), fail(succ.size(), 0);
  int n_succ = 0;
  for (const auto& t : rep.trials) {
    n_succ += t.evaded;
    for (int y = 0; y < face.h; ++y)
      for (int x = 0; x < face.w; ++x) {
        bool hit = false;
        for (const auto& s : t.shapes) hit = hit || covers(s, face.x + x, face.y + y);
        if (hit) (t.evaded ? succ : fail)[static_cast<std::size_t>(y) * face.w + x] += 1;
      }
  }
  const int n_fail = static_cast<int>(rep.trials.size()) - n_succ;
  const auto inside = [&](const std::vector<FractionRect>& blocks, int x, int y) {
    for (const auto& b : blocks)
      if (b.x0 * face.w <= x + 0.5 && x + 0.5 < b.x1 * face.w && b.y0 * face.h <= y + 0.5 && y + 0.5 < b.y1 * face.h)
        return true;
    return false;
  };
  const auto density = [&](const std::vector<long long>& counts, const std::vector<FractionRect>& blocks, int n) {
    long long total = 0, pixels = 0;
    for (int y = 0; y < face.h; ++y)
      for (int x = 0; x < face.w; ++x)
        if (inside(blocks, x, y)) {
          total += counts[static_cast<std::size_t>(y) * face.w + x];
          ++pixels;
        }
    return static_cast<double>(total) / (static_cast<double>(pixels) * n);
  };

  int mismatches = 0;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto& st = rep.region_stats.at(i);
    if (st.name != regions[i].name) ++mismatches;
    if (n_succ > 0 && (!st.evading || *st.evading != density(succ, regions[i].blocks, n_succ))) ++mismatches;
    if (n_fail > 0 && (!st.non_evading || *st.non_evading != density(fail, regions[i].blocks, n_fail))) ++mismatches;
  }
  const auto union_blocks = [&](auto names) {
    std::vector<FractionRect> out;
    for (const auto& r : regions)
      if (std::find(names.begin(), names.end(), r.name) != names.end())
        out.insert(out.end(), r.blocks.begin(), r.blocks.end());
    return out;
  };
  std::optional<double> dense, sparse;
  int sign = 0;
  if (n_succ > 0) {
    dense = density(succ, union_blocks(kDenseRegionNames), n_succ);
    sparse = density(succ, union_blocks(kSparseRegionNames), n_succ);
    sign = (*dense > *sparse) - (*dense < *sparse);
  }
  const bool contrast_ok = rep.contrast.dense_density == dense && rep.contrast.sparse_density == sparse &&
                           rep.contrast.sign == sign;

  const nlohmann::json record{{"dense", dense ? nlohmann::json(*dense) : nlohmann::json(nullptr)},
                              {"sparse", sparse ? nlohmann::json(*sparse) : nlohmann::json(nullptr)},
                              {"difference", rep.contrast.difference ? nlohmann::json(*rep.contrast.difference)
                                                                     : nlohmann::json(nullptr)},
                              {"sign", sign}};
  fs::create_directories(kArtifacts);
  std::ofstream(kArtifacts / "key_region_contrast.json", std::ios::trunc) << record.dump(2) << '\n';
  std::string note;
  const std::string mismatch = check_tracked("key_region_contrast_sign", sign, note);

  std::ostringstream os;
  os << mismatches << " region mismatches, contrast " << (contrast_ok ? "matches" : "DIFFERS") << " (dense "
     << std::setprecision(4) << dense.value_or(NAN) << " vs sparse " << sparse.value_or(NAN) << ", sign " << sign
     << (sign > 0 ? ", brow/jaw/mouth favoured" : sign < 0 ? ", forehead/cheeks favoured" : "") << "), "
     << (mismatch.empty() ? note : mismatch);
  return {mismatches == 0 && contrast_ok && mismatch.empty() && n_succ > 0, os.str()};
}

Outcome determinism_sweep() {
  const PerturbationConfig pc;
  const Rect face{40, 40, 100, 100};
  bool shapes_same = true;
  for (std::uint64_t seed : {1ull, 42ull, 987654321ull}) {
    SeededRng a(seed, 3), b(seed, 3);
    for (int i = 0; i < 200; ++i) shapes_same = shapes_same && random_shape(a, face, pc) == random_shape(b, face, pc);
  }
  SeededRng ra(5, 0), rb(5, 0);
  const Disguise da = apply_disguise(portrait(), face, pc, ra);
  const Disguise db = apply_disguise(portrait(), face, pc, rb);
  const bool disguise_same = da.image.to_bytes() == db.image.to_bytes() && da.image == db.image && da.shapes == db.shapes;

  CampaignConfig cfg;
  cfg.iterations = 30;
  cfg.seed = 99;
  const auto ca = dump_report(campaign_report_json(run_campaign(portrait(), model(), cfg, 1)));
  const auto cb = dump_report(campaign_report_json(run_campaign(portrait(), model(), cfg, 3)));
  std::ostringstream os;
  os << "random_shape " << (shapes_same ? "identical" : "DIFFERS") << ", apply_disguise "
     << (disguise_same ? "identical" : "DIFFERS") << ", run_campaign (1 vs 3 workers) "
     << (ca == cb ? "identical" : "DIFFERS");
  return {shapes_same && disguise_same && ca == cb, os.str()};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "integral-image oracle", 1.0, integral_oracle},
      {2, "detector parity vs reference runtime", 10.0, detector_parity},
      {3, "alpha gradient vs finite differences", 1.0, gradient_check},
      {4, "Adam vs closed-form alpha", 30.0, optimizer_oracle},
      {5, "transparency cloak pipeline", 60.0, transparency_pipeline},
      {6, "200-iteration disguise campaign", 120.0, table1_campaign_run},
      {7, "opacity sweep direction", 240.0, opacity_direction},
      {8, "region analysis consistency", 0.0, region_consistency},
      {9, "determinism sweep", 0.0, determinism_sweep},
  };
  // Load the model before timing anything.
  (void)model();

  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = o.pass;
    std::string limit;
    if (c.time_limit_s > 0.0) {
      std::ostringstream ls;
      ls << " / limit " << c.time_limit_s << " s";
      limit = ls.str();
      if (secs >= c.time_limit_s) {
        pass = false;
        o.detail += "; over time limit";
      }
    }
    failures += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << ": " << o.detail << " ("
              << std::fixed << std::setprecision(2) << secs << " s" << limit << ")" << std::defaultfloat << '\n'
              << std::flush;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
  return failures == 0 ? 0 : 1;
}
