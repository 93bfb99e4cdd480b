#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "facecloak/alpha_cloak.hpp"
#include "facecloak/png_io.hpp"
#include "test_util.hpp"

using namespace facecloak;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(FACECLOAK_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, DetectPortraitBlankAndMissingCascade) {
  const auto dir = fct::scratch_dir();
  auto r = cli("detect " + q(fct::data("portrait.png")));
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["detections"].size(), 1u);
  EXPECT_EQ(j["report_version"], 1);

  save_png(RasterImage(64, 64, Layout::RGB, 1.0), dir / "blank.png");
  r = cli("detect " + q(dir / "blank.png"));
  EXPECT_EQ(r.code, 3);
  EXPECT_TRUE(nlohmann::json::parse(r.out)["detections"].empty());

  EXPECT_EQ(cli("--cascade " + q(dir / "none.xml") + " detect " + q(fct::data("portrait.png"))).code, 2);
  EXPECT_EQ(cli("detect " + q(dir / "missing.png")).code, 2);
  EXPECT_EQ(cli("detect").code, 1);
  EXPECT_EQ(cli("frobnicate").code, 1);
  EXPECT_EQ(cli("detect " + q(fct::data("portrait.png")) + " --scale-factor 0.5").code, 1);
  EXPECT_EQ(cli("--help").code, 0);
}

TEST(Cli, TextFormat) {
  const auto r = cli("--format text detect " + q(fct::data("portrait.png")));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("1 face(s)"), std::string::npos);
}

TEST(Cli, PerturbIsReproducible) {
  const auto dir = fct::scratch_dir();
  ASSERT_EQ(cli("--seed 42 --out " + q(dir / "a") + " perturb --shapes 15 " + q(fct::data("portrait.png"))).code, 0);
  ASSERT_EQ(cli("--seed 42 --out " + q(dir / "b") + " perturb --shapes 15 " + q(fct::data("portrait.png"))).code, 0);
  EXPECT_EQ(slurp(dir / "a/perturbed.png"), slurp(dir / "b/perturbed.png"));
  const auto side = nlohmann::json::parse(slurp(dir / "a/perturbed.shapes.json"));
  const auto other = nlohmann::json::parse(slurp(dir / "b/perturbed.shapes.json"));
  EXPECT_EQ(side["shapes"], other["shapes"]);
  EXPECT_EQ(side["face"], other["face"]);
  EXPECT_EQ(side["shapes"].size(), 15u);

  ASSERT_EQ(cli("--out " + q(dir / "z") + " perturb --opacity 0 " + q(fct::data("portrait.png"))).code, 0);
  EXPECT_EQ(load_image(dir / "z/perturbed.png"), load_image(fct::data("portrait.png")));

  save_png(RasterImage(64, 64, Layout::RGB, 1.0), dir / "blank.png");
  EXPECT_EQ(cli("--out " + q(dir / "n") + " perturb " + q(dir / "blank.png")).code, 3);
  EXPECT_EQ(cli("--out " + q(dir / "f") + " perturb --face 4 4 40 40 " + q(dir / "blank.png")).code, 0);
}

TEST(Cli, CampaignIsDeterministic) {
  const auto dir = fct::scratch_dir();
  const std::string args = " campaign --iterations 10 " + q(fct::data("portrait.png"));
  auto r = cli("--seed 7 --out " + q(dir / "a") + args);
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(nlohmann::json::parse(r.out)["consistent"].get<bool>());
  ASSERT_EQ(cli("--seed 7 --jobs 2 --out " + q(dir / "b") + args).code, 0);
  EXPECT_EQ(slurp(dir / "a/report.json"), slurp(dir / "b/report.json"));
  EXPECT_TRUE(fs::exists(dir / "a/heatmap_success.png"));
  EXPECT_TRUE(fs::exists(dir / "a/heatmap_failure.png"));
}

TEST(Cli, CloakAgainstClosedFormOracle) {
  const auto dir = fct::scratch_dir();
  const RasterImage t = fct::random_image(64, 64, Layout::Gray, 1);
  const RasterImage b = fct::random_image(64, 64, Layout::Gray, 2);
  save_png(t, dir / "t.png");
  save_png(b, dir / "b.png");
  auto r = cli("--out " + q(dir / "o") + " cloak --working-size 64 " + q(dir / "t.png") + " " + q(dir / "b.png"));
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  const RasterImage tp = prepare_cloak_input(t, 64);
  const RasterImage bs = scale_intensity(prepare_cloak_input(b, 64), 0.5);
  const double oracle = mse(blend(closed_form_alpha(tp, bs, 1.0), bs, 1.0), tp);
  EXPECT_LE(j["final_mse"].get<double>(), oracle + 1e-4);
  EXPECT_EQ(load_image(dir / "o/cloak.png").layout(), Layout::RGBA);

  r = cli("--out " + q(dir / "s") + " cloak --steps 1 --working-size 64 " + q(dir / "t.png") + " " + q(dir / "b.png"));
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(fs::exists(dir / "s/cloak.png"));
  EXPECT_EQ(nlohmann::json::parse(r.out)["loss_trace"].size(), 1u);
  std::ifstream trace(dir / "s/loss.txt");
  int lines = 0;
  for (std::string line; std::getline(trace, line);) lines += !line.empty() && line[0] != '#';
  EXPECT_EQ(lines, 1);
}

TEST(Cli, CloakOfScaledBackgroundIsOpaque) {
  const auto dir = fct::scratch_dir();
  // Even bytes halve exactly onto the 8-bit grid.
  RasterImage b = fct::random_image(32, 32, Layout::Gray, 3);
  for (double& v : b.mutable_pixels()) v = dequantize_byte(static_cast<std::uint8_t>(2 * (quantize_byte(v) / 2)));
  save_png(b, dir / "b.png");
  save_png(scale_intensity(b, 0.5), dir / "t.png");
  ASSERT_EQ(cli("--out " + q(dir) + " cloak --working-size 32 " + q(dir / "t.png") + " " + q(dir / "b.png")).code, 0);
  const RasterImage c = load_image(dir / "cloak.png");
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) EXPECT_GE(quantize_byte(c.at(x, y, 3)), 254);
}

TEST(Cli, VerifyExitCodes) {
  const auto dir = fct::scratch_dir();
  const RasterImage face = load_image(fct::data("portrait.png"));
  export_cloak(face, AlphaField(face.width(), face.height(), 1.0), dir / "opaque_face.png");
  EXPECT_EQ(cli("verify " + q(dir / "opaque_face.png")).code, 4);
  export_cloak(RasterImage(80, 80, Layout::RGB, 1.0), AlphaField(80, 80, 1.0), dir / "opaque_blank.png");
  EXPECT_EQ(cli("verify " + q(dir / "opaque_blank.png")).code, 5);
  export_cloak(face, AlphaField(face.width(), face.height(), 0.0), dir / "inverted.png");
  EXPECT_EQ(cli("verify " + q(dir / "inverted.png")).code, 6);

  // Face for viewers, flat gray card underneath.
  save_png(RasterImage(face.width(), face.height(), Layout::RGB, 0.6), dir / "card.png");
  ASSERT_EQ(cli("--out " + q(dir) + " cloak --working-size 200 " + q(fct::data("portrait.png")) + " " +
                q(dir / "card.png"))
                .code,
            0);
  const auto r = cli("verify " + q(dir / "cloak.png"));
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(nlohmann::json::parse(r.out)["verdict"], "cloaked");
}

TEST(Cli, FlattenViews) {
  const auto dir = fct::scratch_dir();
  const RasterImage rgb(4, 4, Layout::RGB, 0.2);
  export_cloak(rgb, AlphaField(4, 4, 0.0), dir / "c.png");
  ASSERT_EQ(cli("--out " + q(dir) + " flatten " + q(dir / "c.png")).code, 0);
  EXPECT_EQ(load_image(dir / "human_view.png"), RasterImage(4, 4, Layout::RGB, 1.0));
  ASSERT_EQ(cli("--out " + q(dir) + " flatten --drop-alpha " + q(dir / "c.png")).code, 0);
  EXPECT_EQ(load_image(dir / "machine_view.png"), quantize_8bit(rgb));
  EXPECT_EQ(cli("--out " + q(dir) + " flatten " + q(fct::data("portrait.png"))).code, 2);
}

TEST(Cli, ConfigFileWithFlagPrecedence) {
  const auto dir = fct::scratch_dir();
  {
    std::ofstream cfg(dir / "run.ini");
    cfg << "format=text\n[detect]\nmin-neighbors=3\n";
  }
  auto r = cli("--config " + q(dir / "run.ini") + " detect " + q(fct::data("portrait.png")));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("face(s)"), std::string::npos);
  r = cli("--config " + q(dir / "run.ini") + " --format json detect " + q(fct::data("portrait.png")));
  EXPECT_EQ(r.code, 0);
  const auto parsed = nlohmann::json::parse(r.out, nullptr, false);
  EXPECT_FALSE(parsed.is_discarded());
}
