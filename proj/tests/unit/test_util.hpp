#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "facecloak/cascade_model.hpp"
#include "facecloak/image.hpp"

namespace fct {

inline std::filesystem::path data(const std::string& name) { return std::filesystem::path(FACECLOAK_TEST_DATA) / name; }

/// Fresh directory under the system temp dir, named after the running test.
inline std::filesystem::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = std::filesystem::temp_directory_path() / "facecloak_tests" /
             (std::string(info->test_suite_name()) + "." + info->name());
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline const facecloak::CascadeModel& frontal_face() {
  static const facecloak::CascadeModel model = facecloak::load_cascade(data("haarcascade_frontalface_default.xml"));
  return model;
}

/// Image with uniformly random 8-bit values (std::mt19937 is fully specified).
inline facecloak::RasterImage random_image(int w, int h, facecloak::Layout layout, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::vector<double> px(static_cast<std::size_t>(w) * h * facecloak::channel_count(layout));
  for (auto& v : px) v = static_cast<double>(gen() % 256) / 255.0;
  return facecloak::RasterImage(w, h, layout, std::move(px));
}

}  // namespace fct
