// Builds a transparency cloak: a face for anyone viewing the PNG over white,
// a blank gray card for anything that ignores alpha.

#include <iostream>

#include "facecloak/facecloak.hpp"

using namespace facecloak;

int main() {
  try {
    const CascadeModel model = load_cascade(FACECLOAK_DATA_DIR "/haarcascade_frontalface_default.xml");
    const RasterImage target = load_image(FACECLOAK_DATA_DIR "/portrait.png");
    const RasterImage card(target.width(), target.height(), Layout::RGB, 0.6);

    CloakConfig cfg;
    cfg.working_size = 200;
    const CloakBuild build = build_cloak(target, card, cfg);
    for (const auto& s : build.result.loss_trace) std::cout << "step " << s.step << " mse " << s.mse << '\n';
    export_cloak(build.background_scaled, build.result.alpha, "cloak_demo.png");

    const auto v = verify_cloak("cloak_demo.png", model, {});
    std::cout << "human view: " << v.human_view.size() << " face(s), machine view: " << v.machine_view.size()
              << " face(s)\n";
    return v.human_detected && v.machine_evaded ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
}
