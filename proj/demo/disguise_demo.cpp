// Detect the face in a portrait, paint one random disguise over it and check
// whether the detector still finds it.
//
//   disguise_demo [image.png] [seed]

#include <cstdlib>
#include <iostream>

#include "facecloak/facecloak.hpp"

using namespace facecloak;

int main(int argc, char** argv) {
  const std::string path = argc > 1 ? argv[1] : FACECLOAK_DATA_DIR "/portrait.png";
  const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;
  try {
    const CascadeModel model = load_cascade(FACECLOAK_DATA_DIR "/haarcascade_frontalface_default.xml");
    const RasterImage img = load_image(path);
    const Detection face = baseline_detection(model, img, {});
    std::cout << "face at " << face.rect.x << ',' << face.rect.y << ' ' << face.rect.w << 'x' << face.rect.h << '\n';

    for (int i = 0; i < 10; ++i) {
      SeededRng rng(seed, static_cast<std::uint64_t>(i));
      const Disguise d = apply_disguise(img, face.rect, PerturbationConfig{}, rng);
      const auto after = detect_multiscale(model, d.image);
      const bool evaded = is_evaded(after, face.rect, 0.3);
      std::cout << "disguise " << i << ": " << after.size() << " detection(s), " << (evaded ? "evaded" : "still found")
                << '\n';
      if (evaded) {
        save_png(d.image, "disguise_demo.png");
        std::cout << "saved disguise_demo.png\n";
        return 0;
      }
    }
    std::cout << "no evasion in 10 tries; try another seed\n";
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
}
