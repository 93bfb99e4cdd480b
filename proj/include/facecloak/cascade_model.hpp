#pragma once

// Haar cascade model types and the parser for the OpenCV cascade XML dialect
// (root element `cascade`, stageType BOOST, featureType HAAR, stump trees).

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "facecloak/errors.hpp"
#include "facecloak/image.hpp"

namespace facecloak {

/// One weighted rectangle of a Haar feature, relative to the window origin.
struct WeightedRect {
  Rect rect;
  double weight = 0.0;
};

struct HaarFeature {
  std::vector<WeightedRect> rects;  // 2..3 entries
  bool tilted = false;
};

/// Single-split stump: output `below` when the normalized feature value is
/// strictly less than `threshold`, `above` otherwise.
struct WeakClassifier {
  int feature_index = 0;
  double threshold = 0.0;
  double below = 0.0;
  double above = 0.0;
};

struct CascadeStage {
  double threshold = 0.0;
  std::vector<WeakClassifier> classifiers;
};

struct CascadeModel {
  int window_w = 0;
  int window_h = 0;
  std::vector<CascadeStage> stages;
  std::vector<HaarFeature> features;

  std::size_t weak_count() const noexcept {
    std::size_t n = 0;
    for (const auto& s : stages) n += s.classifiers.size();
    return n;
  }
};

namespace detail {

using boost::property_tree::ptree;

inline std::vector<double> parse_numbers(const std::string& text, const char* what) {
  std::istringstream in(text);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw MalformedModelError(std::string("non-numeric token in ") + what + ": '" + tok + "'");
    }
    if (used != tok.size()) throw MalformedModelError(std::string("trailing junk in ") + what + ": '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

// Values are rounded through float because that is the storage precision the
// cascade was trained and serialized at.
inline double as_model_real(double v) { return static_cast<double>(static_cast<float>(v)); }

inline const ptree& require_child(const ptree& node, const char* key) {
  auto it = node.find(key);
  if (it == node.not_found()) throw MalformedModelError(std::string("missing <") + key + "> element");
  return it->second;
}

inline int require_int(const ptree& node, const char* key) {
  const auto nums = parse_numbers(require_child(node, key).data(), key);
  if (nums.size() != 1) throw MalformedModelError(std::string("<") + key + "> must hold one integer");
  return static_cast<int>(nums[0]);
}

inline std::string trimmed(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline HaarFeature parse_feature(const ptree& node, int window_w, int window_h, std::size_t idx) {
  HaarFeature f;
  for (const auto& [key, r] : require_child(node, "rects")) {
    if (key != "_") continue;
    const auto nums = parse_numbers(r.data(), "rects");
    if (nums.size() != 5) throw MalformedModelError("feature rect must have 5 numbers (x y w h weight)");
    WeightedRect wr{Rect{static_cast<int>(nums[0]), static_cast<int>(nums[1]), static_cast<int>(nums[2]),
                         static_cast<int>(nums[3])},
                    as_model_real(nums[4])};
    if (!wr.rect.valid() || wr.rect.x < 0 || wr.rect.y < 0 || wr.rect.right() > window_w ||
        wr.rect.bottom() > window_h)
      throw MalformedModelError("feature " + std::to_string(idx) + " has a rect outside the base window");
    f.rects.push_back(wr);
  }
  if (f.rects.size() < 2 || f.rects.size() > 3)
    throw MalformedModelError("feature " + std::to_string(idx) + " must have 2 or 3 rects");
  if (auto t = node.get_optional<std::string>("tilted")) f.tilted = trimmed(*t) != "0" && !trimmed(*t).empty();
  if (f.tilted) throw UnsupportedModelError("tilted Haar features are not supported");
  return f;
}

}  // namespace detail

/// Parses cascade XML text into a fully resolved model.
///
/// Throws LegacyModelError for the old `opencv-haar-classifier` layout,
/// MalformedModelError for anything unparsable, DanglingFeatureIndexError when
/// a stump references a missing feature and UnsupportedModelError for
/// LBP/HOG, non-stump trees or tilted features.
inline CascadeModel parse_cascade(std::string_view model_text) {
  using detail::ptree;
  if (detail::trimmed(std::string(model_text)).empty()) throw MalformedModelError("empty cascade model");
  ptree doc;
  try {
    std::istringstream in{std::string(model_text)};
    boost::property_tree::read_xml(in, doc, boost::property_tree::xml_parser::trim_whitespace);
  } catch (const boost::property_tree::xml_parser_error& e) {
    throw MalformedModelError(std::string("cascade XML does not parse: ") + e.what());
  }

  auto storage = doc.find("opencv_storage");
  if (storage == doc.not_found()) throw MalformedModelError("missing <opencv_storage> root");
  auto cascade_it = storage->second.find("cascade");
  if (cascade_it == storage->second.not_found()) {
    for (const auto& [key, child] : storage->second) {
      const auto type = child.get_optional<std::string>("<xmlattr>.type_id");
      if ((type && *type == "opencv-haar-classifier") || child.find("trees") != child.not_found() ||
          child.find("stages") != child.not_found())
        throw LegacyModelError("legacy '" + key +
                               "' cascade layout; convert it with OpenCV's traincascade or "
                               "CascadeClassifier::convert to the <cascade> dialect");
    }
    throw MalformedModelError("no <cascade> element under <opencv_storage>");
  }
  const ptree& root = cascade_it->second;

  const auto stage_type = detail::trimmed(detail::require_child(root, "stageType").data());
  const auto feature_type = detail::trimmed(detail::require_child(root, "featureType").data());
  if (stage_type != "BOOST") throw UnsupportedModelError("stageType must be BOOST, got " + stage_type);
  if (feature_type != "HAAR") throw UnsupportedModelError("featureType must be HAAR, got " + feature_type);

  CascadeModel model;
  model.window_w = detail::require_int(root, "width");
  model.window_h = detail::require_int(root, "height");
  if (model.window_w < 3 || model.window_h < 3) throw MalformedModelError("window size must be at least 3x3");

  for (const auto& [key, node] : detail::require_child(root, "features")) {
    if (key != "_") continue;
    model.features.push_back(detail::parse_feature(node, model.window_w, model.window_h, model.features.size()));
  }

  for (const auto& [key, node] : detail::require_child(root, "stages")) {
    if (key != "_") continue;
    CascadeStage stage;
    const auto thr = detail::parse_numbers(detail::require_child(node, "stageThreshold").data(), "stageThreshold");
    if (thr.size() != 1) throw MalformedModelError("stageThreshold must hold one number");
    stage.threshold = detail::as_model_real(thr[0]);
    for (const auto& [wkey, wnode] : detail::require_child(node, "weakClassifiers")) {
      if (wkey != "_") continue;
      const auto nodes = detail::parse_numbers(detail::require_child(wnode, "internalNodes").data(), "internalNodes");
      const auto leaves = detail::parse_numbers(detail::require_child(wnode, "leafValues").data(), "leafValues");
      if (nodes.size() != 4 || leaves.size() != 2)
        throw UnsupportedModelError("only single-split stumps are supported");
      WeakClassifier wc;
      wc.feature_index = static_cast<int>(nodes[2]);
      wc.threshold = detail::as_model_real(nodes[3]);
      wc.below = detail::as_model_real(leaves[0]);
      wc.above = detail::as_model_real(leaves[1]);
      if (wc.feature_index < 0 || static_cast<std::size_t>(wc.feature_index) >= model.features.size())
        throw DanglingFeatureIndexError("stage " + std::to_string(model.stages.size()) + " references feature " +
                                        std::to_string(wc.feature_index) + " but only " +
                                        std::to_string(model.features.size()) + " exist");
      stage.classifiers.push_back(wc);
    }
    if (stage.classifiers.empty()) throw MalformedModelError("stage without weak classifiers");
    model.stages.push_back(std::move(stage));
  }
  if (model.stages.empty()) throw MalformedModelError("cascade has no stages");
  return model;
}

inline CascadeModel load_cascade(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) throw FileNotFoundError("no such cascade file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_cascade(ss.str());
}

}  // namespace facecloak
