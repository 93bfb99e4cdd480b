#pragma once

// JSON views of detections, shapes, campaign reports and cloak results.
// Field order is fixed (ordered_json), so equal reports serialize to equal bytes.

#include <string>
#include <variant>

#include <json.hpp>

#include "facecloak/alpha_cloak.hpp"
#include "facecloak/cascade_detector.hpp"
#include "facecloak/disguise_search.hpp"
#include "facecloak/shapes.hpp"

namespace facecloak {

using Json = nlohmann::ordered_json;

inline constexpr int kReportVersion = 1;

namespace detail {

inline Json opt_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json point_json(Point p) { return Json::array({p.x, p.y}); }

}  // namespace detail

inline Json rect_json(const Rect& r) { return {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}}; }

inline Json detection_json(const Detection& d) {
  Json j = rect_json(d.rect);
  j["neighbors"] = d.neighbors;
  j["weight"] = d.weight;
  return j;
}

inline Json detections_json(std::span<const Detection> dets) {
  Json arr = Json::array();
  for (const auto& d : dets) arr.push_back(detection_json(d));
  return arr;
}

inline Json shape_json(const Shape& s) {
  Json j;
  j["kind"] = std::string(shape_kind_name(s.kind()));
  std::visit(detail::overloaded{
                 [&](const RectangleGeometry& g) { j["rect"] = rect_json(g.rect); },
                 [&](const CircleGeometry& g) {
                   j["center"] = detail::point_json(g.center);
                   j["radius"] = g.radius;
                 },
                 [&](const TriangleGeometry& g) {
                   j["vertices"] = Json::array(
                       {detail::point_json(g.vertices[0]), detail::point_json(g.vertices[1]),
                        detail::point_json(g.vertices[2])});
                 },
                 [&](const LineGeometry& g) {
                   j["a"] = detail::point_json(g.a);
                   j["b"] = detail::point_json(g.b);
                 },
             },
             s.geometry);
  j["size"] = s.size;
  j["color"] = Json::array({s.color.r, s.color.g, s.color.b});
  j["opacity"] = s.opacity;
  j["thickness"] = s.thickness;
  j["filled"] = s.filled;
  j["clip"] = rect_json(s.clip);
  return j;
}

inline Json shapes_json(std::span<const Shape> shapes) {
  Json arr = Json::array();
  for (const auto& s : shapes) arr.push_back(shape_json(s));
  return arr;
}

inline Json detect_params_json(const DetectParams& p) {
  return {{"scale_factor", p.scale_factor},
          {"min_neighbors", p.min_neighbors},
          {"min_size", p.min_size},
          {"max_size", p.max_size},
          {"group_eps", p.group_eps}};
}

inline Json perturbation_json(const PerturbationConfig& c) {
  return {{"shapes_per_iteration", c.shapes_per_iteration},
          {"size_range", Json::array({c.size_range.lo, c.size_range.hi})},
          {"thickness_range", Json::array({c.thickness_range.lo, c.thickness_range.hi})},
          {"opacity_range", Json::array({c.opacity_range.lo, c.opacity_range.hi})},
          {"color_mode", c.color_mode == ColorMode::GrayscaleTones ? "grayscale" : "rgb"}};
}

inline Json campaign_config_json(const CampaignConfig& c) {
  return {{"iterations", c.iterations},
          {"seed", c.seed},
          {"success_iou", c.success_iou},
          {"perturbation", perturbation_json(c.perturbation)},
          {"detector", detect_params_json(c.detector)}};
}

inline Json heatmap_json(const Heatmap& h) {
  return {{"width", h.width}, {"height", h.height}, {"counts", h.counts}};
}

inline Json campaign_report_json(const CampaignReport& rep) {
  Json j;
  j["report_version"] = kReportVersion;
  j["kind"] = "campaign";
  j["image"] = {{"width", rep.image_width}, {"height", rep.image_height}};
  j["config"] = campaign_config_json(rep.config);
  j["baseline"] = detection_json(rep.baseline);
  j["evading_trials"] = rep.evading_trials;
  j["evasion_rate"] = rep.evasion_rate;
  Json regions = Json::array();
  for (const auto& r : rep.region_stats)
    regions.push_back(
        {{"name", r.name}, {"evading", detail::opt_number(r.evading)}, {"non_evading", detail::opt_number(r.non_evading)}});
  j["region_stats"] = std::move(regions);
  j["key_region_contrast"] = {{"dense", detail::opt_number(rep.contrast.dense_density)},
                              {"sparse", detail::opt_number(rep.contrast.sparse_density)},
                              {"difference", detail::opt_number(rep.contrast.difference)},
                              {"sign", rep.contrast.sign}};
  j["heatmaps"] = {{"success", heatmap_json(rep.success_heatmap)}, {"failure", heatmap_json(rep.failure_heatmap)}};
  Json trials = Json::array();
  for (const auto& t : rep.trials)
    trials.push_back({{"index", t.index},
                      {"evaded", t.evaded},
                      {"detections", detections_json(t.post_detections)},
                      {"shapes", shapes_json(t.shapes)}});
  j["trials"] = std::move(trials);
  return j;
}

inline Json cloak_config_json(const CloakConfig& c) {
  return {{"steps", c.steps},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"background_scale", c.background_scale},
          {"white_level", c.white_level},
          {"log_interval", c.log_interval},
          {"working_size", c.working_size}};
}

inline Json loss_trace_json(std::span<const LossSample> trace) {
  Json arr = Json::array();
  for (const auto& s : trace) arr.push_back({{"step", s.step}, {"mse", s.mse}});
  return arr;
}

/// Canonical serialization: two-space indent, trailing newline.
inline std::string dump_report(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace facecloak
