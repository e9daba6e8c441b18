#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace splatam {

/// Per-parameter-group step sizes for the adaptive-moment optimizer.
struct LearningRates {
  double pose_translation = 2e-3;
  double pose_rotation = 4e-4;
  double center = 5e-4;
  double color = 2.5e-3;
  double opacity_logit = 1e-1;
  double log_radius = 5e-3;
};

struct SlamConfig {
  int tracking_iters = 40;
  int mapping_iters = 60;
  int keyframe_every = 5;         // save each n-th frame as a keyframe
  int window_size = 10;           // k frames optimized per map update
  double sil_thresh_tracking = 0.99;
  double sil_thresh_densify = 0.5;
  double color_weight = 0.5;
  double mde_factor = 50.0;
  double ssim_weight = 0.2;
  double prune_opacity_min = 0.005;
  double prune_radius_max_px = 60.0;
  LearningRates learning_rates;

  // Pipeline switches used by the tracking ablation experiments.
  bool velocity_propagation = true;
  bool tracking_use_silhouette = true;
  bool tracking_use_color = true;

  void validate() const {
    if (tracking_iters < 1 || mapping_iters < 1 || keyframe_every < 1 || window_size < 1)
      throw std::invalid_argument("config: iteration/window counts must be >= 1");
    if (sil_thresh_tracking < 0.0 || sil_thresh_tracking > 1.0 ||
        sil_thresh_densify < 0.0 || sil_thresh_densify > 1.0)
      throw std::invalid_argument("config: silhouette thresholds must be in [0,1]");
    if (color_weight < 0.0 || mde_factor <= 0.0 || ssim_weight < 0.0)
      throw std::invalid_argument("config: loss weights out of range");
    if (prune_opacity_min < 0.0 || prune_opacity_min > 1.0 || prune_radius_max_px <= 0.0)
      throw std::invalid_argument("config: pruning thresholds out of range");
  }
};

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void check_known_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                             const std::string& where) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known)
      if (item.key() == k) { ok = true; break; }
    if (!ok) throw std::invalid_argument("config: unknown key \"" + item.key() + "\" in " + where);
  }
}

}  // namespace detail

inline nlohmann::json to_json(const SlamConfig& c) {
  return nlohmann::json{
      {"tracking_iters", c.tracking_iters},
      {"mapping_iters", c.mapping_iters},
      {"keyframe_every", c.keyframe_every},
      {"window_size", c.window_size},
      {"sil_thresh_tracking", c.sil_thresh_tracking},
      {"sil_thresh_densify", c.sil_thresh_densify},
      {"color_weight", c.color_weight},
      {"mde_factor", c.mde_factor},
      {"ssim_weight", c.ssim_weight},
      {"prune_opacity_min", c.prune_opacity_min},
      {"prune_radius_max_px", c.prune_radius_max_px},
      {"learning_rates",
       {{"pose_translation", c.learning_rates.pose_translation},
        {"pose_rotation", c.learning_rates.pose_rotation},
        {"center", c.learning_rates.center},
        {"color", c.learning_rates.color},
        {"opacity_logit", c.learning_rates.opacity_logit},
        {"log_radius", c.learning_rates.log_radius}}},
      {"velocity_propagation", c.velocity_propagation},
      {"tracking_use_silhouette", c.tracking_use_silhouette},
      {"tracking_use_color", c.tracking_use_color}};
}

/// Parses a config document. Unknown keys are an error so that typos fail
/// fast instead of silently falling back to defaults.
inline SlamConfig config_from_json(const nlohmann::json& j) {
  detail::check_known_keys(
      j,
      {"tracking_iters", "mapping_iters", "keyframe_every", "window_size",
       "sil_thresh_tracking", "sil_thresh_densify", "color_weight", "mde_factor",
       "ssim_weight", "prune_opacity_min", "prune_radius_max_px", "learning_rates",
       "velocity_propagation", "tracking_use_silhouette", "tracking_use_color"},
      "config root");
  SlamConfig c;
  detail::read_field(j, "tracking_iters", c.tracking_iters);
  detail::read_field(j, "mapping_iters", c.mapping_iters);
  detail::read_field(j, "keyframe_every", c.keyframe_every);
  detail::read_field(j, "window_size", c.window_size);
  detail::read_field(j, "sil_thresh_tracking", c.sil_thresh_tracking);
  detail::read_field(j, "sil_thresh_densify", c.sil_thresh_densify);
  detail::read_field(j, "color_weight", c.color_weight);
  detail::read_field(j, "mde_factor", c.mde_factor);
  detail::read_field(j, "ssim_weight", c.ssim_weight);
  detail::read_field(j, "prune_opacity_min", c.prune_opacity_min);
  detail::read_field(j, "prune_radius_max_px", c.prune_radius_max_px);
  if (j.contains("learning_rates")) {
    const auto& lr = j.at("learning_rates");
    detail::check_known_keys(lr,
                             {"pose_translation", "pose_rotation", "center", "color",
                              "opacity_logit", "log_radius"},
                             "learning_rates");
    detail::read_field(lr, "pose_translation", c.learning_rates.pose_translation);
    detail::read_field(lr, "pose_rotation", c.learning_rates.pose_rotation);
    detail::read_field(lr, "center", c.learning_rates.center);
    detail::read_field(lr, "color", c.learning_rates.color);
    detail::read_field(lr, "opacity_logit", c.learning_rates.opacity_logit);
    detail::read_field(lr, "log_radius", c.learning_rates.log_radius);
  }
  detail::read_field(j, "velocity_propagation", c.velocity_propagation);
  detail::read_field(j, "tracking_use_silhouette", c.tracking_use_silhouette);
  detail::read_field(j, "tracking_use_color", c.tracking_use_color);
  c.validate();
  return c;
}

inline SlamConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: failed to parse " + path + ": " + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const SlamConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  out << to_json(c).dump(2) << "\n";
}

}  // namespace splatam
