#pragma once

// Training configuration with a flat dotted-key document form:
//
//   { "train.iterations": 3000, "sci.overlap_ratio": 0.25, "filter.gamma": 0.2, ... }
//
// Unknown keys and ill-typed values are rejected; every offending key is listed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <json.hpp>

#include "scigs/error.hpp"
#include "scigs/field.hpp"
#include "scigs/filter.hpp"

namespace scigs {

struct TrainConfig {
  // train
  int iterations = 3000;
  std::uint64_t seed = 0;
  bool deterministic = true;
  int num_points = 300;
  int log_every = 50;
  int checkpoint_every = 0;  // 0: final checkpoint only

  // image / camera
  int width = 64;
  int height = 64;
  double fov_deg = 60.0;
  double camera_distance = 50.0;
  double camera_jitter_deg = 10.0;

  // scene init
  double scene_extent = 25.0;        // half-size of the init box in x, y (world units)
  double scene_depth_extent = 5.0;   // half-size in z
  int sh_degree = 0;
  double background = 0.0;

  // sci
  int compression_ratio = 8;
  double overlap_ratio = 0.25;
  std::uint64_t mask_seed = 1;
  double noise_sigma = 0.0;

  // optim
  double lr_position = 1.6e-4;  // multiplied by scene_extent
  double lr_position_final_factor = 0.01;
  double lr_rotation = 1e-3;
  double lr_scale = 5e-3;
  double lr_opacity = 5e-2;
  double lr_sh = 2.5e-3;
  double lr_field = 1e-3;
  double lambda_dssim = 0.2;

  // densify
  bool densify_enabled = true;
  int densify_interval = 100;
  int densify_start = 500;
  int densify_stop = -1;  // -1: half of iterations
  double grad_threshold = 2e-4;
  double opacity_threshold = 0.005;
  double scale_threshold = 0.01;  // fraction of scene_extent
  double split_factor = 1.6;
  bool opacity_reset = true;
  int opacity_reset_every = 3000;
  int max_gaussians = 0;  // 0: unlimited

  // filter
  FilterSettings filter;

  // field
  bool field_enabled = true;
  FieldConfig field;

  int resolved_densify_stop() const { return densify_stop < 0 ? iterations / 2 : densify_stop; }

  using Slot = std::variant<int*, double*, bool*, std::uint64_t*>;
  struct Entry {
    const char* key;
    Slot slot;
  };

  std::vector<Entry> entries() {
    return {
        {"train.iterations", &iterations},
        {"train.seed", &seed},
        {"train.deterministic", &deterministic},
        {"train.num_points", &num_points},
        {"train.log_every", &log_every},
        {"train.checkpoint_every", &checkpoint_every},
        {"image.width", &width},
        {"image.height", &height},
        {"camera.fov_deg", &fov_deg},
        {"camera.distance", &camera_distance},
        {"camera.jitter_deg", &camera_jitter_deg},
        {"scene.extent", &scene_extent},
        {"scene.depth_extent", &scene_depth_extent},
        {"scene.sh_degree", &sh_degree},
        {"scene.background", &background},
        {"sci.compression_ratio", &compression_ratio},
        {"sci.overlap_ratio", &overlap_ratio},
        {"sci.mask_seed", &mask_seed},
        {"sci.noise_sigma", &noise_sigma},
        {"optim.lr_position", &lr_position},
        {"optim.lr_position_final_factor", &lr_position_final_factor},
        {"optim.lr_rotation", &lr_rotation},
        {"optim.lr_scale", &lr_scale},
        {"optim.lr_opacity", &lr_opacity},
        {"optim.lr_sh", &lr_sh},
        {"optim.lr_field", &lr_field},
        {"optim.lambda_dssim", &lambda_dssim},
        {"densify.enabled", &densify_enabled},
        {"densify.interval", &densify_interval},
        {"densify.start", &densify_start},
        {"densify.stop", &densify_stop},
        {"densify.grad_threshold", &grad_threshold},
        {"densify.opacity_threshold", &opacity_threshold},
        {"densify.scale_threshold", &scale_threshold},
        {"densify.split_factor", &split_factor},
        {"densify.opacity_reset", &opacity_reset},
        {"densify.opacity_reset_every", &opacity_reset_every},
        {"densify.max_gaussians", &max_gaussians},
        {"filter.enabled", &filter.enabled},
        {"filter.gamma", &filter.gamma},
        {"filter.recompute_every", &filter.recompute_every},
        {"field.enabled", &field_enabled},
        {"field.embed_levels", &field.embed_levels},
        {"field.depth", &field.depth},
        {"field.width", &field.width},
        {"field.skip_at", &field.skip_at},
        {"field.detach_base_positions", &field.detach_base_positions},
    };
  }

  /// Desk-scale field (D = 4, W = 64) used by the toy experiments.
  static TrainConfig desk_scale() {
    TrainConfig c;
    c.field.depth = 4;
    c.field.width = 64;
    return c;
  }

  /// Semantic checks; returns one message per problem.
  std::vector<std::string> problems() const {
    std::vector<std::string> p;
    auto check = [&](bool ok, const char* key, const char* what) {
      if (!ok) p.push_back(std::string(key) + ": " + what);
    };
    check(iterations >= 0, "train.iterations", "must be >= 0");
    check(num_points >= 1, "train.num_points", "must be >= 1");
    check(log_every >= 1, "train.log_every", "must be >= 1");
    check(checkpoint_every >= 0, "train.checkpoint_every", "must be >= 0");
    check(width >= 1, "image.width", "must be >= 1");
    check(height >= 1, "image.height", "must be >= 1");
    check(fov_deg > 0 && fov_deg < 180, "camera.fov_deg", "must lie in (0, 180)");
    check(camera_distance > 0, "camera.distance", "must be > 0");
    check(camera_jitter_deg >= 0 && camera_jitter_deg < 90, "camera.jitter_deg", "must lie in [0, 90)");
    check(scene_extent > 0, "scene.extent", "must be > 0");
    check(scene_depth_extent > 0, "scene.depth_extent", "must be > 0");
    check(sh_degree >= 0 && sh_degree <= 3, "scene.sh_degree", "must lie in [0, 3]");
    check(compression_ratio >= 1, "sci.compression_ratio", "must be >= 1");
    check(overlap_ratio >= 0 && overlap_ratio <= 1, "sci.overlap_ratio", "must lie in [0, 1]");
    check(noise_sigma >= 0, "sci.noise_sigma", "must be >= 0");
    check(lambda_dssim >= 0 && lambda_dssim <= 1, "optim.lambda_dssim", "must lie in [0, 1]");
    check(lr_position_final_factor > 0, "optim.lr_position_final_factor", "must be > 0");
    check(split_factor > 1, "densify.split_factor", "must be > 1");
    check(densify_interval >= 1, "densify.interval", "must be >= 1");
    check(opacity_reset_every >= 1, "densify.opacity_reset_every", "must be >= 1");
    if (densify_enabled && iterations > 0)
      check(densify_start < resolved_densify_stop() && resolved_densify_stop() <= iterations, "densify.start",
            "requires densify.start < densify.stop <= train.iterations");
    check(filter.gamma > 0, "filter.gamma", "must be > 0");
    check(filter.recompute_every >= 1, "filter.recompute_every", "must be >= 1");
    check(field.embed_levels >= 1, "field.embed_levels", "must be >= 1");
    check(field.depth >= 1, "field.depth", "must be >= 1");
    check(field.width >= 1, "field.width", "must be >= 1");
    check(field.skip_at >= -1 && field.skip_at < field.depth, "field.skip_at", "must be -1 or in [0, depth)");
    return p;
  }
};

/// Thrown by config parsing; `what()` lists every offending key on its own line.
class ConfigError : public InvalidParameter {
 public:
  explicit ConfigError(std::vector<std::string> issues)
      : InvalidParameter(join(issues)), issues_(std::move(issues)) {}
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid configuration:";
    for (const auto& i : v) s += "\n  " + i;
    return s;
  }
  std::vector<std::string> issues_;
};

inline nlohmann::ordered_json config_to_json(TrainConfig cfg) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& e : cfg.entries())
    std::visit([&](auto* p) { j[e.key] = *p; }, e.slot);
  return j;
}

/// Apply a flat dotted-key object on top of `base`.
inline TrainConfig config_from_json(const nlohmann::json& doc, TrainConfig base = {}) {
  std::vector<std::string> issues;
  if (!doc.is_object()) throw ConfigError({"<root>: expected a flat object of dotted keys"});
  auto entries = base.entries();
  for (const auto& [key, value] : doc.items()) {
    auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return key == e.key; });
    if (it == entries.end()) {
      issues.push_back(key + ": unknown key");
      continue;
    }
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, bool>) {
            if (!value.is_boolean()) return issues.push_back(key + ": expected a boolean");
            *p = value.get<bool>();
          } else if constexpr (std::is_same_v<T, double>) {
            if (!value.is_number()) return issues.push_back(key + ": expected a number");
            *p = value.get<double>();
          } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!value.is_number_unsigned()) return issues.push_back(key + ": expected a non-negative integer");
            *p = value.get<std::uint64_t>();
          } else {
            if (!value.is_number_integer()) return issues.push_back(key + ": expected an integer");
            *p = value.get<int>();
          }
        },
        it->slot);
  }
  if (issues.empty()) issues = base.problems();
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return base;
}

inline TrainConfig parse_config(const std::string& text, TrainConfig base = {}) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({std::string("<document>: ") + e.what()});
  }
  return config_from_json(doc, std::move(base));
}

}  // namespace scigs
