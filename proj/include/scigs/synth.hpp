#pragma once

// Procedural ground-truth sequences rendered from a reference Gaussian scene.
//
//   static-blobs  a handful of soft colored blobs; all B frames identical
//   moving-blob   cyan/blue static blobs plus one red blob translating linearly
//   rotating-bar  static blobs plus an elongated red Gaussian spinning about the view axis

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "scigs/core.hpp"
#include "scigs/raster.hpp"

namespace scigs {

struct LinearMotion {
  Vec2 start_px;  // centroid of the moving object in frame 0
  Vec2 step_px;   // displacement per frame
};

struct Dataset {
  std::string preset;
  std::vector<Image> frames;
  Camera camera;
  std::optional<LinearMotion> motion;
};

inline const std::vector<std::string>& dataset_presets() {
  static const std::vector<std::string> p = {"static-blobs", "moving-blob", "rotating-bar"};
  return p;
}

inline Camera dataset_camera(int width, int height, double distance = 50.0, double fov_deg = 60.0) {
  const double focal = 0.5 * width / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
  return Camera::look_at(Vec3(0, 0, -distance), Vec3::Zero(), Vec3(0, -1, 0), focal, width, height);
}

namespace detail {

/// World point on the plane z = depth_offset that projects to pixel (u, v).
inline Vec3 unproject(const Camera& cam, double u, double v, double z_world) {
  const double depth = z_world - cam.center().z();
  return Vec3((u - cam.cx()) / cam.fx() * depth, (v - cam.cy()) / cam.fy() * depth, z_world);
}

inline Gaussian blob(const Vec3& mu, double sigma_world, const Vec3& color, double opacity) {
  Gaussian g;
  g.mu = mu;
  g.log_scale = Vec3::Constant(std::log(sigma_world));
  g.opacity_logit = logit(opacity);
  g.sh = {sh_dc_from_color(color)};
  return g;
}

inline void add_static_blobs(GaussianScene& scene, const Camera& cam, std::mt19937_64& rng, int count,
                             bool allow_red) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double px_to_world = -cam.center().z() / cam.fx();
  for (int k = 0; k < count; ++k) {
    const double px = cam.width() * (0.15 + 0.7 * u(rng));
    const double py = cam.height() * (0.15 + 0.7 * u(rng));
    const double sigma_px = 2.5 + 4.0 * u(rng);
    const Vec3 color = allow_red ? Vec3(0.2 + 0.8 * u(rng), 0.2 + 0.8 * u(rng), 0.2 + 0.8 * u(rng))
                                 : Vec3(0.0, 0.3 + 0.7 * u(rng), 0.3 + 0.7 * u(rng));
    scene.gaussians.push_back(
        blob(unproject(cam, px, py, 2.0 * k), sigma_px * px_to_world, color, 0.7 + 0.25 * u(rng)));
  }
}

}  // namespace detail

/// Render `count` ground-truth frames of the named preset.
inline Dataset synthesize_dataset(const std::string& preset, std::uint64_t seed, int count, int width, int height) {
  require(count >= 1, "dataset needs at least one frame");
  const Camera cam = dataset_camera(width, height);
  std::mt19937_64 rng(seed);
  GaussianScene base;
  base.sh_degree = 0;
  base.background = Vec3::Zero();
  Dataset ds{preset, {}, cam, std::nullopt};
  const double px_to_world = -cam.center().z() / cam.fx();

  if (preset == "static-blobs") {
    detail::add_static_blobs(base, cam, rng, 6, true);
    const auto img = render(base, cam).pixels;
    ds.frames.assign(static_cast<std::size_t>(count), img);
    return ds;
  }
  if (preset == "moving-blob") {
    detail::add_static_blobs(base, cam, rng, 4, false);
    const Vec2 start(0.25 * width, 0.375 * height);
    const Vec2 step = count > 1 ? Vec2(0.4 * width / (count - 1), 0.12 * height / (count - 1)) : Vec2(0, 0);
    ds.motion = LinearMotion{start, step};
    for (int i = 0; i < count; ++i) {
      GaussianScene s = base;
      const Vec2 c = start + i * step;
      // In front of the static blobs so it is never occluded.
      s.gaussians.push_back(
          detail::blob(detail::unproject(cam, c.x(), c.y(), -10.0), 3.0 * px_to_world, Vec3(1.0, 0.1, 0.1), 0.95));
      ds.frames.push_back(render(s, cam).pixels);
    }
    return ds;
  }
  if (preset == "rotating-bar") {
    detail::add_static_blobs(base, cam, rng, 3, false);
    for (int i = 0; i < count; ++i) {
      GaussianScene s = base;
      Gaussian bar = detail::blob(detail::unproject(cam, 0.5 * width, 0.5 * height, -10.0), 1.0, Vec3(1.0, 0.2, 0.1),
                                  0.9);
      bar.log_scale = Vec3(std::log(10.0 * px_to_world), std::log(1.5 * px_to_world), std::log(1.5 * px_to_world));
      const double angle = 0.5 * std::numbers::pi * i / std::max(1, count);
      bar.rot = Quat(std::cos(0.5 * angle), 0, 0, std::sin(0.5 * angle));
      s.gaussians.push_back(bar);
      ds.frames.push_back(render(s, cam).pixels);
    }
    return ds;
  }
  throw InvalidParameter("unknown dataset preset '" + preset + "' (expected static-blobs, moving-blob or rotating-bar)");
}

/// Intensity-weighted centroid of the "red excess" max(0, R - max(G, B)).
/// Returns nullopt when the image has no red excess.
inline std::optional<Vec2> red_centroid(const Image& img) {
  double sum = 0.0, sx = 0.0, sy = 0.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double w = std::max(0.0, img.at(y, x, 0) - std::max(img.at(y, x, 1), img.at(y, x, 2)));
      sum += w;
      sx += w * x;
      sy += w * y;
    }
  if (sum <= 0.0) return std::nullopt;
  return Vec2(sx / sum, sy / sum);
}

}  // namespace scigs
