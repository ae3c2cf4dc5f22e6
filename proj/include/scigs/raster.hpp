#pragma once

// Tile-based differentiable rasterizer for 3D Gaussians.
//
// The forward pass projects each primitive with the EWA affine approximation
// (cov2d = J W Sigma W^T J^T + dilation), bins it into 16x16 tiles by its
// 3-sigma screen box, and front-to-back alpha blends in ascending depth.
// The backward pass walks each pixel's contributors in reverse, recovering
// transmittance by division, and chains to world-space means and covariances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "scigs/core.hpp"
#include "scigs/image.hpp"

namespace scigs {

struct RasterSettings {
  double dilation = 0.3;          // px^2 added to the cov2d diagonal
  double alpha_max = 0.99;
  double alpha_min = 1.0 / 255.0;
  double min_transmittance = 1e-4;
  double near_plane = 0.01;
  double guard_band = 1.3;        // cull boxes wholly outside guard_band x image extent
  int tile_size = 16;
};

/// A renderable primitive with activations already applied.
struct SplatPrimitive {
  Vec3 mean = Vec3::Zero();
  Mat3 cov = Mat3::Identity();
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
};

struct Projected2DGaussian {
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity();
  Vec3 conic = Vec3::Zero();  // (a, b, c) of the inverse [[a, b], [b, c]]
  double depth = 0.0;
  Vec3 color = Vec3::Zero();
  double alpha_base = 0.0;
  std::size_t source_index = 0;
  int radius = 0;
};

struct RenderedImage {
  Image pixels;                // H x W x 3
  Image final_transmittance;   // H x W x 1
};

/// Forward bookkeeping reused by the backward pass.
struct RasterState {
  std::vector<Projected2DGaussian> projected;
  std::vector<std::vector<std::uint32_t>> tile_lists;  // indices into `projected`, depth ordered
  std::vector<std::uint32_t> n_scanned;                 // per pixel: list entries up to last contributor
  int tiles_x = 0;
  int tiles_y = 0;
};

namespace detail {

struct ProjectionCore {
  Vec3 t;        // camera-frame mean
  Eigen::Matrix<double, 2, 3> jac;
  Eigen::Matrix<double, 2, 3> tw;  // J * W
  Mat2 cov2d;
};

inline ProjectionCore project_core(const Vec3& mean, const Mat3& cov, const Camera& cam, double dilation) {
  ProjectionCore p;
  p.t = cam.to_camera(mean);
  const double tz = p.t.z();
  const double inv = 1.0 / tz;
  p.jac << cam.fx() * inv, 0.0, -cam.fx() * p.t.x() * inv * inv,  //
      0.0, cam.fy() * inv, -cam.fy() * p.t.y() * inv * inv;
  p.tw = p.jac * cam.rotation();
  p.cov2d = p.tw * cov * p.tw.transpose();
  p.cov2d(0, 0) += dilation;
  p.cov2d(1, 1) += dilation;
  return p;
}

}  // namespace detail

/// Project primitives into screen space. Culled primitives are omitted; the
/// result keeps `source_index` pointing back into `prims`.
inline std::vector<Projected2DGaussian> project(std::span<const SplatPrimitive> prims, const Camera& cam,
                                                const RasterSettings& settings = {}) {
  std::vector<Projected2DGaussian> out;
  out.reserve(prims.size());
  const double w = cam.width(), h = cam.height();
  const double gx = 0.5 * (settings.guard_band - 1.0) * w;
  const double gy = 0.5 * (settings.guard_band - 1.0) * h;
  for (std::size_t i = 0; i < prims.size(); ++i) {
    const auto& p = prims[i];
    const Vec3 t = cam.to_camera(p.mean);
    if (!(t.z() > settings.near_plane)) continue;
    const auto core = detail::project_core(p.mean, p.cov, cam, settings.dilation);
    const double det = core.cov2d.determinant();
    if (!(det > 0.0)) continue;
    Projected2DGaussian g;
    g.mean2d = Vec2(cam.fx() * t.x() / t.z() + cam.cx(), cam.fy() * t.y() / t.z() + cam.cy());
    g.cov2d = core.cov2d;
    g.conic = Vec3(core.cov2d(1, 1) / det, -core.cov2d(0, 1) / det, core.cov2d(0, 0) / det);
    const double mid = 0.5 * (core.cov2d(0, 0) + core.cov2d(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.1, mid * mid - det));
    g.radius = static_cast<int>(std::ceil(3.0 * std::sqrt(lambda_max)));
    if (g.mean2d.x() + g.radius < -gx || g.mean2d.x() - g.radius > w - 1 + gx || g.mean2d.y() + g.radius < -gy ||
        g.mean2d.y() - g.radius > h - 1 + gy)
      continue;
    g.depth = t.z();
    g.color = p.color;
    g.alpha_base = p.opacity;
    g.source_index = i;
    out.push_back(g);
  }
  return out;
}

/// Stable ascending order by depth; ties broken by source_index.
inline std::vector<std::size_t> depth_sort(std::span<const Projected2DGaussian> projected) {
  std::vector<std::size_t> order(projected.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (projected[a].depth != projected[b].depth) return projected[a].depth < projected[b].depth;
    return projected[a].source_index < projected[b].source_index;
  });
  return order;
}

inline RenderedImage rasterize(std::span<const SplatPrimitive> prims, const Camera& cam, const Vec3& background,
                               const RasterSettings& settings, RasterState* state_out = nullptr) {
  const int width = cam.width(), height = cam.height(), ts = settings.tile_size;
  RasterState state;
  state.projected = project(prims, cam, settings);
  state.tiles_x = (width + ts - 1) / ts;
  state.tiles_y = (height + ts - 1) / ts;
  state.tile_lists.assign(static_cast<std::size_t>(state.tiles_x) * state.tiles_y, {});
  for (std::size_t idx : depth_sort(state.projected)) {
    const auto& g = state.projected[idx];
    const int x0 = std::max(0, static_cast<int>(std::floor((g.mean2d.x() - g.radius) / ts)));
    const int x1 = std::min(state.tiles_x - 1, static_cast<int>(std::floor((g.mean2d.x() + g.radius) / ts)));
    const int y0 = std::max(0, static_cast<int>(std::floor((g.mean2d.y() - g.radius) / ts)));
    const int y1 = std::min(state.tiles_y - 1, static_cast<int>(std::floor((g.mean2d.y() + g.radius) / ts)));
    for (int ty = y0; ty <= y1; ++ty)
      for (int tx = x0; tx <= x1; ++tx)
        state.tile_lists[static_cast<std::size_t>(ty) * state.tiles_x + tx].push_back(static_cast<std::uint32_t>(idx));
  }

  RenderedImage out{Image(height, width, 3), Image(height, width, 1, 1.0)};
  state.n_scanned.assign(static_cast<std::size_t>(width) * height, 0);
  for (int ty = 0; ty < state.tiles_y; ++ty) {
    for (int tx = 0; tx < state.tiles_x; ++tx) {
      const auto& list = state.tile_lists[static_cast<std::size_t>(ty) * state.tiles_x + tx];
      for (int py = ty * ts; py < std::min(height, (ty + 1) * ts); ++py) {
        for (int px = tx * ts; px < std::min(width, (tx + 1) * ts); ++px) {
          double transmittance = 1.0;
          Vec3 color = Vec3::Zero();
          std::uint32_t scanned = 0;
          for (std::uint32_t k = 0; k < list.size(); ++k) {
            const auto& g = state.projected[list[k]];
            const double dx = px - g.mean2d.x(), dy = py - g.mean2d.y();
            const double power = -0.5 * (g.conic[0] * dx * dx + g.conic[2] * dy * dy) - g.conic[1] * dx * dy;
            if (power > 0.0) continue;
            const double alpha = std::min(settings.alpha_max, g.alpha_base * std::exp(power));
            if (alpha < settings.alpha_min) continue;
            const double next_t = transmittance * (1.0 - alpha);
            if (next_t < settings.min_transmittance) break;
            color += g.color * (alpha * transmittance);
            transmittance = next_t;
            scanned = k + 1;
          }
          const std::size_t pix = static_cast<std::size_t>(py) * width + px;
          state.n_scanned[pix] = scanned;
          out.final_transmittance.data[pix] = transmittance;
          for (int c = 0; c < 3; ++c) out.pixels.at(py, px, c) = color[c] + transmittance * background[c];
        }
      }
    }
  }
  if (state_out) *state_out = std::move(state);
  return out;
}

/// Gradients with respect to the rasterizer's primitive inputs.
struct SplatGradients {
  std::vector<Vec3> d_mean;
  std::vector<Mat3> d_cov;
  std::vector<double> d_opacity;
  std::vector<Vec3> d_color;
  std::vector<Vec2> d_mean2d;  // screen-space, pixels
  std::vector<int> radius;     // 0 when culled
  Vec3 d_background = Vec3::Zero();

  explicit SplatGradients(std::size_t n = 0)
      : d_mean(n, Vec3::Zero()), d_cov(n, Mat3::Zero()), d_opacity(n, 0.0), d_color(n, Vec3::Zero()),
        d_mean2d(n, Vec2::Zero()), radius(n, 0) {}
};

inline SplatGradients rasterize_backward(std::span<const SplatPrimitive> prims, const Camera& cam,
                                         const Vec3& background, const RasterState& state, const RenderedImage& fwd,
                                         const Image& upstream, const RasterSettings& settings) {
  const int width = cam.width(), height = cam.height(), ts = settings.tile_size;
  require(upstream.height == height && upstream.width == width && upstream.channels == 3,
          "upstream gradient shape does not match the camera image");
  const std::size_t np = state.projected.size();
  std::vector<Vec2> d_mean2d(np, Vec2::Zero());
  std::vector<Vec3> d_conic(np, Vec3::Zero());
  std::vector<double> d_alpha_base(np, 0.0);
  std::vector<Vec3> d_color(np, Vec3::Zero());
  SplatGradients out(prims.size());

  for (int ty = 0; ty < state.tiles_y; ++ty) {
    for (int tx = 0; tx < state.tiles_x; ++tx) {
      const auto& list = state.tile_lists[static_cast<std::size_t>(ty) * state.tiles_x + tx];
      for (int py = ty * ts; py < std::min(height, (ty + 1) * ts); ++py) {
        for (int px = tx * ts; px < std::min(width, (tx + 1) * ts); ++px) {
          const std::size_t pix = static_cast<std::size_t>(py) * width + px;
          const Vec3 up(upstream.at(py, px, 0), upstream.at(py, px, 1), upstream.at(py, px, 2));
          const double t_final = fwd.final_transmittance.data[pix];
          out.d_background += t_final * up;
          if (up.isZero(0.0)) continue;
          double transmittance = t_final;
          Vec3 behind = t_final * background;  // color contributed by everything after the current entry
          for (std::uint32_t k = state.n_scanned[pix]; k-- > 0;) {
            const std::uint32_t idx = list[k];
            const auto& g = state.projected[idx];
            const double dx = px - g.mean2d.x(), dy = py - g.mean2d.y();
            const double power = -0.5 * (g.conic[0] * dx * dx + g.conic[2] * dy * dy) - g.conic[1] * dx * dy;
            if (power > 0.0) continue;
            const double gauss = std::exp(power);
            const double raw_alpha = g.alpha_base * gauss;
            const double alpha = std::min(settings.alpha_max, raw_alpha);
            if (alpha < settings.alpha_min) continue;
            const double t_i = transmittance / (1.0 - alpha);
            const double weight = alpha * t_i;
            d_color[idx] += weight * up;
            const double d_alpha = up.dot(t_i * g.color - behind / (1.0 - alpha));
            behind += weight * g.color;
            transmittance = t_i;
            if (raw_alpha > settings.alpha_max) continue;
            d_alpha_base[idx] += d_alpha * gauss;
            const double d_power = d_alpha * alpha;
            // power = -0.5 (a dx^2 + c dy^2) - b dx dy, d = p - mean2d
            d_conic[idx] += Vec3(-0.5 * dx * dx * d_power, -dx * dy * d_power, -0.5 * dy * dy * d_power);
            d_mean2d[idx] += d_power * Vec2(g.conic[0] * dx + g.conic[1] * dy, g.conic[1] * dx + g.conic[2] * dy);
          }
        }
      }
    }
  }

  for (std::size_t k = 0; k < np; ++k) {
    const auto& g = state.projected[k];
    const std::size_t i = g.source_index;
    const auto& p = prims[i];
    out.radius[i] = g.radius;
    out.d_opacity[i] = d_alpha_base[k];
    out.d_color[i] = d_color[k];
    out.d_mean2d[i] = d_mean2d[k];

    const auto core = detail::project_core(p.mean, p.cov, cam, settings.dilation);
    // Conic = inverse(cov2d); b is stored once but appears twice in the matrix.
    Mat2 conic;
    conic << g.conic[0], g.conic[1], g.conic[1], g.conic[2];
    Mat2 d_conic_full;
    d_conic_full << d_conic[k][0], 0.5 * d_conic[k][1], 0.5 * d_conic[k][1], d_conic[k][2];
    const Mat2 d_cov2d = -conic * d_conic_full * conic;

    out.d_cov[i] = core.tw.transpose() * d_cov2d * core.tw;
    const Eigen::Matrix<double, 2, 3> d_tw = 2.0 * d_cov2d * core.tw * p.cov;
    const Eigen::Matrix<double, 2, 3> d_jac = d_tw * cam.rotation().transpose();

    const Vec3& t = core.t;
    const double iz = 1.0 / t.z(), iz2 = iz * iz, iz3 = iz2 * iz;
    const double fx = cam.fx(), fy = cam.fy();
    Vec3 d_t;
    d_t.x() = fx * iz * d_mean2d[k].x() - fx * iz2 * d_jac(0, 2);
    d_t.y() = fy * iz * d_mean2d[k].y() - fy * iz2 * d_jac(1, 2);
    d_t.z() = -(fx * t.x() * d_mean2d[k].x() + fy * t.y() * d_mean2d[k].y()) * iz2 - fx * iz2 * d_jac(0, 0) -
              fy * iz2 * d_jac(1, 1) + 2 * fx * t.x() * iz3 * d_jac(0, 2) + 2 * fy * t.y() * iz3 * d_jac(1, 2);
    out.d_mean[i] = cam.rotation().transpose() * d_t;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scene-level entry points (parameters -> activations -> rasterizer).

inline SplatPrimitive make_primitive(const Gaussian& g, int sh_degree, const Camera& cam) {
  SplatPrimitive p;
  p.mean = g.mu;
  p.cov = covariance_from_params(g.rot, g.log_scale);
  p.opacity = g.opacity();
  Vec3 dir = g.mu - cam.center();
  const double n = dir.norm();
  dir = n > 0 ? Vec3(dir / n) : Vec3(0, 0, 1);
  p.color = eval_sh(g.sh, dir, sh_degree);
  return p;
}

inline std::vector<SplatPrimitive> scene_primitives(const GaussianScene& scene, const Camera& cam) {
  scene.validate();
  std::vector<SplatPrimitive> prims;
  prims.reserve(scene.size());
  for (const auto& g : scene.gaussians) prims.push_back(make_primitive(g, scene.sh_degree, cam));
  return prims;
}

inline std::vector<Projected2DGaussian> project(const GaussianScene& scene, const Camera& cam,
                                                const RasterSettings& settings = {}) {
  const auto prims = scene_primitives(scene, cam);
  return project(std::span<const SplatPrimitive>(prims), cam, settings);
}

inline RenderedImage render(const GaussianScene& scene, const Camera& cam, const RasterSettings& settings = {}) {
  const auto prims = scene_primitives(scene, cam);
  return rasterize(prims, cam, scene.background, settings);
}

/// Per-parameter gradients for a GaussianScene.
struct SceneGradients {
  std::vector<Vec3> d_mu;
  std::vector<Quat> d_rot;
  std::vector<Vec3> d_log_scale;
  std::vector<double> d_opacity_logit;
  std::vector<std::vector<Vec3>> d_sh;
  std::vector<double> mean2d_grad_norm;  // |dL/d mean2d| in pixels

  SceneGradients() = default;
  SceneGradients(std::size_t n, int sh_degree)
      : d_mu(n, Vec3::Zero()), d_rot(n, Quat::Zero()), d_log_scale(n, Vec3::Zero()), d_opacity_logit(n, 0.0),
        d_sh(n, std::vector<Vec3>(static_cast<std::size_t>(sh_coeff_count(sh_degree)), Vec3::Zero())),
        mean2d_grad_norm(n, 0.0) {}
};

/// Chain rasterizer gradients back to scene parameters (mu, rot, log_scale,
/// opacity_logit, sh). `d_mean`/`d_cov`/`d_opacity`/`d_color` are the
/// gradients with respect to the primitive built by make_primitive.
inline void accumulate_parameter_gradients(const GaussianScene& scene, const Camera& cam, const SplatGradients& sg,
                                           SceneGradients& out) {
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (sg.radius[i] == 0) continue;
    const auto& g = scene.gaussians[i];
    out.d_mu[i] += sg.d_mean[i];
    const auto cg = covariance_backward(g.rot, g.log_scale, sg.d_cov[i]);
    out.d_rot[i] += cg.d_rot;
    out.d_log_scale[i] += cg.d_log_scale;
    const double s = g.opacity();
    out.d_opacity_logit[i] += sg.d_opacity[i] * s * (1 - s);
    Vec3 dir = g.mu - cam.center();
    const double n = dir.norm();
    dir = n > 0 ? Vec3(dir / n) : Vec3(0, 0, 1);
    eval_sh_backward(g.sh, dir, scene.sh_degree, sg.d_color[i], out.d_sh[i]);
    out.mean2d_grad_norm[i] += sg.d_mean2d[i].norm();
  }
}

inline SceneGradients render_backward(const GaussianScene& scene, const Camera& cam, const Image& upstream,
                                      const RasterSettings& settings = {}) {
  require(upstream.height == cam.height() && upstream.width == cam.width() && upstream.channels == 3,
          "upstream gradient shape does not match the camera image");
  const auto prims = scene_primitives(scene, cam);
  RasterState state;
  const auto fwd = rasterize(prims, cam, scene.background, settings, &state);
  const auto sg = rasterize_backward(prims, cam, scene.background, state, fwd, upstream, settings);
  SceneGradients out(scene.size(), scene.sh_degree);
  accumulate_parameter_gradients(scene, cam, sg, out);
  return out;
}

}  // namespace scigs
