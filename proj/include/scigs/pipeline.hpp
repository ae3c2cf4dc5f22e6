#pragma once

// Per-stamp render path: field -> filter -> rasterize, and its exact reverse.

#include <optional>
#include <vector>

#include "scigs/core.hpp"
#include "scigs/field.hpp"
#include "scigs/filter.hpp"
#include "scigs/raster.hpp"

namespace scigs {

struct StampForward {
  TransformedScene transformed;           // empty mu when the field is disabled
  std::vector<SplatPrimitive> prims;
  std::vector<Mat3> cov_unfiltered;       // covariance before the low-pass filter
  std::vector<double> opacity_unfiltered;
  std::vector<Vec3> view_dir;
  RasterState raster;
  RenderedImage image;

  const Vec3& mu(const GaussianScene& scene, std::size_t i) const {
    return transformed.mu.empty() ? scene.gaussians[i].mu : transformed.mu[i];
  }
  const Quat& rot(const GaussianScene& scene, std::size_t i) const {
    return transformed.rot_sum.empty() ? scene.gaussians[i].rot : transformed.rot_sum[i];
  }
};

struct StampOptions {
  const TransformField* field = nullptr;  // nullptr: identity transform
  const SamplingRateTable* rates = nullptr;
  FilterSettings filter;
  RasterSettings raster;
};

inline bool filter_active(const StampOptions& opt, std::size_t i) {
  return opt.filter.enabled && opt.rates && i < opt.rates->size() && opt.rates->max_freq[i].has_value();
}

inline StampForward stamp_forward(const GaussianScene& scene, const Camera& cam, const PoseStamp& stamp,
                                  const StampOptions& opt) {
  scene.validate();
  if (opt.filter.enabled && opt.rates)
    require(opt.rates->size() == scene.size(), "sampling-rate table size does not match the scene");
  StampForward f;
  if (opt.field) f.transformed = field_forward(*opt.field, scene, stamp);
  const std::size_t n = scene.size();
  f.prims.resize(n);
  f.cov_unfiltered.resize(n);
  f.opacity_unfiltered.resize(n);
  f.view_dir.resize(n);
  const Vec3 eye = cam.center();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& g = scene.gaussians[i];
    auto& p = f.prims[i];
    p.mean = f.mu(scene, i);
    f.cov_unfiltered[i] = covariance_from_params(f.rot(scene, i), g.log_scale);
    f.opacity_unfiltered[i] = g.opacity();
    if (filter_active(opt, i)) {
      const auto fg = apply_filter(f.cov_unfiltered[i], f.opacity_unfiltered[i], *opt.rates->max_freq[i],
                                   opt.filter.gamma);
      p.cov = fg.cov;
      p.opacity = fg.opacity;
    } else {
      p.cov = f.cov_unfiltered[i];
      p.opacity = f.opacity_unfiltered[i];
    }
    Vec3 dir = p.mean - eye;
    const double len = dir.norm();
    f.view_dir[i] = len > 0 ? Vec3(dir / len) : Vec3(0, 0, 1);
    p.color = eval_sh(g.sh, f.view_dir[i], scene.sh_degree);
  }
  f.image = rasterize(f.prims, cam, scene.background, opt.raster, &f.raster);
  return f;
}

struct StampBackward {
  SceneGradients scene;   // gradients on base-scene parameters
  FieldGradients field;   // empty when no field
  std::vector<double> mean2d_ndc_norm;  // |dL/d mean2d| in NDC units, 0 when not visible
  std::vector<int> radius;
};

inline StampBackward stamp_backward(const GaussianScene& scene, const Camera& cam, const StampOptions& opt,
                                    const StampForward& f, const Image& upstream) {
  const auto sg = rasterize_backward(f.prims, cam, scene.background, f.raster, f.image, upstream, opt.raster);
  const std::size_t n = scene.size();
  StampBackward out;
  out.scene = SceneGradients(n, scene.sh_degree);
  out.mean2d_ndc_norm.assign(n, 0.0);
  out.radius = sg.radius;
  std::vector<Vec3> d_mu_out(n, Vec3::Zero());
  std::vector<Quat> d_rot_out(n, Quat::Zero());
  for (std::size_t i = 0; i < n; ++i) {
    if (sg.radius[i] == 0) continue;
    const auto& g = scene.gaussians[i];
    Mat3 d_cov = sg.d_cov[i];
    double d_opacity = sg.d_opacity[i];
    if (filter_active(opt, i)) {
      const auto fb = apply_filter_backward(f.cov_unfiltered[i], f.opacity_unfiltered[i], *opt.rates->max_freq[i],
                                            opt.filter.gamma, d_cov, d_opacity);
      d_cov = fb.d_cov;
      d_opacity = fb.d_opacity;
    }
    const auto cg = covariance_backward(f.rot(scene, i), g.log_scale, d_cov);
    d_rot_out[i] = cg.d_rot;
    d_mu_out[i] = sg.d_mean[i];
    out.scene.d_log_scale[i] = cg.d_log_scale;
    const double s = f.opacity_unfiltered[i];
    out.scene.d_opacity_logit[i] = d_opacity * s * (1 - s);
    eval_sh_backward(g.sh, f.view_dir[i], scene.sh_degree, sg.d_color[i], out.scene.d_sh[i]);
    out.scene.mean2d_grad_norm[i] = sg.d_mean2d[i].norm();
    out.mean2d_ndc_norm[i] =
        Vec2(sg.d_mean2d[i].x() * 0.5 * cam.width(), sg.d_mean2d[i].y() * 0.5 * cam.height()).norm();
  }
  if (opt.field) {
    auto fb = field_backward(*opt.field, f.transformed, d_mu_out, d_rot_out);
    out.field = std::move(fb.weights);
    out.scene.d_mu = std::move(fb.d_mu);
    out.scene.d_rot = std::move(d_rot_out);  // rot' = rot + delta_rot: identity Jacobian
  } else {
    out.scene.d_mu = std::move(d_mu_out);
    out.scene.d_rot = std::move(d_rot_out);
  }
  return out;
}

/// Positions of every Gaussian under each stamp (for sampling-rate updates).
inline std::vector<std::vector<Vec3>> stamp_positions(const GaussianScene& scene, const TransformField* field,
                                                      int count) {
  std::vector<std::vector<Vec3>> out;
  for (int s = 0; s < count; ++s) {
    if (field) {
      out.push_back(field_forward(*field, scene, PoseStamp(s, count)).mu);
    } else {
      std::vector<Vec3> mu;
      for (const auto& g : scene.gaussians) mu.push_back(g.mu);
      out.push_back(std::move(mu));
    }
  }
  return out;
}

inline SamplingRateTable update_sampling_rates(const GaussianScene& scene, const TransformField* field, int count,
                                               const Camera& cam, double near_plane = 0.01) {
  const auto pos = stamp_positions(scene, field, count);
  return compute_sampling_rates(pos, cam, near_plane);
}

}  // namespace scigs
