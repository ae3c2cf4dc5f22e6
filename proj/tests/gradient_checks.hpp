#pragma once

// Finite-difference gradient suites shared by the unit tests and the
// acceptance runner. Each returns a report instead of asserting so callers
// can decide how to present it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "scigs/scigs.hpp"

namespace scigs::checks {

struct GradientReport {
  std::size_t checked = 0;
  std::size_t failed = 0;
  std::size_t cases = 0;
  std::size_t parameters_per_case_max = 0;
  double worst_relative = 0.0;  // over partials larger than the absolute floor
  double seconds = 0.0;
  std::string first_failure;

  bool ok() const { return checked > 0 && failed == 0; }

  void record(double analytic, double numeric, double rel_tol, double abs_floor, const std::string& what) {
    ++checked;
    const double diff = std::abs(analytic - numeric);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    const double rel = scale > 0.0 ? diff / scale : 0.0;
    if (scale > abs_floor) worst_relative = std::max(worst_relative, rel);
    if (diff <= abs_floor || rel < rel_tol) return;
    ++failed;
    if (first_failure.empty()) {
      std::ostringstream s;
      s << what << ": analytic " << analytic << " numeric " << numeric << " rel " << rel;
      first_failure = s.str();
    }
  }
};

inline double central_difference(double* x, double h, const std::function<double()>& f) {
  const double saved = *x;
  *x = saved + h;
  const double fp = f();
  *x = saved - h;
  const double fm = f();
  *x = saved;
  return (fp - fm) / (2.0 * h);
}

inline double image_dot(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline Quat random_quaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat q(n(rng), n(rng), n(rng), n(rng));
  return q * (0.5 + std::uniform_real_distribution<double>(0.0, 1.0)(rng)) / q.norm();
}

/// Random degree-0 scene in front of an axis-aligned camera at the origin.
inline GaussianScene random_scene(std::mt19937_64& rng, const Camera& cam, int count, double depth_lo = 3.0,
                                  double depth_hi = 8.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GaussianScene s;
  s.background = Vec3(u(rng), u(rng), u(rng)) * 0.5;
  for (int i = 0; i < count; ++i) {
    Gaussian g;
    const double depth = depth_lo + (depth_hi - depth_lo) * u(rng);
    const double px = cam.width() * (0.2 + 0.6 * u(rng));
    const double py = cam.height() * (0.2 + 0.6 * u(rng));
    g.mu = Vec3((px - cam.cx()) / cam.fx() * depth, (py - cam.cy()) / cam.fy() * depth, depth);
    g.rot = random_quaternion(rng);
    // Roughly 1 to 3 pixels of footprint per axis.
    for (int k = 0; k < 3; ++k) g.log_scale[k] = std::log((1.0 + 2.0 * u(rng)) * depth / cam.fx());
    g.opacity_logit = -1.5 + 2.5 * u(rng);
    g.sh = {sh_dc_from_color(Vec3(0.1 + 0.8 * u(rng), 0.1 + 0.8 * u(rng), 0.1 + 0.8 * u(rng)))};
    s.gaussians.push_back(g);
  }
  return s;
}

/// True when every (pixel, Gaussian) alpha and every running transmittance
/// keeps a relative margin from the rasterizer's thresholds, no projection
/// is culled, and no two depths are within `min_depth_gap`. Finite
/// differences are only meaningful on such scenes.
inline bool away_from_kinks(std::span<const SplatPrimitive> prims, const Camera& cam, const RasterSettings& rs = {},
                            double margin = 1e-3, double min_depth_gap = 1e-3) {
  const auto proj = project(prims, cam, rs);
  if (proj.size() != prims.size()) return false;
  const auto order = depth_sort(proj);
  for (std::size_t a = 1; a < order.size(); ++a)
    if (proj[order[a]].depth - proj[order[a - 1]].depth < min_depth_gap) return false;
  for (int y = 0; y < cam.height(); ++y)
    for (int x = 0; x < cam.width(); ++x) {
      double t = 1.0;
      for (std::size_t idx : order) {
        const auto& g = proj[idx];
        const double dx = x - g.mean2d.x(), dy = y - g.mean2d.y();
        const double power = -0.5 * (g.conic[0] * dx * dx + g.conic[2] * dy * dy) - g.conic[1] * dx * dy;
        const double alpha = g.alpha_base * std::exp(power);
        if (std::abs(alpha - rs.alpha_min) < margin * rs.alpha_min) return false;
        if (std::abs(alpha - rs.alpha_max) < margin * rs.alpha_max) return false;
        if (alpha < rs.alpha_min) continue;
        const double next = t * (1.0 - std::min(alpha, rs.alpha_max));
        if (std::abs(next - rs.min_transmittance) < 0.5 * rs.min_transmittance) return false;
        if (next < rs.min_transmittance) break;
        t = next;
      }
    }
  return true;
}

/// Visit every scalar parameter: f(pointer, name, gaussian index, group, component).
/// Groups: 0 mu, 1 rot, 2 log_scale, 3 opacity_logit, 4 sh (component = 3 * coeff + channel).
template <class F>
void for_each_scene_parameter(GaussianScene& s, F&& f) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto& g = s.gaussians[i];
    const std::string p = "g" + std::to_string(i) + ".";
    for (int k = 0; k < 3; ++k) f(&g.mu[k], p + "mu" + std::to_string(k), i, 0, k);
    for (int k = 0; k < 4; ++k) f(&g.rot[k], p + "rot" + std::to_string(k), i, 1, k);
    for (int k = 0; k < 3; ++k) f(&g.log_scale[k], p + "log_scale" + std::to_string(k), i, 2, k);
    f(&g.opacity_logit, p + "opacity_logit", i, 3, 0);
    for (std::size_t c = 0; c < g.sh.size(); ++c)
      for (int k = 0; k < 3; ++k)
        f(&g.sh[c][k], p + "sh" + std::to_string(c) + "." + std::to_string(k), i, 4, static_cast<int>(c) * 3 + k);
  }
}

inline double scene_gradient(const SceneGradients& g, std::size_t i, int group, int k) {
  switch (group) {
    case 0: return g.d_mu[i][k];
    case 1: return g.d_rot[i][k];
    case 2: return g.d_log_scale[i][k];
    case 3: return g.d_opacity_logit[i];
    default: return g.d_sh[i][static_cast<std::size_t>(k / 3)][k % 3];
  }
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Every partial of L = <W, render(scene)> against central differences on
/// `num_scenes` random 16x16 scenes with up to 20 Gaussians.
inline GradientReport raster_gradient_suite(int num_scenes = 50, std::uint64_t seed = 2024, double rel_tol = 1e-3,
                                            double abs_floor = 1e-6, double step = 1e-5) {
  const auto t0 = std::chrono::steady_clock::now();
  GradientReport rep;
  std::mt19937_64 rng(seed);
  const Camera cam(20.0, 20.0, 8.0, 8.0, 16, 16);
  std::uniform_int_distribution<int> count_dist(1, 20);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  while (static_cast<int>(rep.cases) < num_scenes) {
    GaussianScene scene = random_scene(rng, cam, count_dist(rng));
    if (!away_from_kinks(scene_primitives(scene, cam), cam)) continue;
    Image w(16, 16, 3);
    for (auto& v : w.data) v = u(rng);
    const auto grads = render_backward(scene, cam, w);
    auto loss = [&] { return image_dot(w, render(scene, cam).pixels); };
    const std::string tag = "scene " + std::to_string(rep.cases) + " ";
    rep.parameters_per_case_max = std::max(rep.parameters_per_case_max, scene.size() * 11);
    for_each_scene_parameter(scene, [&](double* p, const std::string& name, std::size_t i, int grp, int k) {
      rep.record(scene_gradient(grads, i, grp, k), central_difference(p, step, loss), rel_tol, abs_floor, tag + name);
    });
    ++rep.cases;
  }
  rep.seconds = seconds_since(t0);
  return rep;
}

/// Tiny field with every layer (including the output layer) randomized.
inline TransformField random_field(const FieldConfig& cfg, const Vec3& center, const Vec3& half, std::uint64_t seed,
                                   double output_scale = 0.3) {
  TransformField f(cfg, center, half, seed);
  std::mt19937_64 rng(seed + 99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int l = 0; l < f.num_layers(); ++l) {
    const double s = l + 1 == f.num_layers() ? output_scale : 1.0;
    if (l + 1 == f.num_layers())
      for (Eigen::Index i = 0; i < f.weight(l).size(); ++i) f.weight(l).data()[i] = s * u(rng);
    for (Eigen::Index i = 0; i < f.bias(l).size(); ++i) f.bias(l)[i] = 0.1 * s * u(rng);
  }
  return f;
}

/// True when no hidden pre-activation is within `margin` of the ReLU kink.
inline bool relu_margin_ok(const TransformedScene& ts, double margin) {
  for (const auto& z : ts.pre_activations)
    if ((z.array().abs() < margin).any()) return false;
  return true;
}

/// Field weights and input positions against central differences (D=2, W=8, L=2).
inline GradientReport field_gradient_suite(int num_cases = 10, std::uint64_t seed = 7, double rel_tol = 1e-3,
                                           double abs_floor = 1e-8, double step = 1e-6) {
  const auto t0 = std::chrono::steady_clock::now();
  GradientReport rep;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FieldConfig cfg;
  cfg.embed_levels = 2;
  cfg.depth = 2;
  cfg.width = 8;
  const Vec3 center(0.1, -0.2, 5.0), half(2.0, 2.0, 1.0);
  std::uint64_t field_seed = seed;
  while (static_cast<int>(rep.cases) < num_cases) {
    TransformField field = random_field(cfg, center, half, ++field_seed);
    GaussianScene scene;
    for (int i = 0; i < 3; ++i) {
      Gaussian g;
      g.mu = center + Vec3(u(rng), u(rng), u(rng)).cwiseProduct(half);
      g.rot = random_quaternion(rng);
      g.sh = {Vec3::Zero()};
      scene.gaussians.push_back(g);
    }
    const PoseStamp stamp(static_cast<int>(rep.cases % 4), 4);
    if (!relu_margin_ok(field_forward(field, scene, stamp), 1e-3)) continue;
    std::vector<Vec3> a(3);
    std::vector<Quat> b(3);
    for (auto& v : a) v = Vec3(u(rng), u(rng), u(rng));
    for (auto& v : b) v = Quat(u(rng), u(rng), u(rng), u(rng));
    auto loss = [&] {
      const auto ts = field_forward(field, scene, stamp);
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i) s += a[i].dot(ts.mu[i]) + b[i].dot(ts.rot_sum[i]);
      return s;
    };
    const auto res = field_backward(field, scene, stamp, a, b);
    rep.parameters_per_case_max = field.parameter_count() + 9;
    const std::string tag = "case " + std::to_string(rep.cases) + " ";
    for (int l = 0; l < field.num_layers(); ++l) {
      for (Eigen::Index i = 0; i < field.weight(l).size(); ++i)
        rep.record(res.weights.d_weights[static_cast<std::size_t>(l)].data()[i],
                   central_difference(field.weight(l).data() + i, step, loss), rel_tol, abs_floor,
                   tag + "W" + std::to_string(l) + "[" + std::to_string(i) + "]");
      for (Eigen::Index i = 0; i < field.bias(l).size(); ++i)
        rep.record(res.weights.d_biases[static_cast<std::size_t>(l)][i],
                   central_difference(field.bias(l).data() + i, step, loss), rel_tol, abs_floor,
                   tag + "b" + std::to_string(l) + "[" + std::to_string(i) + "]");
    }
    for (std::size_t i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k)
        rep.record(res.d_mu[i][k], central_difference(&scene.gaussians[i].mu[k], step, loss), rel_tol, abs_floor,
                   tag + "mu" + std::to_string(i) + "." + std::to_string(k));
    ++rep.cases;
  }
  rep.seconds = seconds_since(t0);
  return rep;
}

/// Loss-to-parameter gradients through field, filter, rasterizer, modulation
/// and the L1 loss on a 5-Gaussian, B=2, 8x8 problem. A random subset of
/// `subset` parameters (scene and field) is checked per case.
inline GradientReport end_to_end_gradient_suite(int num_cases = 5, int subset = 20, std::uint64_t seed = 99,
                                                double rel_tol = 2e-3, double abs_floor = 1e-9,
                                                double step = 1e-6) {
  const auto t0 = std::chrono::steady_clock::now();
  GradientReport rep;
  std::mt19937_64 rng(seed);
  const Camera cam(10.0, 10.0, 4.0, 4.0, 8, 8);
  FieldConfig fcfg;
  fcfg.embed_levels = 2;
  fcfg.depth = 2;
  fcfg.width = 8;
  std::uint64_t attempt = 0;
  while (static_cast<int>(rep.cases) < num_cases) {
    ++attempt;
    Model m;
    m.scene = random_scene(rng, cam, 5, 4.0, 6.0);
    m.field = random_field(fcfg, Vec3(0, 0, 5), Vec3(2, 2, 1), seed + attempt, 0.02);
    const auto masks = generate_masks(8, 8, 2, 0.5, seed + attempt);
    StampOptions opt;
    opt.field = &m.field;
    opt.filter.gamma = 0.2;
    SamplingRateTable rates = update_sampling_rates(m.scene, &m.field, 2, cam);
    opt.rates = &rates;

    // Skip configurations near a kink of the rasterizer, the ReLUs or |.|.
    bool smooth = true;
    for (int s = 0; s < 2 && smooth; ++s) {
      const auto f = stamp_forward(m.scene, cam, PoseStamp(s, 2), opt);
      smooth = relu_margin_ok(f.transformed, 1e-3) && away_from_kinks(f.prims, cam);
    }
    if (!smooth) continue;
    const auto fwd = forward_all(m, cam, masks, opt);
    Image observed = fwd.compressed;
    std::uniform_real_distribution<double> off(0.05, 0.3);
    std::bernoulli_distribution sign(0.5);
    for (auto& v : observed.data) v += sign(rng) ? off(rng) : -off(rng);

    auto loss = [&] { return sci_loss(forward_all(m, cam, masks, opt).compressed, observed, 2, 0.0).loss; };
    const auto lr = sci_loss(fwd.compressed, observed, 2, 0.0);
    const auto grads = backward_all(m, cam, masks, opt, fwd, lr.grad);

    struct Param {
      double* ptr;
      double analytic;
      std::string name;
    };
    std::vector<Param> params;
    for_each_scene_parameter(m.scene, [&](double* p, const std::string& name, std::size_t i, int grp, int k) {
      params.push_back({p, scene_gradient(grads.scene, i, grp, k), name});
    });
    for (int l = 0; l < m.field.num_layers(); ++l) {
      for (Eigen::Index i = 0; i < m.field.weight(l).size(); ++i)
        params.push_back({m.field.weight(l).data() + i, grads.field.d_weights[static_cast<std::size_t>(l)].data()[i],
                          "W" + std::to_string(l) + "[" + std::to_string(i) + "]"});
      for (Eigen::Index i = 0; i < m.field.bias(l).size(); ++i)
        params.push_back({m.field.bias(l).data() + i, grads.field.d_biases[static_cast<std::size_t>(l)][i],
                          "b" + std::to_string(l) + "[" + std::to_string(i) + "]"});
    }
    std::shuffle(params.begin(), params.end(), rng);
    params.resize(static_cast<std::size_t>(subset));
    rep.parameters_per_case_max = params.size();
    const std::string tag = "case " + std::to_string(rep.cases) + " ";
    for (const auto& p : params)
      rep.record(p.analytic, central_difference(p.ptr, step, loss), rel_tol, abs_floor, tag + p.name);
    ++rep.cases;
  }
  rep.seconds = seconds_since(t0);
  return rep;
}

}  // namespace scigs::checks
