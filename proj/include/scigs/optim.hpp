#pragma once

// Joint optimization of the Gaussian scene and the transformation field.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "scigs/config.hpp"
#include "scigs/core.hpp"
#include "scigs/field.hpp"
#include "scigs/metrics.hpp"
#include "scigs/pipeline.hpp"
#include "scigs/sci.hpp"

namespace scigs {

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
  std::size_t size() const { return m.size(); }
  bool operator==(const AdamState&) const = default;
};

/// Bias-corrected Adam update in place.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
  require(params.size() == grads.size() && params.size() == state.size(),
          "adam_step: parameter, gradient and moment sizes differ");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

// ---------------------------------------------------------------------------
// Gaussian parameter groups

enum class ParamGroup { Position, Rotation, Scale, Opacity, Sh };
inline constexpr std::array<ParamGroup, 5> kParamGroups = {ParamGroup::Position, ParamGroup::Rotation,
                                                          ParamGroup::Scale, ParamGroup::Opacity, ParamGroup::Sh};

inline std::size_t group_dim(ParamGroup g, int sh_degree) {
  switch (g) {
    case ParamGroup::Position: return 3;
    case ParamGroup::Rotation: return 4;
    case ParamGroup::Scale: return 3;
    case ParamGroup::Opacity: return 1;
    case ParamGroup::Sh: return 3 * static_cast<std::size_t>(sh_coeff_count(sh_degree));
  }
  return 0;
}

/// Pointer to the parameter block of one Gaussian inside a group.
inline double* group_data(Gaussian& g, ParamGroup grp) {
  switch (grp) {
    case ParamGroup::Position: return g.mu.data();
    case ParamGroup::Rotation: return g.rot.data();
    case ParamGroup::Scale: return g.log_scale.data();
    case ParamGroup::Opacity: return &g.opacity_logit;
    case ParamGroup::Sh: return g.sh.front().data();  // std::vector<Vec3> is contiguous doubles
  }
  return nullptr;
}

inline std::vector<double> gather(GaussianScene& scene, ParamGroup grp) {
  const std::size_t d = group_dim(grp, scene.sh_degree);
  std::vector<double> out(scene.size() * d);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const double* p = group_data(scene.gaussians[i], grp);
    std::copy(p, p + d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return out;
}

inline void scatter(GaussianScene& scene, ParamGroup grp, std::span<const double> values) {
  const std::size_t d = group_dim(grp, scene.sh_degree);
  for (std::size_t i = 0; i < scene.size(); ++i)
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(i * d),
              values.begin() + static_cast<std::ptrdiff_t>((i + 1) * d), group_data(scene.gaussians[i], grp));
}

inline std::vector<double> gather_grad(const SceneGradients& g, ParamGroup grp, int sh_degree) {
  const std::size_t n = g.d_mu.size();
  const std::size_t d = group_dim(grp, sh_degree);
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = nullptr;
    switch (grp) {
      case ParamGroup::Position: p = g.d_mu[i].data(); break;
      case ParamGroup::Rotation: p = g.d_rot[i].data(); break;
      case ParamGroup::Scale: p = g.d_log_scale[i].data(); break;
      case ParamGroup::Opacity: p = &g.d_opacity_logit[i]; break;
      case ParamGroup::Sh: p = g.d_sh[i].front().data(); break;
    }
    std::copy(p, p + d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return out;
}

/// One Adam state per parameter group of the Gaussians.
struct GaussianOptimizer {
  std::array<AdamState, 5> groups;

  GaussianOptimizer() = default;
  GaussianOptimizer(std::size_t n, int sh_degree) {
    for (std::size_t k = 0; k < kParamGroups.size(); ++k) groups[k] = AdamState(n * group_dim(kParamGroups[k], sh_degree));
  }
  AdamState& operator[](ParamGroup g) { return groups[static_cast<std::size_t>(g)]; }
  const AdamState& operator[](ParamGroup g) const { return groups[static_cast<std::size_t>(g)]; }
  bool operator==(const GaussianOptimizer&) const = default;

  /// Rebuild moments after densification: entry i copies the moments of
  /// Gaussian remap[i], or starts at zero when remap[i] is empty.
  void remap(std::span<const std::optional<std::size_t>> sources, int sh_degree) {
    for (std::size_t k = 0; k < kParamGroups.size(); ++k) {
      const std::size_t d = group_dim(kParamGroups[k], sh_degree);
      AdamState next(sources.size() * d);
      next.step = groups[k].step;
      for (std::size_t i = 0; i < sources.size(); ++i) {
        if (!sources[i]) continue;
        const std::size_t s = *sources[i];
        std::copy_n(groups[k].m.begin() + static_cast<std::ptrdiff_t>(s * d), d,
                    next.m.begin() + static_cast<std::ptrdiff_t>(i * d));
        std::copy_n(groups[k].v.begin() + static_cast<std::ptrdiff_t>(s * d), d,
                    next.v.begin() + static_cast<std::ptrdiff_t>(i * d));
      }
      groups[k] = std::move(next);
    }
  }
};

struct LearningRates {
  double position = 1.6e-4;
  double rotation = 1e-3;
  double scale = 5e-3;
  double opacity = 5e-2;
  double sh = 2.5e-3;

  double of(ParamGroup g) const {
    switch (g) {
      case ParamGroup::Position: return position;
      case ParamGroup::Rotation: return rotation;
      case ParamGroup::Scale: return scale;
      case ParamGroup::Opacity: return opacity;
      case ParamGroup::Sh: return sh;
    }
    return 0.0;
  }
};

inline void adam_step(GaussianScene& scene, const SceneGradients& grads, GaussianOptimizer& opt,
                      const LearningRates& lr) {
  for (ParamGroup g : kParamGroups) {
    auto params = gather(scene, g);
    const auto gr = gather_grad(grads, g, scene.sh_degree);
    adam_step(params, gr, opt[g], lr.of(g));
    scatter(scene, g, params);
  }
}

inline void adam_step(TransformField& field, const FieldGradients& grads, AdamState& state, double lr) {
  std::vector<double> params, g;
  params.reserve(field.parameter_count());
  g.reserve(field.parameter_count());
  field.for_each_parameter([&](const double* p, std::size_t n) { params.insert(params.end(), p, p + n); });
  grads.for_each_parameter([&](const double* p, std::size_t n) { g.insert(g.end(), p, p + n); });
  adam_step(params, g, state, lr);
  std::size_t o = 0;
  field.for_each_parameter([&](double* p, std::size_t n) {
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(o), n, p);
    o += n;
  });
}

// ---------------------------------------------------------------------------
// Scene initialization

/// Uniform random positions inside center +/- half_extent, identity rotations,
/// isotropic scale from the mean distance to the 3 nearest neighbours,
/// opacity 0.1 and mid-gray degree-0 color.
inline GaussianScene init_scene(int num_points, const Vec3& center, const Vec3& half_extent, std::uint64_t seed,
                                int sh_degree = 0, const Vec3& background = Vec3::Zero()) {
  require(num_points >= 1, "init_scene: num_points must be >= 1");
  require((half_extent.array() >= 0).all(), "init_scene: negative bounds");
  GaussianScene scene;
  scene.sh_degree = sh_degree;
  scene.background = background;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> pts(static_cast<std::size_t>(num_points));
  for (auto& p : pts) {
    const double x = u(rng), y = u(rng), z = u(rng);
    p = center + Vec3(x, y, z).cwiseProduct(half_extent);
  }
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i) {
    double nn_dist = 0.1 * std::max(half_extent.maxCoeff(), 1e-6);
    if (n > 1) {
      std::array<double, 3> best{INFINITY, INFINITY, INFINITY};
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double d2 = (pts[i] - pts[j]).squaredNorm();
        if (d2 < best[2]) {
          best[2] = d2;
          std::sort(best.begin(), best.end());
        }
      }
      double sum = 0.0;
      int cnt = 0;
      for (double b : best)
        if (std::isfinite(b)) {
          sum += std::sqrt(b);
          ++cnt;
        }
      nn_dist = std::max(sum / cnt, 1e-7);
    }
    Gaussian g;
    g.mu = pts[i];
    g.rot = Quat(1, 0, 0, 0);
    g.log_scale = Vec3::Constant(std::log(nn_dist));
    g.opacity_logit = logit(0.1);
    g.sh.assign(static_cast<std::size_t>(sh_coeff_count(sh_degree)), Vec3::Zero());
    scene.gaussians.push_back(std::move(g));
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Adaptive density control

struct DensifyStats {
  std::vector<double> grad_accum;
  std::vector<int> count;
  std::vector<int> max_radius;

  explicit DensifyStats(std::size_t n = 0) : grad_accum(n, 0.0), count(n, 0), max_radius(n, 0) {}
  std::size_t size() const { return grad_accum.size(); }
  void reset(std::size_t n) { *this = DensifyStats(n); }
  void add(std::span<const double> ndc_grad_norm, std::span<const int> radius) {
    for (std::size_t i = 0; i < size(); ++i) {
      if (radius[i] <= 0) continue;
      grad_accum[i] += ndc_grad_norm[i];
      count[i] += 1;
      max_radius[i] = std::max(max_radius[i], radius[i]);
    }
  }
};

struct DensifyThresholds {
  double grad = 2e-4;
  double opacity = 0.005;
  double scale = 0.25;  // world units; clone below, split at or above
  double split_factor = 1.6;
  std::size_t max_gaussians = 0;  // 0: unlimited
};

struct DensifyResult {
  /// For each Gaussian of the new scene: index in the old scene whose optimizer
  /// moments it inherits, or empty for freshly created Gaussians.
  std::vector<std::optional<std::size_t>> sources;
  std::size_t cloned = 0;
  std::size_t split = 0;
  std::size_t pruned = 0;
};

inline Vec3 sample_in_footprint(const Gaussian& g, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  const Vec3 n(z(rng), z(rng), z(rng));
  const Mat3 r = rotation_from_unit_quaternion(g.rot / g.rot.norm());
  return g.mu + r * g.scale().cwiseProduct(n);
}

/// Clone small high-gradient Gaussians, split large ones into two children
/// with scale / split_factor, then prune those with opacity below threshold.
/// Resets `stats` to the new size.
inline DensifyResult densify_and_prune(GaussianScene& scene, DensifyStats& stats, const DensifyThresholds& th,
                                       std::mt19937_64& rng) {
  require(stats.size() == scene.size(), "densify stats size does not match the scene");
  const std::size_t n = scene.size();
  DensifyResult res;
  std::vector<Gaussian> next;
  std::vector<std::optional<std::size_t>> sources;
  std::vector<Gaussian> added;
  std::vector<bool> replaced(n, false);
  const bool room = th.max_gaussians == 0 || n < th.max_gaussians;
  if (room) {
    for (std::size_t i = 0; i < n; ++i) {
      if (stats.count[i] == 0) continue;
      const double mean_grad = stats.grad_accum[i] / stats.count[i];
      if (!(mean_grad > th.grad)) continue;
      const Gaussian& g = scene.gaussians[i];
      if (g.scale().maxCoeff() < th.scale) {
        Gaussian c = g;
        c.mu = sample_in_footprint(g, rng);
        added.push_back(std::move(c));
        ++res.cloned;
      } else {
        for (int k = 0; k < 2; ++k) {
          Gaussian c = g;
          c.mu = sample_in_footprint(g, rng);
          c.log_scale = g.log_scale.array() - std::log(th.split_factor);
          added.push_back(std::move(c));
        }
        replaced[i] = true;
        ++res.split;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (replaced[i]) continue;
    if (scene.gaussians[i].opacity() < th.opacity) {
      ++res.pruned;
      continue;
    }
    next.push_back(std::move(scene.gaussians[i]));
    sources.emplace_back(i);
  }
  for (auto& g : added) {
    if (g.opacity() < th.opacity) {
      ++res.pruned;
      continue;
    }
    next.push_back(std::move(g));
    sources.emplace_back(std::nullopt);
  }
  scene.gaussians = std::move(next);
  res.sources = std::move(sources);
  stats.reset(scene.size());
  return res;
}

// ---------------------------------------------------------------------------
// Training

/// Fixed training camera: looks at the origin from `distance`, with a seeded
/// random tilt of up to `jitter_deg` away from the -z axis. Never optimized.
inline Camera make_training_camera(const TrainConfig& cfg) {
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double tilt = cfg.camera_jitter_deg * std::numbers::pi / 180.0 * u(rng);
  const double azimuth = 2.0 * std::numbers::pi * u(rng);
  const Vec3 dir(std::sin(tilt) * std::cos(azimuth), std::sin(tilt) * std::sin(azimuth), -std::cos(tilt));
  const double focal = 0.5 * cfg.width / std::tan(0.5 * cfg.fov_deg * std::numbers::pi / 180.0);
  return Camera::look_at(cfg.camera_distance * dir, Vec3::Zero(), Vec3(0, -1, 0), focal, cfg.width, cfg.height);
}

struct TrainState {
  GaussianOptimizer gaussian_opt;
  AdamState field_opt;
  DensifyStats stats;
  SamplingRateTable rates;
  std::int64_t iteration = 0;
  std::mt19937_64 rng;
};

struct Model {
  GaussianScene scene;
  TransformField field;
};

inline Vec3 init_half_extent(const TrainConfig& cfg) {
  return Vec3(cfg.scene_extent, cfg.scene_extent, cfg.scene_depth_extent);
}

inline Model init_model(const TrainConfig& cfg) {
  Model m;
  m.scene = init_scene(cfg.num_points, Vec3::Zero(), init_half_extent(cfg), cfg.seed, cfg.sh_degree,
                       Vec3::Constant(cfg.background));
  m.field = TransformField(cfg.field, Vec3::Zero(), init_half_extent(cfg), cfg.seed + 1);
  return m;
}

inline TrainState init_train_state(const TrainConfig& cfg, const Model& m) {
  TrainState s;
  s.gaussian_opt = GaussianOptimizer(m.scene.size(), m.scene.sh_degree);
  s.field_opt = AdamState(m.field.parameter_count());
  s.stats.reset(m.scene.size());
  s.rng.seed(cfg.seed + 2);
  return s;
}

inline LearningRates learning_rates(const TrainConfig& cfg, std::int64_t iteration) {
  LearningRates lr;
  const double progress = cfg.iterations > 0 ? std::clamp(static_cast<double>(iteration) / cfg.iterations, 0.0, 1.0) : 0.0;
  lr.position = cfg.lr_position * cfg.scene_extent * std::pow(cfg.lr_position_final_factor, progress);
  lr.rotation = cfg.lr_rotation;
  lr.scale = cfg.lr_scale;
  lr.opacity = cfg.lr_opacity;
  lr.sh = cfg.lr_sh;
  return lr;
}

struct StampOutputs {
  std::vector<StampForward> forwards;
  Image compressed;
};

inline StampOptions stamp_options(const TrainConfig& cfg, const Model& m, const TrainState* state) {
  StampOptions opt;
  opt.field = cfg.field_enabled ? &m.field : nullptr;
  opt.filter = cfg.filter;
  opt.rates = state ? &state->rates : nullptr;
  return opt;
}

/// Forward through all stamps and the SCI modulation.
inline StampOutputs forward_all(const Model& m, const Camera& cam, const MaskSet& masks, const StampOptions& opt) {
  StampOutputs out;
  std::vector<Image> frames;
  for (int s = 0; s < masks.count; ++s) {
    out.forwards.push_back(stamp_forward(m.scene, cam, PoseStamp(s, masks.count), opt));
    frames.push_back(out.forwards.back().image.pixels);
  }
  out.compressed = modulate(frames, masks);
  return out;
}

struct FullGradients {
  SceneGradients scene;
  FieldGradients field;
  std::vector<std::vector<double>> ndc_grad_norm;  // per stamp
  std::vector<std::vector<int>> radius;            // per stamp
};

/// Backward from dL/dY through modulation, every stamp render and the field.
inline FullGradients backward_all(const Model& m, const Camera& cam, const MaskSet& masks, const StampOptions& opt,
                                  const StampOutputs& fwd, const Image& d_compressed) {
  FullGradients g;
  g.scene = SceneGradients(m.scene.size(), m.scene.sh_degree);
  g.field = FieldGradients(m.field);
  const auto d_frames = modulate_backward(masks, d_compressed);
  for (int s = 0; s < masks.count; ++s) {
    const auto sb = stamp_backward(m.scene, cam, opt, fwd.forwards[static_cast<std::size_t>(s)],
                                   d_frames[static_cast<std::size_t>(s)]);
    for (std::size_t i = 0; i < m.scene.size(); ++i) {
      g.scene.d_mu[i] += sb.scene.d_mu[i];
      g.scene.d_rot[i] += sb.scene.d_rot[i];
      g.scene.d_log_scale[i] += sb.scene.d_log_scale[i];
      g.scene.d_opacity_logit[i] += sb.scene.d_opacity_logit[i];
      for (std::size_t k = 0; k < g.scene.d_sh[i].size(); ++k) g.scene.d_sh[i][k] += sb.scene.d_sh[i][k];
      g.scene.mean2d_grad_norm[i] += sb.scene.mean2d_grad_norm[i];
    }
    if (opt.field) g.field += sb.field;
    g.ndc_grad_norm.push_back(sb.mean2d_ndc_norm);
    g.radius.push_back(sb.radius);
  }
  return g;
}

struct StepResult {
  double loss = 0.0;
  FrameMetrics metrics;  // filled only when ground truth is given
};

inline void refresh_sampling_rates(const TrainConfig& cfg, const Model& m, const Camera& cam, TrainState& state) {
  if (!cfg.filter.enabled) {
    state.rates = {};
    return;
  }
  state.rates = update_sampling_rates(m.scene, cfg.field_enabled ? &m.field : nullptr, cfg.compression_ratio, cam);
}

/// One joint optimization step: forward all stamps, modulate, loss, full
/// backward, one Adam step per optimizer, then density control bookkeeping.
inline StepResult train_step(Model& m, TrainState& state, const MaskSet& masks, const Image& observed,
                             const Camera& cam, const TrainConfig& cfg) {
  require(masks.count == cfg.compression_ratio, "mask count does not match sci.compression_ratio");
  require(observed.height == cam.height() && observed.width == cam.width() && observed.channels == 3,
          "observed compressed image does not match the camera");
  if (cfg.filter.enabled &&
      (state.rates.size() != m.scene.size() || state.iteration % cfg.filter.recompute_every == 0))
    refresh_sampling_rates(cfg, m, cam, state);

  const auto opt = stamp_options(cfg, m, &state);
  const auto fwd = forward_all(m, cam, masks, opt);
  const auto loss = sci_loss(fwd.compressed, observed, masks.count, cfg.lambda_dssim);
  const auto grads = backward_all(m, cam, masks, opt, fwd, loss.grad);

  for (std::size_t s = 0; s < grads.radius.size(); ++s) state.stats.add(grads.ndc_grad_norm[s], grads.radius[s]);

  adam_step(m.scene, grads.scene, state.gaussian_opt, learning_rates(cfg, state.iteration));
  if (cfg.field_enabled) adam_step(m.field, grads.field, state.field_opt, cfg.lr_field);
  ++state.iteration;

  const std::int64_t it = state.iteration;
  if (cfg.densify_enabled && it <= cfg.resolved_densify_stop()) {
    if (it > cfg.densify_start && it % cfg.densify_interval == 0) {
      DensifyThresholds th;
      th.grad = cfg.grad_threshold;
      th.opacity = cfg.opacity_threshold;
      th.scale = cfg.scale_threshold * cfg.scene_extent;
      th.split_factor = cfg.split_factor;
      th.max_gaussians = static_cast<std::size_t>(std::max(0, cfg.max_gaussians));
      const auto res = densify_and_prune(m.scene, state.stats, th, state.rng);
      state.gaussian_opt.remap(res.sources, m.scene.sh_degree);
      if (cfg.filter.enabled) refresh_sampling_rates(cfg, m, cam, state);
    }
    if (cfg.opacity_reset && it % cfg.opacity_reset_every == 0) {
      const double cap = logit(0.01);
      for (auto& g : m.scene.gaussians) g.opacity_logit = std::min(g.opacity_logit, cap);
      auto& op = state.gaussian_opt[ParamGroup::Opacity];
      std::fill(op.m.begin(), op.m.end(), 0.0);
      std::fill(op.v.begin(), op.v.end(), 0.0);
    }
  }
  return StepResult{loss.loss, {}};
}

/// Render every stamp with freshly computed sampling rates.
inline std::vector<Image> render_stamps(const Model& m, const Camera& cam, const TrainConfig& cfg) {
  TrainState tmp;
  refresh_sampling_rates(cfg, m, cam, tmp);
  const auto opt = stamp_options(cfg, m, &tmp);
  std::vector<Image> frames;
  for (int s = 0; s < cfg.compression_ratio; ++s)
    frames.push_back(stamp_forward(m.scene, cam, PoseStamp(s, cfg.compression_ratio), opt).image.pixels);
  return frames;
}

struct LogEntry {
  std::int64_t iteration = 0;
  double loss = 0.0;
  std::optional<double> psnr;
};

struct TrainResult {
  Model model;
  TrainState state;
  std::vector<Image> frames;
  std::vector<LogEntry> log;
};

struct TrainHooks {
  std::function<void(const Model&, const TrainState&)> on_checkpoint;
  std::function<void(const LogEntry&)> on_log;
};

/// Run the full optimization. `ground_truth` (optional) is only used for logging PSNR.
inline TrainResult train(const Image& observed, const MaskSet& masks, const TrainConfig& cfg,
                         std::span<const Image> ground_truth = {}, const TrainHooks& hooks = {}) {
  if (auto p = cfg.problems(); !p.empty()) throw ConfigError(std::move(p));
  require(masks.height == cfg.height && masks.width == cfg.width, "mask size does not match image.width/height");
  const Camera cam = make_training_camera(cfg);
  TrainResult r;
  r.model = init_model(cfg);
  r.state = init_train_state(cfg, r.model);
  for (int it = 0; it < cfg.iterations; ++it) {
    const auto step = train_step(r.model, r.state, masks, observed, cam, cfg);
    const bool last = it + 1 == cfg.iterations;
    if ((it + 1) % cfg.log_every == 0 || last) {
      LogEntry e{r.state.iteration, step.loss, std::nullopt};
      if (!ground_truth.empty()) {
        const auto frames = render_stamps(r.model, cam, cfg);
        e.psnr = evaluate_frames(frames, ground_truth).psnr_mean();
      }
      r.log.push_back(e);
      if (hooks.on_log) hooks.on_log(e);
    }
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 && !last)
      hooks.on_checkpoint(r.model, r.state);
  }
  r.frames = render_stamps(r.model, cam, cfg);
  if (hooks.on_checkpoint) hooks.on_checkpoint(r.model, r.state);
  return r;
}

}  // namespace scigs
