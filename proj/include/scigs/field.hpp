#pragma once

// Pose-stamp transformation field.
//
// For each base Gaussian and pose stamp, an MLP maps
//   (embed(normalized mu), embed(t))  ->  (delta_mu, delta_rot)
// and the transformed Gaussian uses mu + delta_mu and normalize(rot + delta_rot).
// Hidden layers use ReLU; the embedded input is re-injected at `skip_at`.
// The output layer starts at exactly zero so a fresh field is the identity.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "scigs/core.hpp"

namespace scigs {

struct PoseStamp {
  int index = 0;
  int count = 1;

  PoseStamp() = default;
  PoseStamp(int i, int b) : index(i), count(b) {
    require(b >= 1 && i >= 0 && i < b, "pose stamp index must lie in [0, count)");
  }
  double t() const { return count > 1 ? static_cast<double>(index) / (count - 1) : 0.0; }
};

/// Sinusoidal embedding: for each input component x, k = 0..L-1 yields
/// (sin(2^k pi x), cos(2^k pi x)), laid out k-major per component.
inline Eigen::VectorXd embed(const Eigen::VectorXd& x, int levels) {
  require(levels >= 1, "embedding needs at least one frequency level");
  Eigen::VectorXd out(x.size() * 2 * levels);
  Eigen::Index o = 0;
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    double freq = std::numbers::pi;
    for (int k = 0; k < levels; ++k, freq *= 2.0) {
      out[o++] = std::sin(freq * x[d]);
      out[o++] = std::cos(freq * x[d]);
    }
  }
  return out;
}

inline Eigen::VectorXd embed(double x, int levels) { return embed(Eigen::VectorXd::Constant(1, x), levels); }

struct FieldConfig {
  int embed_levels = 6;
  int depth = 8;
  int width = 512;
  int skip_at = -1;  // -1: depth / 2
  bool detach_base_positions = false;

  int resolved_skip() const { return skip_at < 0 ? depth / 2 : skip_at; }
  int input_dim() const { return 3 * 2 * embed_levels + 2 * embed_levels; }
};

class TransformField {
 public:
  static constexpr int kOutputDim = 7;

  TransformField() = default;

  /// Hidden layers get a seeded uniform fan-in initialization; the output
  /// layer and all biases start at zero. `center`/`half_extent` map the
  /// scene bounding box onto [-1, 1]^3 before embedding.
  TransformField(const FieldConfig& cfg, const Vec3& center, const Vec3& half_extent, std::uint64_t seed)
      : cfg_(cfg), center_(center), half_extent_(half_extent) {
    require(cfg.embed_levels >= 1 && cfg.depth >= 1 && cfg.width >= 1, "field dimensions must be positive");
    require(cfg.resolved_skip() >= 0 && cfg.resolved_skip() < cfg.depth, "field skip layer out of range");
    require((half_extent.array() > 0).all(), "field normalization extent must be positive");
    std::mt19937_64 rng(seed);
    for (int l = 0; l <= cfg.depth; ++l) {
      const int in = layer_input_dim(l);
      const int out = l == cfg.depth ? kOutputDim : cfg.width;
      Eigen::MatrixXd w = Eigen::MatrixXd::Zero(out, in);
      if (l < cfg.depth) {
        const double bound = std::sqrt(6.0 / in);
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Eigen::Index c = 0; c < w.cols(); ++c)
          for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = u(rng);
      }
      weights_.push_back(std::move(w));
      biases_.push_back(Eigen::VectorXd::Zero(out));
    }
  }

  const FieldConfig& config() const { return cfg_; }
  const Vec3& center() const { return center_; }
  const Vec3& half_extent() const { return half_extent_; }
  int num_layers() const { return static_cast<int>(weights_.size()); }
  Eigen::MatrixXd& weight(int l) { return weights_[static_cast<std::size_t>(l)]; }
  const Eigen::MatrixXd& weight(int l) const { return weights_[static_cast<std::size_t>(l)]; }
  Eigen::VectorXd& bias(int l) { return biases_[static_cast<std::size_t>(l)]; }
  const Eigen::VectorXd& bias(int l) const { return biases_[static_cast<std::size_t>(l)]; }

  int layer_input_dim(int l) const {
    const int in = cfg_.input_dim();
    if (l == 0) return in;
    return cfg_.width + (l == cfg_.resolved_skip() ? in : 0);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  /// Flattened parameter view: layer by layer, weights (column-major) then biases.
  template <class F>
  void for_each_parameter(F&& f) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      f(weights_[l].data(), static_cast<std::size_t>(weights_[l].size()));
      f(biases_[l].data(), static_cast<std::size_t>(biases_[l].size()));
    }
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      f(weights_[l].data(), static_cast<std::size_t>(weights_[l].size()));
      f(biases_[l].data(), static_cast<std::size_t>(biases_[l].size()));
    }
  }

  /// Replace every weight/bias (used when loading checkpoints).
  void set_layers(std::vector<Eigen::MatrixXd> w, std::vector<Eigen::VectorXd> b) {
    require(static_cast<int>(w.size()) == cfg_.depth + 1 && w.size() == b.size(), "field layer count mismatch");
    for (int l = 0; l <= cfg_.depth; ++l) {
      const int out = l == cfg_.depth ? kOutputDim : cfg_.width;
      require(w[static_cast<std::size_t>(l)].rows() == out &&
                  w[static_cast<std::size_t>(l)].cols() == layer_input_dim(l) &&
                  b[static_cast<std::size_t>(l)].size() == out,
              "field layer dimensions do not chain");
    }
    weights_ = std::move(w);
    biases_ = std::move(b);
  }

  bool operator==(const TransformField& o) const {
    if (weights_.size() != o.weights_.size()) return false;
    for (std::size_t l = 0; l < weights_.size(); ++l)
      if (weights_[l] != o.weights_[l] || biases_[l] != o.biases_[l]) return false;
    return center_ == o.center_ && half_extent_ == o.half_extent_ && cfg_.embed_levels == o.cfg_.embed_levels &&
           cfg_.depth == o.cfg_.depth && cfg_.width == o.cfg_.width &&
           cfg_.resolved_skip() == o.cfg_.resolved_skip();
  }

 private:
  FieldConfig cfg_;
  Vec3 center_ = Vec3::Zero();
  Vec3 half_extent_ = Vec3::Ones();
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

/// Same shapes as a TransformField, holding gradients.
struct FieldGradients {
  std::vector<Eigen::MatrixXd> d_weights;
  std::vector<Eigen::VectorXd> d_biases;

  FieldGradients() = default;
  explicit FieldGradients(const TransformField& f) {
    for (int l = 0; l < f.num_layers(); ++l) {
      d_weights.push_back(Eigen::MatrixXd::Zero(f.weight(l).rows(), f.weight(l).cols()));
      d_biases.push_back(Eigen::VectorXd::Zero(f.bias(l).size()));
    }
  }
  FieldGradients& operator+=(const FieldGradients& o) {
    for (std::size_t l = 0; l < d_weights.size(); ++l) {
      d_weights[l] += o.d_weights[l];
      d_biases[l] += o.d_biases[l];
    }
    return *this;
  }
  template <class F>
  void for_each_parameter(F&& f) const {
    for (std::size_t l = 0; l < d_weights.size(); ++l) {
      f(d_weights[l].data(), static_cast<std::size_t>(d_weights[l].size()));
      f(d_biases[l].data(), static_cast<std::size_t>(d_biases[l].size()));
    }
  }
};

/// Per-stamp transformed positions/rotations. Scales, opacities and SH stay
/// on the base scene. `rot_sum` holds rot + delta_rot before normalization;
/// the covariance path normalizes on use, so a zero delta reproduces the base
/// scene bit for bit.
struct TransformedScene {
  const GaussianScene* base = nullptr;
  PoseStamp stamp;
  std::vector<Vec3> mu;
  std::vector<Quat> rot_sum;

  // Activations retained for the backward pass.
  Eigen::MatrixXd inputs;                   // input_dim x N
  std::vector<Eigen::MatrixXd> pre_activations;  // per hidden layer, width x N

  std::size_t size() const { return mu.size(); }
  Quat rotation(std::size_t i) const { return rot_sum[i] / rot_sum[i].norm(); }

  /// Materialize as a standalone scene (copies base attributes).
  GaussianScene as_scene() const {
    GaussianScene s = *base;
    for (std::size_t i = 0; i < s.size(); ++i) {
      s.gaussians[i].mu = mu[i];
      s.gaussians[i].rot = rot_sum[i];
    }
    return s;
  }
};

namespace detail {

inline Eigen::MatrixXd field_inputs(const TransformField& field, const GaussianScene& scene, const PoseStamp& stamp) {
  const auto& cfg = field.config();
  const int levels = cfg.embed_levels;
  const Eigen::Index n = static_cast<Eigen::Index>(scene.size());
  Eigen::MatrixXd x(cfg.input_dim(), n);
  const Eigen::VectorXd et = embed(stamp.t(), levels);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 p = (scene.gaussians[static_cast<std::size_t>(i)].mu - field.center()).cwiseQuotient(field.half_extent());
    x.col(i).head(6 * levels) = embed(Eigen::VectorXd(p), levels);
    x.col(i).tail(2 * levels) = et;
  }
  return x;
}

}  // namespace detail

inline TransformedScene field_forward(const TransformField& field, const GaussianScene& scene,
                                      const PoseStamp& stamp) {
  const auto& cfg = field.config();
  require(field.num_layers() == cfg.depth + 1, "field has no layers");
  require(stamp.index >= 0 && stamp.index < stamp.count, "invalid pose stamp");
  TransformedScene ts;
  ts.base = &scene;
  ts.stamp = stamp;
  ts.inputs = detail::field_inputs(field, scene, stamp);
  const Eigen::Index n = ts.inputs.cols();
  const int skip = cfg.resolved_skip();

  Eigen::MatrixXd h = ts.inputs;
  for (int l = 0; l < cfg.depth; ++l) {
    Eigen::MatrixXd in;
    if (l > 0 && l == skip) {
      in.resize(h.rows() + ts.inputs.rows(), n);
      in << h, ts.inputs;
    } else {
      in = std::move(h);
    }
    Eigen::MatrixXd z = field.weight(l) * in;
    z.colwise() += field.bias(l);
    h = z.cwiseMax(0.0);
    ts.pre_activations.push_back(std::move(z));
  }
  Eigen::MatrixXd out = field.weight(cfg.depth) * h;
  out.colwise() += field.bias(cfg.depth);

  ts.mu.resize(static_cast<std::size_t>(n));
  ts.rot_sum.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& g = scene.gaussians[static_cast<std::size_t>(i)];
    ts.mu[static_cast<std::size_t>(i)] = g.mu + out.col(i).head<3>();
    const Quat sum = g.rot + out.col(i).tail<4>();
    require(sum.norm() > 0.0 && std::isfinite(sum.norm()), "transformed quaternion has zero norm");
    ts.rot_sum[static_cast<std::size_t>(i)] = sum;
  }
  return ts;
}

struct FieldBackwardResult {
  FieldGradients weights;
  std::vector<Vec3> d_mu;  // gradient on base positions
};

/// Reverse-mode pass. `d_mu_out` is dL/d(mu'), `d_rot_out` is dL/d(rot + delta_rot)
/// (i.e. the gradient on the unnormalized sum; callers that hold a gradient on the
/// normalized quaternion apply normalize_backward first).
inline FieldBackwardResult field_backward(const TransformField& field, const TransformedScene& ts,
                                          std::span<const Vec3> d_mu_out, std::span<const Quat> d_rot_out) {
  const auto& cfg = field.config();
  const Eigen::Index n = static_cast<Eigen::Index>(ts.size());
  require(d_mu_out.size() == ts.size() && d_rot_out.size() == ts.size(),
          "upstream gradient count does not match the scene");
  const int skip = cfg.resolved_skip();
  const int levels = cfg.embed_levels;

  FieldBackwardResult res{FieldGradients(field), std::vector<Vec3>(ts.size(), Vec3::Zero())};
  Eigen::MatrixXd d_out(TransformField::kOutputDim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d_out.col(i).head<3>() = d_mu_out[static_cast<std::size_t>(i)];
    d_out.col(i).tail<4>() = d_rot_out[static_cast<std::size_t>(i)];
  }

  auto layer_input = [&](int l) -> Eigen::MatrixXd {
    if (l == 0) return ts.inputs;
    Eigen::MatrixXd h = ts.pre_activations[static_cast<std::size_t>(l - 1)].cwiseMax(0.0);
    if (l == skip) {
      Eigen::MatrixXd in(h.rows() + ts.inputs.rows(), n);
      in << h, ts.inputs;
      return in;
    }
    return h;
  };

  Eigen::MatrixXd d_inputs = Eigen::MatrixXd::Zero(ts.inputs.rows(), n);
  Eigen::MatrixXd d_h;
  {
    const Eigen::MatrixXd in = layer_input(cfg.depth);
    res.weights.d_weights.back().noalias() = d_out * in.transpose();
    res.weights.d_biases.back() = d_out.rowwise().sum();
    d_h.noalias() = field.weight(cfg.depth).transpose() * d_out;
  }
  for (int l = cfg.depth - 1; l >= 0; --l) {
    // d_h is the gradient on this layer's post-ReLU output (plus any skip split below).
    const auto& z = ts.pre_activations[static_cast<std::size_t>(l)];
    const Eigen::MatrixXd d_z = d_h.cwiseProduct((z.array() > 0.0).cast<double>().matrix());
    const Eigen::MatrixXd in = layer_input(l);
    res.weights.d_weights[static_cast<std::size_t>(l)].noalias() = d_z * in.transpose();
    res.weights.d_biases[static_cast<std::size_t>(l)] = d_z.rowwise().sum();
    if (l == 0) {
      d_inputs.noalias() += field.weight(0).transpose() * d_z;
    } else {
      Eigen::MatrixXd d_in = field.weight(l).transpose() * d_z;
      if (l == skip) {
        d_inputs += d_in.bottomRows(ts.inputs.rows());
        d_h = d_in.topRows(cfg.width);
      } else {
        d_h = std::move(d_in);
      }
    }
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    Vec3 d = d_mu_out[static_cast<std::size_t>(i)];
    if (!cfg.detach_base_positions) {
      const Eigen::VectorXd& x = ts.inputs.col(i);
      for (int dim = 0; dim < 3; ++dim) {
        double acc = 0.0;
        double freq = std::numbers::pi;
        for (int k = 0; k < levels; ++k, freq *= 2.0) {
          const Eigen::Index o = dim * 2 * levels + 2 * k;
          // d sin(f p)/dp = f cos(f p) ; d cos(f p)/dp = -f sin(f p)
          acc += d_inputs(o, i) * freq * x[o + 1] - d_inputs(o + 1, i) * freq * x[o];
        }
        d[dim] += acc / field.half_extent()[dim];
      }
    }
    res.d_mu[static_cast<std::size_t>(i)] = d;
  }
  return res;
}

/// Convenience overload that re-runs the forward pass.
inline FieldBackwardResult field_backward(const TransformField& field, const GaussianScene& scene,
                                          const PoseStamp& stamp, std::span<const Vec3> d_mu_out,
                                          std::span<const Quat> d_rot_out) {
  require(d_mu_out.size() == scene.size() && d_rot_out.size() == scene.size(),
          "upstream gradient count does not match the scene");
  const auto ts = field_forward(field, scene, stamp);
  return field_backward(field, ts, d_mu_out, d_rot_out);
}

}  // namespace scigs
