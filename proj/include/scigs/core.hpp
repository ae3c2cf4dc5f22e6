#pragma once

// Domain types and geometric kernels for 3D Gaussians.
//
// Conventions:
//   * quaternions are scalar-first (w, x, y, z), stored unnormalized
//   * scale is stored as log(s), opacity as logit(sigma)
//   * colors come from real spherical harmonics with a +0.5 offset, clamped at 0

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "scigs/error.hpp"

namespace scigs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Vector4d;  // (w, x, y, z)
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

inline constexpr int kMaxShDegree = 3;

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct Gaussian {
  Vec3 mu = Vec3::Zero();
  Quat rot = Quat(1, 0, 0, 0);
  Vec3 log_scale = Vec3::Zero();
  double opacity_logit = 0.0;
  std::vector<Vec3> sh;  // (degree + 1)^2 RGB coefficients

  double opacity() const { return sigmoid(opacity_logit); }
  Vec3 scale() const { return log_scale.array().exp(); }
};

struct GaussianScene {
  std::vector<Gaussian> gaussians;
  int sh_degree = 0;
  Vec3 background = Vec3::Zero();

  std::size_t size() const { return gaussians.size(); }

  void validate() const {
    require(sh_degree >= 0 && sh_degree <= kMaxShDegree, "sh_degree must be in [0, 3]");
    const auto n = static_cast<std::size_t>(sh_coeff_count(sh_degree));
    for (const auto& g : gaussians) require(g.sh.size() == n, "gaussian SH coefficient count does not match scene degree");
  }
};

/// Pinhole camera with a fixed world-to-camera rigid transform.
/// Camera frame: +z looks into the scene, +x right, +y down (pixel rows).
class Camera {
 public:
  Camera(double fx, double fy, double cx, double cy, int width, int height, const Mat3& rotation = Mat3::Identity(),
         const Vec3& translation = Vec3::Zero())
      : fx_(fx), fy_(fy), cx_(cx), cy_(cy), width_(width), height_(height), rot_(rotation), trans_(translation) {
    require(fx > 0 && fy > 0, "camera focal lengths must be positive");
    require(width > 0 && height > 0, "camera image size must be positive");
    require(cx >= 0 && cx < width && cy >= 0 && cy < height, "camera principal point must lie inside the image");
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    require(ortho < 1e-9 && std::abs(rotation.determinant() - 1.0) < 1e-9,
            "camera rotation must be orthonormal with det +1");
  }

  /// Camera at `eye` looking at `target`; `up` is a world-space hint for -y.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height) {
    const Vec3 z = (target - eye).normalized();
    Vec3 x = z.cross(up);
    require(x.norm() > 1e-12, "look_at: up vector parallel to view direction");
    x.normalize();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.row(0) = x.transpose();
    r.row(1) = y.transpose();
    r.row(2) = z.transpose();
    // Re-orthonormalize to keep det/orthogonality tight.
    Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    r = svd.matrixU() * svd.matrixV().transpose();
    return Camera(focal, focal, 0.5 * width, 0.5 * height, width, height, r, -r * eye);
  }

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  int width() const { return width_; }
  int height() const { return height_; }
  const Mat3& rotation() const { return rot_; }
  const Vec3& translation() const { return trans_; }
  double max_focal() const { return std::max(fx_, fy_); }

  Vec3 to_camera(const Vec3& world) const { return rot_ * world + trans_; }
  Vec3 center() const { return -rot_.transpose() * trans_; }

 private:
  double fx_, fy_, cx_, cy_;
  int width_, height_;
  Mat3 rot_;
  Vec3 trans_;
};

/// q / |q| with the leading component made non-negative.
inline Quat normalize_quaternion(const Quat& q) {
  const double n = q.norm();
  require(n > 0 && std::isfinite(n), "quaternion has zero norm");
  Quat out = q / n;
  if (out[0] < 0) out = -out;
  return out;
}

/// Rotation matrix of a unit quaternion (w, x, y, z).
inline Mat3 rotation_from_unit_quaternion(const Quat& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

/// dL/dq for a unit quaternion given dL/dR.
inline Quat rotation_backward(const Quat& q, const Mat3& g) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Quat d;
  d[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  d[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - w * g(1, 2) + z * g(2, 0) + w * g(2, 1)) -
         4 * x * (g(1, 1) + g(2, 2));
  d[2] = 2 * (x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) + z * g(2, 1)) -
         4 * y * (g(0, 0) + g(2, 2));
  d[3] = 2 * (-w * g(0, 1) + x * g(0, 2) + w * g(1, 0) + y * g(1, 2) + x * g(2, 0) + y * g(2, 1)) -
         4 * z * (g(0, 0) + g(1, 1));
  return d;
}

/// Backward of q -> q/|q|.
inline Quat normalize_backward(const Quat& q, const Quat& d_unit) {
  const double n = q.norm();
  const Quat u = q / n;
  return (d_unit - u * u.dot(d_unit)) / n;
}

/// Sigma = R S S^T R^T with R from the normalized quaternion, S = diag(exp(log_scale)).
/// Sign of the quaternion is irrelevant (R is even in q).
inline Mat3 covariance_from_params(const Quat& rot, const Vec3& log_scale) {
  const double n = rot.norm();
  require(n > 0 && std::isfinite(n), "quaternion has zero norm");
  const Mat3 r = rotation_from_unit_quaternion(rot / n);
  const Mat3 m = r * log_scale.array().exp().matrix().asDiagonal();
  return m * m.transpose();
}

struct CovarianceGrad {
  Quat d_rot;
  Vec3 d_log_scale;
};

/// Backward of covariance_from_params. `d_cov` is dL/dSigma as a full matrix
/// (entries treated independently, symmetric by construction upstream).
inline CovarianceGrad covariance_backward(const Quat& rot, const Vec3& log_scale, const Mat3& d_cov) {
  const double n = rot.norm();
  const Quat u = rot / n;
  const Mat3 r = rotation_from_unit_quaternion(u);
  const Vec3 s = log_scale.array().exp();
  const Mat3 m = r * s.asDiagonal();
  const Mat3 d_m = (d_cov + d_cov.transpose()) * m;
  const Mat3 d_r = d_m * s.asDiagonal();
  const Vec3 d_s = (r.transpose() * d_m).diagonal();
  CovarianceGrad out;
  out.d_log_scale = d_s.cwiseProduct(s);
  out.d_rot = normalize_backward(rot, rotation_backward(u, d_r));
  return out;
}

namespace sh {
inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kC2 = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                              -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> kC3 = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                              0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                              -0.5900435899266435};

/// Real SH basis values up to `degree` at unit direction d, in the usual splatting order.
inline std::vector<double> basis(const Vec3& d, int degree) {
  std::vector<double> b(static_cast<std::size_t>(sh_coeff_count(degree)));
  const double x = d.x(), y = d.y(), z = d.z();
  b[0] = kC0;
  if (degree >= 1) {
    b[1] = -kC1 * y;
    b[2] = kC1 * z;
    b[3] = -kC1 * x;
  }
  if (degree >= 2) {
    const double xx = x * x, yy = y * y, zz = z * z;
    b[4] = kC2[0] * x * y;
    b[5] = kC2[1] * y * z;
    b[6] = kC2[2] * (2 * zz - xx - yy);
    b[7] = kC2[3] * x * z;
    b[8] = kC2[4] * (xx - yy);
    if (degree >= 3) {
      b[9] = kC3[0] * y * (3 * xx - yy);
      b[10] = kC3[1] * x * y * z;
      b[11] = kC3[2] * y * (4 * zz - xx - yy);
      b[12] = kC3[3] * z * (2 * zz - 3 * xx - 3 * yy);
      b[13] = kC3[4] * x * (4 * zz - xx - yy);
      b[14] = kC3[5] * z * (xx - yy);
      b[15] = kC3[6] * x * (xx - 3 * yy);
    }
  }
  return b;
}
}  // namespace sh

/// Degree-0 coefficient that reproduces `color` under eval_sh.
inline Vec3 sh_dc_from_color(const Vec3& color) { return (color.array() - 0.5) / sh::kC0; }

inline Vec3 eval_sh(std::span<const Vec3> coeffs, const Vec3& view_dir, int degree) {
  require(degree >= 0 && degree <= kMaxShDegree, "SH degree must be in [0, 3]");
  require(coeffs.size() == static_cast<std::size_t>(sh_coeff_count(degree)), "SH coefficient count mismatch");
  require(std::abs(view_dir.norm() - 1.0) <= 1e-6, "SH view direction must be unit length");
  const auto b = sh::basis(view_dir, degree);
  Vec3 c = Vec3::Zero();
  for (std::size_t k = 0; k < b.size(); ++k) c += b[k] * coeffs[k];
  return (c.array() + 0.5).max(0.0);
}

/// dL/dcoeff for eval_sh; zero on channels clamped at 0. The view direction is
/// treated as constant (no gradient into the position through SH for degree >= 1).
inline void eval_sh_backward(std::span<const Vec3> coeffs, const Vec3& view_dir, int degree, const Vec3& d_color,
                             std::span<Vec3> d_coeffs) {
  const auto b = sh::basis(view_dir, degree);
  Vec3 raw = Vec3::Zero();
  for (std::size_t k = 0; k < b.size(); ++k) raw += b[k] * coeffs[k];
  Vec3 g = d_color;
  for (int c = 0; c < 3; ++c)
    if (raw[c] + 0.5 < 0) g[c] = 0;
  for (std::size_t k = 0; k < b.size(); ++k) d_coeffs[k] += b[k] * g;
}

}  // namespace scigs
