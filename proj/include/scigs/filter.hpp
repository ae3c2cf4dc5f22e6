#pragma once

// High-frequency filter: convolve each 3D Gaussian with an isotropic low-pass
// Gaussian of variance gamma / nu, where nu is the highest screen sampling
// rate (focal / depth) the Gaussian sees over all pose stamps, and rescale
// opacity by sqrt(|Sigma| / |Sigma + (gamma/nu) I|) so the integral is kept.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "scigs/core.hpp"

namespace scigs {

struct FilterSettings {
  bool enabled = true;
  double gamma = 0.2;
  int recompute_every = 100;
};

/// Max sampling frequency (pixels per world unit) per Gaussian. Entries are
/// empty for Gaussians that sit behind the near plane in every stamp; those
/// are left unfiltered.
struct SamplingRateTable {
  std::vector<std::optional<double>> max_freq;

  std::size_t size() const { return max_freq.size(); }
};

/// max over stamps of f / depth, f = max(fx, fy); stamps at or behind the near
/// plane are skipped. Returns nullopt when no stamp is valid.
inline std::optional<double> max_sampling_frequency(std::span<const Vec3> mu_per_stamp, const Camera& cam,
                                                    double near_plane = 0.01) {
  std::optional<double> best;
  const double f = cam.max_focal();
  for (const Vec3& mu : mu_per_stamp) {
    const double depth = cam.to_camera(mu).z();
    if (!(depth > near_plane)) continue;
    const double nu = f / depth;
    if (!best || nu > *best) best = nu;
  }
  return best;
}

/// `mu[s][i]` is the position of Gaussian i under stamp s.
inline SamplingRateTable compute_sampling_rates(std::span<const std::vector<Vec3>> mu, const Camera& cam,
                                                double near_plane = 0.01) {
  SamplingRateTable table;
  if (mu.empty()) return table;
  const std::size_t n = mu.front().size();
  table.max_freq.resize(n);
  std::vector<Vec3> column(mu.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < mu.size(); ++s) column[s] = mu[s][i];
    table.max_freq[i] = max_sampling_frequency(column, cam, near_plane);
  }
  return table;
}

struct FilteredGaussian {
  Mat3 cov;
  double opacity;
  double kappa;  // opacity scale factor
};

/// Sigma' = Sigma + (gamma/nu) I, opacity' = kappa * opacity with
/// kappa = sqrt(|Sigma| / |Sigma'|).
inline FilteredGaussian apply_filter(const Mat3& cov, double opacity, double max_freq, double gamma) {
  require(max_freq > 0 && gamma > 0, "filter needs positive frequency and gamma");
  const double det = cov.determinant();
  Eigen::LLT<Mat3> llt(cov);
  require(llt.info() == Eigen::Success && det > 0, "filter input covariance is not positive definite");
  const double width = gamma / max_freq;
  FilteredGaussian out;
  out.cov = cov + width * Mat3::Identity();
  out.kappa = std::sqrt(det / out.cov.determinant());
  out.opacity = out.kappa * opacity;
  return out;
}

struct FilterGrad {
  Mat3 d_cov;
  double d_opacity;
};

/// Backward of apply_filter w.r.t. (Sigma, opacity); max_freq is a constant.
/// d kappa / d Sigma = kappa/2 (Sigma^-1 - Sigma'^-1).
inline FilterGrad apply_filter_backward(const Mat3& cov, double opacity, double max_freq, double gamma,
                                        const Mat3& d_cov_out, double d_opacity_out) {
  const double width = gamma / max_freq;
  const Mat3 filtered = cov + width * Mat3::Identity();
  const double kappa = std::sqrt(cov.determinant() / filtered.determinant());
  const double d_kappa = d_opacity_out * opacity;
  FilterGrad g;
  g.d_opacity = d_opacity_out * kappa;
  g.d_cov = d_cov_out + 0.5 * kappa * d_kappa * (cov.inverse() - filtered.inverse());
  return g;
}

}  // namespace scigs
