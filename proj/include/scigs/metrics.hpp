#pragma once

// PSNR / SSIM and sweep trend reports.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "scigs/image.hpp"

namespace scigs {

inline constexpr double kPsnrCap = 100.0;

inline double psnr(const Image& a, const Image& b, double peak = 1.0) {
  require_same_shape(a, b, "psnr: image shapes differ");
  require(a.size() > 0, "psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = 0.5 * (size - 1);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    w[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v /= sum;
  return w;
}

/// Separable "valid" correlation of an h x w plane: output (h-k+1) x (w-k+1).
inline std::vector<double> filter_valid(std::span<const double> in, int h, int w, const std::vector<double>& k) {
  const int ks = static_cast<int>(k.size());
  const int oh = h - ks + 1, ow = w - ks + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < ks; ++i) s += k[static_cast<std::size_t>(i)] * in[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < ks; ++i) s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

/// Adjoint of filter_valid: scatters an (h-k+1) x (w-k+1) map back to h x w.
inline std::vector<double> filter_valid_adjoint(std::span<const double> in, int h, int w,
                                                const std::vector<double>& k) {
  const int ks = static_cast<int>(k.size());
  const int oh = h - ks + 1, ow = w - ks + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int i = 0; i < ks; ++i)
      for (int x = 0; x < ow; ++x)
        tmp[static_cast<std::size_t>(y + i) * ow + x] += k[static_cast<std::size_t>(i)] * in[static_cast<std::size_t>(y) * ow + x];
  std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x)
      for (int i = 0; i < ks; ++i)
        out[static_cast<std::size_t>(y) * w + x + i] += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y) * ow + x];
  return out;
}

inline std::vector<double> channel_plane(const Image& img, int c) {
  std::vector<double> p(static_cast<std::size_t>(img.height) * img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) p[static_cast<std::size_t>(y) * img.width + x] = img.at(y, x, c);
  return p;
}

}  // namespace detail

struct SsimResult {
  double value = 0.0;
  Image grad;  // d value / d a (only when requested)
};

/// Mean SSIM over all full-window positions and channels. When `want_grad`
/// is set, also returns the exact gradient with respect to `a`.
inline SsimResult ssim_with_grad(const Image& a, const Image& b, const SsimParams& p = {}, bool want_grad = true) {
  require_same_shape(a, b, "ssim: image shapes differ");
  require(a.height >= p.window && a.width >= p.window, "ssim: image smaller than the window");
  const auto k = detail::gaussian_window(p.window, p.sigma);
  const double c1 = (p.k1 * p.peak) * (p.k1 * p.peak);
  const double c2 = (p.k2 * p.peak) * (p.k2 * p.peak);
  const int h = a.height, w = a.width;
  const std::size_t n_valid = static_cast<std::size_t>(h - p.window + 1) * (w - p.window + 1);
  const double norm = 1.0 / static_cast<double>(n_valid * a.channels);

  SsimResult res;
  if (want_grad) res.grad = Image(h, w, a.channels);
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    const auto pa = detail::channel_plane(a, c);
    const auto pb = detail::channel_plane(b, c);
    std::vector<double> aa(pa.size()), bb(pa.size()), ab(pa.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = detail::filter_valid(pa, h, w, k);
    const auto mu_b = detail::filter_valid(pb, h, w, k);
    const auto e_aa = detail::filter_valid(aa, h, w, k);
    const auto e_bb = detail::filter_valid(bb, h, w, k);
    const auto e_ab = detail::filter_valid(ab, h, w, k);
    std::vector<double> ga(n_valid), gb(n_valid), gc(n_valid);
    for (std::size_t i = 0; i < n_valid; ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
      const double n1 = 2 * ma * mb + c1, n2 = 2 * cov + c2;
      const double d1 = ma * ma + mb * mb + c1, d2 = va + vb + c2;
      const double s = n1 * n2 / (d1 * d2);
      total += s;
      if (!want_grad) continue;
      const double ds_dmu = 2 * mb * n2 / (d1 * d2) - s * 2 * ma / d1;
      const double ds_dvar = -s / d2;
      const double ds_dcov = 2 * n1 / (d1 * d2);
      ga[i] = norm * (ds_dmu - 2 * ma * ds_dvar - mb * ds_dcov);
      gb[i] = norm * ds_dvar;
      gc[i] = norm * ds_dcov;
    }
    if (!want_grad) continue;
    const auto fa = detail::filter_valid_adjoint(ga, h, w, k);
    const auto fb = detail::filter_valid_adjoint(gb, h, w, k);
    const auto fc = detail::filter_valid_adjoint(gc, h, w, k);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        res.grad.at(y, x, c) = fa[i] + 2 * pa[i] * fb[i] + pb[i] * fc[i];
      }
  }
  res.value = total / static_cast<double>(n_valid * a.channels);
  return res;
}

inline double ssim(const Image& a, const Image& b, const SsimParams& p = {}) {
  return ssim_with_grad(a, b, p, false).value;
}

struct FrameMetrics {
  std::vector<double> psnr;
  std::vector<double> ssim;

  double psnr_mean() const { return mean(psnr); }
  double ssim_mean() const { return mean(ssim); }

 private:
  static double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }
};

inline FrameMetrics evaluate_frames(std::span<const Image> recovered, std::span<const Image> truth) {
  require(recovered.size() == truth.size(), "frame count mismatch between recovered and ground truth");
  FrameMetrics m;
  for (std::size_t i = 0; i < recovered.size(); ++i) {
    m.psnr.push_back(psnr(recovered[i], truth[i]));
    m.ssim.push_back(ssim(recovered[i], truth[i]));
  }
  return m;
}

/// True when the sequence rises (non-strictly) to a peak and then falls
/// (non-strictly). Flat and purely monotone sequences qualify as the
/// degenerate cases with an empty fall or rise.
inline bool is_rise_then_fall(std::span<const double> values) {
  std::size_t i = 1;
  while (i < values.size() && values[i] >= values[i - 1]) ++i;
  while (i < values.size() && values[i] <= values[i - 1]) ++i;
  return i >= values.size();
}

inline bool ablation_improves(double with_component, double without_component) {
  return with_component >= without_component;
}

struct SweepPoint {
  double knob = 0.0;
  FrameMetrics metrics;
};

struct TrendReport {
  std::string csv;  // header knob,psnr_mean,ssim_mean
  bool rise_then_fall = false;
};

inline std::string format_fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline TrendReport trend_report(std::span<const SweepPoint> points) {
  require(points.size() >= 2, "trend report needs at least two sweep points");
  TrendReport r;
  r.csv = "knob,psnr_mean,ssim_mean\n";
  std::vector<double> means;
  for (const auto& p : points) {
    r.csv += format_fixed4(p.knob) + "," + format_fixed4(p.metrics.psnr_mean()) + "," +
             format_fixed4(p.metrics.ssim_mean()) + "\n";
    means.push_back(p.metrics.psnr_mean());
  }
  r.rise_then_fall = is_rise_then_fall(means);
  return r;
}

}  // namespace scigs
