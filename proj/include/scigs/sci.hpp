#pragma once

// Snapshot compressive imaging forward model: Y = sum_i X_i (.) M_i + Z.
// Masks are single-plane and broadcast across color channels.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "scigs/image.hpp"
#include "scigs/metrics.hpp"

namespace scigs {

struct MaskSet {
  int count = 0;  // B
  int height = 0;
  int width = 0;
  double overlap_ratio = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::uint8_t> bits;  // count * height * width entries, each 0 or 1

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  std::uint8_t at(int i, int y, int x) const {
    return bits[static_cast<std::size_t>(i) * plane_size() + static_cast<std::size_t>(y) * width + x];
  }
  std::span<const std::uint8_t> mask(int i) const {
    return std::span<const std::uint8_t>(bits).subspan(static_cast<std::size_t>(i) * plane_size(), plane_size());
  }
  bool operator==(const MaskSet&) const = default;
};

/// I.i.d. Bernoulli(overlap_ratio) entries from a seeded mt19937_64; the
/// uniform draw uses the top 53 bits so the masks are portable.
inline MaskSet generate_masks(int height, int width, int count, double overlap_ratio, std::uint64_t seed) {
  require(count >= 1, "mask count B must be >= 1");
  require(height >= 1 && width >= 1, "mask dimensions must be positive");
  require(overlap_ratio >= 0.0 && overlap_ratio <= 1.0, "overlap ratio must lie in [0, 1]");
  MaskSet m{count, height, width, overlap_ratio, seed, {}};
  m.bits.resize(static_cast<std::size_t>(count) * m.plane_size());
  std::mt19937_64 rng(seed);
  for (auto& b : m.bits) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    b = u < overlap_ratio ? 1 : 0;
  }
  return m;
}

struct OverlapRatio {
  std::vector<double> per_pixel;  // height * width, row-major
  double global = 0.0;
};

inline OverlapRatio measure_overlap_ratio(const MaskSet& masks) {
  OverlapRatio r;
  r.per_pixel.assign(masks.plane_size(), 0.0);
  for (int i = 0; i < masks.count; ++i) {
    const auto m = masks.mask(i);
    for (std::size_t p = 0; p < m.size(); ++p) r.per_pixel[p] += m[p];
  }
  double total = 0.0;
  for (auto& v : r.per_pixel) {
    total += v;
    v /= masks.count;
  }
  r.global = masks.plane_size() == 0 ? 0.0 : total / (static_cast<double>(masks.count) * masks.plane_size());
  return r;
}

inline void require_frames_match(std::span<const Image> frames, const MaskSet& masks) {
  require(frames.size() == static_cast<std::size_t>(masks.count), "frame count does not match mask count B");
  for (const auto& f : frames)
    require(f.height == masks.height && f.width == masks.width && f.channels >= 1,
            "frame dimensions do not match the masks");
  for (const auto& f : frames) require(f.channels == frames.front().channels, "frames differ in channel count");
}

/// Y = sum_i X_i (.) M_i (+ Gaussian noise of std `noise_sigma` drawn from `noise_seed`).
inline Image modulate(std::span<const Image> frames, const MaskSet& masks, double noise_sigma = 0.0,
                      std::uint64_t noise_seed = 0) {
  require_frames_match(frames, masks);
  const int ch = frames.front().channels;
  Image y(masks.height, masks.width, ch);
  for (int i = 0; i < masks.count; ++i) {
    const auto m = masks.mask(i);
    const auto& x = frames[static_cast<std::size_t>(i)];
    for (std::size_t p = 0; p < m.size(); ++p) {
      if (!m[p]) continue;
      for (int c = 0; c < ch; ++c) y.data[p * ch + c] += x.data[p * ch + c];
    }
  }
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> z(0.0, noise_sigma);
    for (auto& v : y.data) v += z(rng);
  }
  return y;
}

/// dL/dX_i = upstream (.) M_i.
inline std::vector<Image> modulate_backward(const MaskSet& masks, const Image& upstream) {
  require(upstream.height == masks.height && upstream.width == masks.width, "upstream shape does not match masks");
  const int ch = upstream.channels;
  std::vector<Image> grads;
  grads.reserve(static_cast<std::size_t>(masks.count));
  for (int i = 0; i < masks.count; ++i) {
    Image g(masks.height, masks.width, ch);
    const auto m = masks.mask(i);
    for (std::size_t p = 0; p < m.size(); ++p)
      if (m[p])
        for (int c = 0; c < ch; ++c) g.data[p * ch + c] = upstream.data[p * ch + c];
    grads.push_back(std::move(g));
  }
  return grads;
}

struct LossResult {
  double loss = 0.0;
  Image grad;  // d loss / d predicted
};

/// (1 - lambda) * mean|pred - obs| + lambda * (1 - SSIM(pred / B, obs / B)).
/// With lambda == 0 the SSIM term is skipped entirely, so images smaller
/// than the SSIM window are allowed.
inline LossResult sci_loss(const Image& predicted, const Image& observed, int compression_ratio,
                           double lambda_dssim = 0.2) {
  require_same_shape(predicted, observed, "sci_loss: image shapes differ");
  require(compression_ratio >= 1, "sci_loss: compression ratio must be >= 1");
  require(lambda_dssim >= 0.0 && lambda_dssim <= 1.0, "sci_loss: lambda must lie in [0, 1]");
  LossResult r;
  r.grad = Image(predicted.height, predicted.width, predicted.channels);
  const double n = static_cast<double>(predicted.size());
  double l1 = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted.data[i] - observed.data[i];
    l1 += std::abs(d);
    r.grad.data[i] = (1.0 - lambda_dssim) * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / n;
  }
  r.loss = (1.0 - lambda_dssim) * l1 / n;
  if (lambda_dssim > 0.0) {
    const double inv_b = 1.0 / compression_ratio;
    Image a = predicted, b = observed;
    for (auto& v : a.data) v *= inv_b;
    for (auto& v : b.data) v *= inv_b;
    const auto s = ssim_with_grad(a, b);
    r.loss += lambda_dssim * (1.0 - s.value);
    for (std::size_t i = 0; i < predicted.size(); ++i) r.grad.data[i] -= lambda_dssim * s.grad.data[i] * inv_b;
  }
  return r;
}

}  // namespace scigs
