#include "test_support.hpp"

namespace scigs {
namespace {

using testing::grad_close;
using testing::random_image;

std::vector<Image> random_frames(std::mt19937_64& rng, int b, int h, int w) {
  std::vector<Image> f;
  for (int i = 0; i < b; ++i) f.push_back(random_image(h, w, 3, rng));
  return f;
}

/// Direct accumulation Y = sum_i X_i * M_i, frame by frame.
Image modulate_oracle(const std::vector<Image>& frames, const MaskSet& m) {
  Image y(m.height, m.width, 3);
  for (int i = 0; i < m.count; ++i)
    for (int r = 0; r < m.height; ++r)
      for (int c = 0; c < m.width; ++c)
        for (int k = 0; k < 3; ++k)
          y.at(r, c, k) += frames[static_cast<std::size_t>(i)].at(r, c, k) * static_cast<double>(m.at(i, r, c));
  return y;
}

TEST(GenerateMasks, FullOverlapIsAllOnes) {
  const auto m = generate_masks(8, 9, 3, 1.0, 1);
  for (auto b : m.bits) EXPECT_EQ(b, 1);
}

TEST(GenerateMasks, ZeroOverlapIsAllZeros) {
  const auto m = generate_masks(8, 9, 3, 0.0, 1);
  for (auto b : m.bits) EXPECT_EQ(b, 0);
}

TEST(GenerateMasks, EmpiricalRateWithinThreeSigma) {
  const int h = 480, w = 894, b = 8;
  const double p = 0.25;
  const auto m = generate_masks(h, w, b, p, 12345);
  const double n = static_cast<double>(m.bits.size());
  const double bound = 3.0 * std::sqrt(p * (1 - p) / n);
  const double rate = measure_overlap_ratio(m).global;
  EXPECT_NEAR(rate, p, bound);
  EXPECT_GE(rate, 0.2487);
  EXPECT_LE(rate, 0.2513);
}

TEST(GenerateMasks, DeterministicUnderSeed) {
  EXPECT_EQ(generate_masks(16, 16, 4, 0.4, 9), generate_masks(16, 16, 4, 0.4, 9));
  EXPECT_NE(generate_masks(16, 16, 4, 0.4, 9).bits, generate_masks(16, 16, 4, 0.4, 10).bits);
}

TEST(GenerateMasks, RejectsInvalidArguments) {
  EXPECT_THROW(generate_masks(4, 4, 0, 0.5, 0), InvalidParameter);
  EXPECT_THROW(generate_masks(0, 4, 2, 0.5, 0), InvalidParameter);
  EXPECT_THROW(generate_masks(4, 4, 2, 1.5, 0), InvalidParameter);
  EXPECT_THROW(generate_masks(4, 4, 2, -0.1, 0), InvalidParameter);
}

TEST(MeasureOverlapRatio, AllOnes) {
  const auto r = measure_overlap_ratio(generate_masks(5, 6, 4, 1.0, 0));
  for (double v : r.per_pixel) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(r.global, 1.0);
}

TEST(MeasureOverlapRatio, OneOfFourExposed) {
  MaskSet m = generate_masks(5, 6, 4, 0.0, 0);
  std::fill(m.bits.begin(), m.bits.begin() + static_cast<std::ptrdiff_t>(m.plane_size()), 1);
  const auto r = measure_overlap_ratio(m);
  for (double v : r.per_pixel) EXPECT_EQ(v, 0.25);
  EXPECT_EQ(r.global, 0.25);
}

TEST(MeasureOverlapRatio, MatchesDirectSummation) {
  const auto m = generate_masks(13, 17, 6, 0.37, 4);
  const auto r = measure_overlap_ratio(m);
  double total = 0.0;
  for (int y = 0; y < 13; ++y)
    for (int x = 0; x < 17; ++x) {
      int s = 0;
      for (int i = 0; i < 6; ++i) s += m.at(i, y, x);
      EXPECT_NEAR(r.per_pixel[static_cast<std::size_t>(y) * 17 + x], s / 6.0, 1e-15);
      total += s;
    }
  EXPECT_NEAR(r.global, total / (6.0 * 13 * 17), 1e-15);
}

TEST(Modulate, SingleOpenMaskIsIdentity) {
  std::mt19937_64 rng(1);
  const auto frames = random_frames(rng, 1, 7, 5);
  EXPECT_EQ(modulate(frames, generate_masks(7, 5, 1, 1.0, 0)), frames[0]);
}

TEST(Modulate, ComplementaryCheckerboardsInterleave) {
  std::mt19937_64 rng(2);
  const auto frames = random_frames(rng, 2, 6, 6);
  MaskSet m = generate_masks(6, 6, 2, 0.0, 0);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      m.bits[static_cast<std::size_t>(y) * 6 + x] = (x + y) % 2;
      m.bits[36 + static_cast<std::size_t>(y) * 6 + x] = 1 - (x + y) % 2;
    }
  const Image y = modulate(frames, m);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c)
      for (int k = 0; k < 3; ++k) EXPECT_EQ(y.at(r, c, k), frames[(r + c) % 2 ? 0 : 1].at(r, c, k));
}

TEST(Modulate, BitExactAgainstBruteForceOracle) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> bd(1, 16), sd(1, 12);
  for (int trial = 0; trial < 100; ++trial) {
    const int b = bd(rng), h = sd(rng), w = sd(rng);
    const auto frames = random_frames(rng, b, h, w);
    const auto m = generate_masks(h, w, b, 0.5, static_cast<std::uint64_t>(trial));
    EXPECT_EQ(modulate(frames, m), modulate_oracle(frames, m));
  }
}

TEST(Modulate, NoiseIsSeededAndOptional) {
  std::mt19937_64 rng(4);
  const auto frames = random_frames(rng, 3, 8, 8);
  const auto m = generate_masks(8, 8, 3, 0.5, 1);
  const Image clean = modulate(frames, m);
  const Image a = modulate(frames, m, 0.01, 5), b = modulate(frames, m, 0.01, 5);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, clean);
}

TEST(Modulate, RejectsMismatchedInputs) {
  std::mt19937_64 rng(5);
  const auto frames = random_frames(rng, 2, 8, 8);
  EXPECT_THROW(modulate(frames, generate_masks(8, 8, 3, 0.5, 1)), InvalidParameter);
  EXPECT_THROW(modulate(frames, generate_masks(8, 7, 2, 0.5, 1)), InvalidParameter);
}

TEST(ModulateBackward, ZeroUpstream) {
  const auto g = modulate_backward(generate_masks(4, 4, 3, 0.5, 1), Image(4, 4, 3));
  for (const auto& f : g)
    for (double v : f.data) EXPECT_EQ(v, 0.0);
}

TEST(ModulateBackward, OpenMaskPassesUpstream) {
  std::mt19937_64 rng(6);
  const Image up = random_image(4, 5, 3, rng);
  const auto g = modulate_backward(generate_masks(4, 5, 2, 1.0, 1), up);
  for (const auto& f : g) EXPECT_EQ(f, up);
}

TEST(ModulateBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  auto frames = random_frames(rng, 3, 5, 4);
  const auto m = generate_masks(5, 4, 3, 0.5, 2);
  const Image w = random_image(5, 4, 3, rng, -1, 1);
  const auto g = modulate_backward(m, w);
  auto loss = [&] { return checks::image_dot(w, modulate(frames, m)); };
  for (std::size_t i = 0; i < frames.size(); ++i)
    for (std::size_t k = 0; k < frames[i].size(); ++k)
      EXPECT_NEAR(g[i].data[k], testing::central_difference(&frames[i].data[k], 1e-4, loss), 1e-8);
}

TEST(SciLoss, IdenticalImagesGiveZero) {
  std::mt19937_64 rng(8);
  const Image y = random_image(16, 16, 3, rng, 0, 4);
  const auto r = sci_loss(y, y, 4, 0.2);
  EXPECT_NEAR(r.loss, 0.0, 1e-15);
  for (double v : r.grad.data) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(SciLoss, ConstantOffsetL1) {
  std::mt19937_64 rng(9);
  const Image obs = random_image(5, 6, 3, rng);
  Image pred = obs;
  for (auto& v : pred.data) v += 0.1;
  const auto r = sci_loss(pred, obs, 8, 0.0);
  EXPECT_NEAR(r.loss, 0.1, 1e-12);
  for (double v : r.grad.data) EXPECT_DOUBLE_EQ(v, 1.0 / (5 * 6 * 3));
}

TEST(SciLoss, CombinedLossMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  Image pred = random_image(14, 13, 3, rng, 0, 4);
  const Image obs = random_image(14, 13, 3, rng, 0, 4);
  const auto r = sci_loss(pred, obs, 4, 0.2);
  auto loss = [&] { return sci_loss(pred, obs, 4, 0.2).loss; };
  for (std::size_t k = 0; k < pred.size(); k += 7)
    EXPECT_TRUE(grad_close(r.grad.data[k], testing::central_difference(&pred.data[k], 1e-6, loss), 1e-4, 1e-12,
                           "pixel " + std::to_string(k)));
}

TEST(SciLoss, RejectsBadArguments) {
  EXPECT_THROW(sci_loss(Image(4, 4, 3), Image(4, 5, 3), 2, 0.0), InvalidParameter);
  EXPECT_THROW(sci_loss(Image(4, 4, 3), Image(4, 4, 3), 0, 0.0), InvalidParameter);
  EXPECT_THROW(sci_loss(Image(4, 4, 3), Image(4, 4, 3), 2, 1.5), InvalidParameter);
  EXPECT_THROW(sci_loss(Image(4, 4, 3), Image(4, 4, 3), 2, 0.2), InvalidParameter);  // smaller than the window
}

}  // namespace
}  // namespace scigs
