#include "test_support.hpp"

namespace scigs {
namespace {

TEST(Synthesize, StaticBlobsFramesAreIdentical) {
  const auto ds = synthesize_dataset("static-blobs", 1, 8, 32, 32);
  ASSERT_EQ(ds.frames.size(), 8u);
  for (const auto& f : ds.frames) EXPECT_EQ(f, ds.frames[0]);
  EXPECT_FALSE(ds.motion.has_value());
  double energy = 0.0;
  for (double v : ds.frames[0].data) energy += v;
  EXPECT_GT(energy, 0.0);
}

TEST(Synthesize, DeterministicUnderSeed) {
  for (const auto& preset : dataset_presets()) {
    const auto a = synthesize_dataset(preset, 4, 3, 24, 24), b = synthesize_dataset(preset, 4, 3, 24, 24);
    EXPECT_EQ(a.frames, b.frames) << preset;
  }
  EXPECT_NE(synthesize_dataset("static-blobs", 4, 1, 24, 24).frames,
            synthesize_dataset("static-blobs", 5, 1, 24, 24).frames);
}

TEST(Synthesize, MovingBlobCentroidsFollowLinearMotion) {
  const auto ds = synthesize_dataset("moving-blob", 7, 8, 64, 64);
  ASSERT_TRUE(ds.motion.has_value());
  for (int i = 0; i < 8; ++i) {
    const auto c = red_centroid(ds.frames[static_cast<std::size_t>(i)]);
    ASSERT_TRUE(c.has_value());
    // Static blobs behind the red one dilute its red excess, so allow a pixel or two.
    const Vec2 expected = ds.motion->start_px + i * ds.motion->step_px;
    EXPECT_LT((*c - expected).norm(), 2.0) << "frame " << i;
  }
}

TEST(Synthesize, RotatingBarChangesOrientation) {
  const auto ds = synthesize_dataset("rotating-bar", 2, 4, 32, 32);
  ASSERT_EQ(ds.frames.size(), 4u);
  EXPECT_NE(ds.frames[0], ds.frames[3]);
}

TEST(Synthesize, RejectsUnknownPresetAndEmptySequence) {
  EXPECT_THROW(synthesize_dataset("nope", 0, 2, 16, 16), InvalidParameter);
  EXPECT_THROW(synthesize_dataset("static-blobs", 0, 0, 16, 16), InvalidParameter);
}

TEST(RedCentroid, MatchesWeightedMeanOracle) {
  Image img(10, 12, 3);
  img.at(2, 3, 0) = 1.0;
  img.at(7, 9, 0) = 0.5;
  img.at(7, 9, 1) = 0.25;  // excess 0.25
  img.at(5, 5, 1) = 1.0;   // green only: no weight
  const auto c = red_centroid(img);
  ASSERT_TRUE(c.has_value());
  EXPECT_NEAR(c->x(), (1.0 * 3 + 0.25 * 9) / 1.25, 1e-15);
  EXPECT_NEAR(c->y(), (1.0 * 2 + 0.25 * 7) / 1.25, 1e-15);
  EXPECT_FALSE(red_centroid(Image(4, 4, 3)).has_value());
}

TEST(IdentityAtInit, FreshFieldRendersBaseSceneBitIdentically) {
  TrainConfig c = TrainConfig::desk_scale();
  c.width = 32;
  c.height = 32;
  const Model m = init_model(c);
  const Camera cam = make_training_camera(c);
  StampOptions with_field;
  with_field.field = &m.field;
  with_field.filter.enabled = false;
  StampOptions without_field = with_field;
  without_field.field = nullptr;
  const Image base = render(m.scene, cam).pixels;
  for (int s = 0; s < c.compression_ratio; ++s) {
    const PoseStamp stamp(s, c.compression_ratio);
    EXPECT_EQ(stamp_forward(m.scene, cam, stamp, with_field).image.pixels, base);
    EXPECT_EQ(stamp_forward(m.scene, cam, stamp, without_field).image.pixels, base);
  }
}

}  // namespace
}  // namespace scigs
