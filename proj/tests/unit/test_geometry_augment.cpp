#include <gtest/gtest.h>

#include <random>

#include "lgseg/geometry_augment.hpp"
#include "test_util.hpp"

using namespace lgseg;

namespace {

AugmentConfig fixed_scale(double s) {
  AugmentConfig c;
  c.scale_min = c.scale_max = s;
  return c;
}

}  // namespace

TEST(SampleTransform, DegenerateRangesGiveIdentityGeometry) {
  AugmentConfig c = fixed_scale(1.0);
  c.ratio_min = c.ratio_max = 1.0;
  c.flip_prob = 0.0;
  const ViewTransform t = sample_transform(0, c, {40, 40});
  EXPECT_EQ(t.crop, (CropRect{0, 0, 40, 40}));
  EXPECT_FALSE(t.flip_h);
  EXPECT_EQ(t.out_size, (Size{40, 40}));
}

TEST(SampleTransform, SameSeedSameTransform) {
  const AugmentConfig c;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_EQ(sample_transform(seed, c, {64, 48}), sample_transform(seed, c, {64, 48}));
  }
}

TEST(SampleTransform, HalfScaleCropAreaOn100x100) {
  AugmentConfig c = fixed_scale(0.5);
  const ViewTransform t = sample_transform(1, c, {100, 100});
  const int area = t.crop.height * t.crop.width;
  // Recompute the target from the emitted rectangle: 5000 px^2 up to the
  // rounding of each side (at most half a pixel per side).
  EXPECT_NEAR(area, 5000, 0.5 * (t.crop.height + t.crop.width) + 1);
  EXPECT_GE(t.crop.top, 0);
  EXPECT_GE(t.crop.left, 0);
  EXPECT_LE(t.crop.top + t.crop.height, 100);
  EXPECT_LE(t.crop.left + t.crop.width, 100);
}

TEST(SampleTransform, CropsStayInsideAndWithinScaleRange) {
  const AugmentConfig c;
  for (uint64_t seed = 0; seed < 500; ++seed) {
    const Size img{20 + static_cast<int>(seed % 37), 20 + static_cast<int>(seed % 23)};
    const ViewTransform t = sample_transform(seed, c, img);
    ASSERT_GE(t.crop.top, 0);
    ASSERT_GE(t.crop.left, 0);
    ASSERT_LE(t.crop.top + t.crop.height, img.height);
    ASSERT_LE(t.crop.left + t.crop.width, img.width);
    ASSERT_EQ(t.out_size, img);
  }
}

TEST(SampleTransform, InvalidRangesAreConfigErrors) {
  AugmentConfig c;
  c.scale_min = 0.9;
  c.scale_max = 0.5;
  EXPECT_THROW(sample_transform(0, c, {10, 10}), ConfigError);
  c = AugmentConfig{};
  c.flip_prob = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AugmentConfig{};
  c.ratio_min = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ApplyToImage, IdentityLeavesImageAndCoordinates) {
  std::mt19937_64 rng(5);
  const DenseMap img = testutil::random_image(rng, 7, 9);
  const AugmentedView v = apply_to_image(img, identity_transform(img.size()));
  EXPECT_EQ(v.image.values, img.values);
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 9; ++c) {
      EXPECT_EQ(v.corr.src_row[r * 9 + c], r);
      EXPECT_EQ(v.corr.src_col[r * 9 + c], c);
    }
}

TEST(ApplyToImage, FlipOneByTwoSwapsColumns) {
  DenseMap img(1, 2, 3);
  img.pixel(0, 0) << 0.1, 0.2, 0.3;
  img.pixel(0, 1) << 0.7, 0.8, 0.9;
  ViewTransform t = identity_transform(img.size());
  t.flip_h = true;
  const AugmentedView v = apply_to_image(img, t);
  EXPECT_EQ(v.image.pixel(0, 0), img.pixel(0, 1));
  EXPECT_EQ(v.image.pixel(0, 1), img.pixel(0, 0));
  EXPECT_EQ(v.corr.src_col[0], 1.0);
  EXPECT_EQ(v.corr.src_col[1], 0.0);
}

TEST(ApplyToImage, CropResizeMatchesIndexArithmetic) {
  ViewTransform t;
  t.crop = {10, 10, 50, 50};
  t.out_size = {25, 25};
  const ViewCorrespondence corr = make_correspondence(t, {100, 100});
  // Pixel centres at integers: view pixel i covers source rows
  // [top + 2i - 0.5, top + 2i + 1.5], centre top + 2i + 0.5.
  for (int i = 0; i < 25; ++i)
    for (int j = 0; j < 25; ++j) {
      EXPECT_DOUBLE_EQ(corr.src_row[i * 25 + j], 10 + 2.0 * i + 0.5);
      EXPECT_DOUBLE_EQ(corr.src_col[i * 25 + j], 10 + 2.0 * j + 0.5);
    }
  EXPECT_NEAR(corr.src_row[0], 10.5, 1e-12);
}

TEST(ApplyToImage, PhotometricTouchesPixelsOnly) {
  std::mt19937_64 rng(8);
  const DenseMap img = testutil::random_image(rng, 12, 10);
  ViewTransform t;
  t.crop = {2, 1, 8, 8};
  t.out_size = {8, 8};
  const ViewTransform plain = t;
  t.photometric = {1.3, 0.8, 1.2, 0.05, 0.7};
  const AugmentedView a = apply_to_image(img, t);
  const AugmentedView b = apply_to_image(img, plain);
  EXPECT_EQ(a.corr.src_row, b.corr.src_row);
  EXPECT_EQ(a.corr.src_col, b.corr.src_col);
  EXPECT_GT((a.image.values - b.image.values).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_GE(a.image.values.minCoeff(), 0.0);
  EXPECT_LE(a.image.values.maxCoeff(), 1.0);
}

TEST(WarpDenseMap, IdentityFlipAndConstantUpsample) {
  std::mt19937_64 rng(9);
  const DenseMap m = testutil::random_map(rng, 5, 6, 4);
  const ViewCorrespondence id = make_correspondence(identity_transform(m.size()), m.size());
  EXPECT_EQ(warp_dense_map(m, id, Interp::kBilinear).values, m.values);
  EXPECT_EQ(warp_dense_map(m, id, Interp::kNearest).values, m.values);

  DenseMap two(1, 2, 2);
  two.values << 1, 2, 3, 4;
  ViewTransform flip = identity_transform(two.size());
  flip.flip_h = true;
  const DenseMap f = warp_dense_map(two, make_correspondence(flip, two.size()), Interp::kBilinear);
  EXPECT_EQ(f.pixel(0, 0), two.pixel(0, 1));
  EXPECT_EQ(f.pixel(0, 1), two.pixel(0, 0));

  DenseMap constant(4, 4, 3);
  constant.values.setConstant(0.37);
  const DenseMap up = resize_bilinear(constant, {8, 8});
  EXPECT_NEAR((up.values.array() - 0.37).abs().maxCoeff(), 0.0, 1e-15);
}

TEST(WarpDenseMap, BilinearUpsampleMatchesHandInterpolation) {
  DenseMap m(1, 2, 1);
  m.values << 0.0, 1.0;
  const DenseMap up = resize_bilinear(m, {1, 4});
  // Source columns of the 4 view pixels: -0.25, 0.25, 0.75, 1.25 (clamped at the ends).
  EXPECT_DOUBLE_EQ(up.values(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(up.values(1, 0), 0.25);
  EXPECT_DOUBLE_EQ(up.values(2, 0), 0.75);
  EXPECT_DOUBLE_EQ(up.values(3, 0), 1.0);
}

TEST(WarpLabelMap, NearestNeverInventsLabels) {
  std::mt19937_64 rng(10);
  const LabelMap l = testutil::random_labels(rng, 16, 16, 5);
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const ViewTransform t = sample_transform(seed, AugmentConfig{}, l.size());
    const LabelMap w = warp_label_map(l, make_correspondence(t, l.size()));
    for (int32_t v : w.ids) ASSERT_TRUE(v >= 0 && v < 5);
  }
}

// Property: every view pixel maps back inside the source extent, and the
// inverse map recovers the view pixel within half a pixel.
TEST(Correspondence, RoundTripProperty) {
  AugmentConfig c;
  c.out_size = {24, 20};
  for (uint64_t seed = 0; seed < 300; ++seed) {
    const Size img{30 + static_cast<int>(seed % 17), 25 + static_cast<int>(seed % 13)};
    const ViewTransform t = sample_transform(seed, c, img);
    const ViewCorrespondence corr = make_correspondence(t, img);
    for (int i = 0; i < corr.height; ++i)
      for (int j = 0; j < corr.width; ++j) {
        const size_t k = static_cast<size_t>(i) * corr.width + j;
        ASSERT_TRUE(corr.valid[k]);
        ASSERT_GE(corr.src_row[k], -0.5);
        ASSERT_LE(corr.src_row[k], img.height - 0.5);
        ASSERT_GE(corr.src_col[k], -0.5);
        ASSERT_LE(corr.src_col[k], img.width - 0.5);
        const auto [vi, vj] = source_to_view(t, corr.src_row[k], corr.src_col[k]);
        ASSERT_NEAR(vi, i, 0.5);
        ASSERT_NEAR(vj, j, 0.5);
      }
  }
}

TEST(Correspondence, WarpIgnoresPhotometricBitwise) {
  std::mt19937_64 rng(12);
  const DenseMap feats = testutil::random_map(rng, 20, 18, 6);
  for (uint64_t seed = 0; seed < 30; ++seed) {
    ViewTransform t = sample_transform(seed, AugmentConfig{}, feats.size());
    ViewTransform bare = t;
    bare.photometric = Photometric{};
    const DenseMap a = warp_dense_map(feats, make_correspondence(t, feats.size()), Interp::kBilinear);
    const DenseMap b = warp_dense_map(feats, make_correspondence(bare, feats.size()), Interp::kBilinear);
    ASSERT_EQ(a.values, b.values);
  }
}

TEST(Correspondence, ChannelMismatchAndBadCropAreShapeErrors) {
  ViewTransform t;
  t.crop = {5, 5, 10, 10};
  t.out_size = {4, 4};
  EXPECT_THROW(make_correspondence(t, {12, 12}), ShapeError);
  DenseMap gray(4, 4, 1);
  ViewTransform jitter = identity_transform(gray.size());
  jitter.photometric.brightness = 1.2;
  EXPECT_THROW(apply_to_image(gray, jitter), ShapeError);
}
