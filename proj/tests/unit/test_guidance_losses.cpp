#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lgseg/guidance_losses.hpp"
#include "test_util.hpp"

using namespace lgseg;

namespace {

Mat random_rotation(std::mt19937_64& rng, int d) {
  const Mat a = testutil::random_mat(rng, d, d);
  Eigen::HouseholderQR<Mat> qr(a);
  return qr.householderQ();
}

}  // namespace

TEST(EmbeddingConsistency, IdenticalOrthogonalAntipodal) {
  std::mt19937_64 rng(1);
  const Mat v = testutil::random_unit_rows(rng, 4, 3);
  EXPECT_NEAR(embedding_consistency_loss(v, v).loss, 0.0, 1e-15);
  EXPECT_NEAR(embedding_consistency_loss(v, -v).loss, 2.0, 1e-15);
  Mat a(2, 2), b(2, 2);
  a << 1, 0, 0, 1;
  b << 0, 1, -1, 0;
  EXPECT_NEAR(embedding_consistency_loss(a, b).loss, 1.0, 1e-15);
}

TEST(EmbeddingConsistency, MismatchedSetsAreAlignmentErrors) {
  EXPECT_THROW(embedding_consistency_loss(Mat::Ones(3, 2), Mat::Ones(2, 2)), AlignmentError);
  EXPECT_THROW(embedding_consistency_loss(Mat::Ones(2, 3), Mat::Ones(2, 2)), AlignmentError);
}

TEST(EmbeddingConsistency, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  const Mat v = testutil::random_mat(rng, 5, 4), i = testutil::random_unit_rows(rng, 5, 4);
  const Mat g = testutil::numeric_gradient([&](const Mat& x) { return embedding_consistency_loss(x, i).loss; }, v);
  EXPECT_LT(testutil::relative_error(embedding_consistency_loss(v, i).grad, g), 1e-6);
}

// Properties: symmetric in (v, i), invariant to a shared rotation, in [0, 2].
TEST(EmbeddingConsistency, SymmetryAndRotationProperty) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + trial % 6;
    const Mat v = testutil::random_unit_rows(rng, 1 + trial % 9, d);
    const Mat i = testutil::random_unit_rows(rng, v.rows(), d);
    const double l = embedding_consistency_loss(v, i).loss;
    ASSERT_GE(l, 0.0);
    ASSERT_LE(l, 2.0);
    ASSERT_NEAR(embedding_consistency_loss(i, v).loss, l, 1e-12);
    const Mat r = random_rotation(rng, d);
    ASSERT_NEAR(embedding_consistency_loss(v * r, i * r).loss, l, 1e-12);
  }
}

TEST(SemanticConsistency, UniformSimilaritiesGiveLogL) {
  Mat protos(3, 3);
  protos << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  Mat v(1, 3);
  v << 0, 0, 0;
  v(0, 0) = v(0, 1) = v(0, 2) = 1;
  const std::vector<int> y = {2};
  EXPECT_NEAR(semantic_consistency_loss(v, protos, y).loss, std::log(3.0), 1e-15);
}

TEST(SemanticConsistency, TwoClassScalarOracle) {
  Mat protos(2, 2), v(1, 2);
  protos << 1, 0, -1, 0;
  v << 1, 0;
  const std::vector<int> y = {0};
  EXPECT_NEAR(semantic_consistency_loss(v, protos, y).loss, -std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0))),
              1e-15);
}

TEST(SemanticConsistency, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (double t : {1.0, 0.5}) {
    const Mat v = testutil::random_mat(rng, 6, 5), protos = testutil::random_unit_rows(rng, 4, 5);
    const std::vector<int> y = {0, 3, 1, 1, 2, 3};
    const Mat g =
        testutil::numeric_gradient([&](const Mat& x) { return semantic_consistency_loss(x, protos, y, t).loss; }, v);
    EXPECT_LT(testutil::relative_error(semantic_consistency_loss(v, protos, y, t).grad, g), 1e-4);
  }
}

TEST(SemanticConsistency, LabelOutOfRangeAndBadTemperature) {
  const std::vector<int> y = {5};
  EXPECT_THROW(semantic_consistency_loss(Mat::Ones(1, 2), Mat::Identity(2, 2), y), ShapeError);
  const std::vector<int> ok = {0};
  EXPECT_THROW(semantic_consistency_loss(Mat::Ones(1, 2), Mat::Identity(2, 2), ok, 0.0), ConfigError);
  EXPECT_THROW(semantic_consistency_loss(Mat::Ones(2, 2), Mat::Identity(2, 2), ok), AlignmentError);
}

// Property: moving v towards c_y (other similarities unchanged) lowers the
// loss. With orthonormal prototypes the other sims are the other coordinates.
TEST(SemanticConsistency, DecreasesAsTargetSimilarityGrowsProperty) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const Mat protos = Mat::Identity(4, 4);
  for (int trial = 0; trial < 200; ++trial) {
    // Unit v with fixed off-target coordinates; the target coordinate grows
    // and the slack goes into a fourth, prototype-free direction.
    Mat protos3 = protos.topRows(3);
    const double a = u(rng), b = u(rng);
    const double s1 = u(rng) * 0.6, s2 = s1 + 0.2;
    auto make = [&](double s) {
      Mat v(1, 4);
      v << s, a, b, std::sqrt(std::max(0.0, 1 - s * s - a * a - b * b));
      return v;
    };
    const std::vector<int> y = {0};
    ASSERT_LT(semantic_consistency_loss(make(s2), protos3, y).loss, semantic_consistency_loss(make(s1), protos3, y).loss);
  }
}

TEST(ClassDistribution, ArgmaxInvariantToShiftProperty) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const Mat protos = testutil::random_unit_rows(rng, 5, 3);
    const RowVec v = testutil::random_unit_rows(rng, 1, 3);
    const Vec phi = class_distribution(v, protos);
    ASSERT_NEAR(phi.sum(), 1.0, 1e-12);
    // Softmax of sims + c: compute directly.
    Vec sims = protos * v.transpose();
    const Vec shifted = (sims.array() + 3.7).exp();
    Eigen::Index a, b;
    phi.maxCoeff(&a);
    shifted.maxCoeff(&b);
    ASSERT_EQ(a, b);
    ASSERT_LT((phi - shifted / shifted.sum()).cwiseAbs().maxCoeff(), 1e-12);
  }
}
