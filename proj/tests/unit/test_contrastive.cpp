#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <set>

#include "lgseg/contrastive.hpp"
#include "test_util.hpp"

using namespace lgseg;

namespace {

// One segment == one pixel column block; handy for hand-built sets.
SegmentSet segments_from_ids(const LabelMap& ids, int d, std::mt19937_64& rng) {
  DenseMap emb(ids.height, ids.width, d);
  emb.values = testutil::random_unit_rows(rng, ids.pixels(), d);
  return pool_segments(emb, ids);
}

RegionPrior prior_from(const LabelMap& ids) {
  RegionPrior p;
  p.ids = ids;
  p.source = RegionSource::kFile;
  return p;
}

PairSets single_anchor_pairs(int num_pos, int num_neg) {
  PairSets p;
  p.anchors.push_back({0, 0, 0});
  p.positives.push_back({});
  for (int i = 0; i < num_pos + num_neg; ++i) {
    p.segments.push_back({0, 0, i, i < num_pos ? 0 : 1, true});
    if (i < num_pos) p.positives[0].push_back(i);
  }
  return p;
}

}  // namespace

TEST(MemoryBank, FifoEviction) {
  MemoryBank bank(2);
  EXPECT_EQ(bank.snapshot().rows(), 0);
  Mat a = Mat::Constant(2, 3, 1.0), b = Mat::Constant(1, 3, 2.0), c = Mat::Constant(3, 3, 3.0);
  bank.push(a);
  bank.push(b);
  bank.push(c);
  const Mat s = bank.snapshot();
  ASSERT_EQ(s.rows(), 4);
  EXPECT_EQ(s.topRows(1), b);
  EXPECT_EQ(s.bottomRows(3), c);
  EXPECT_EQ(bank.num_batches(), 2);
}

TEST(MemoryBank, SnapshotIsBitwiseCopy) {
  std::mt19937_64 rng(1);
  MemoryBank bank(3);
  Mat x = testutil::random_mat(rng, 5, 4);
  bank.push(x);
  const Mat snap = bank.snapshot();
  x.setZero();
  EXPECT_EQ(std::memcmp(snap.data(), bank.snapshot().data(), sizeof(double) * 20), 0);
  EXPECT_NE(snap.norm(), 0.0);
  EXPECT_THROW(bank.push(Mat::Zero(1, 3)), ShapeError);
}

TEST(MemoryBank, ZeroDepthHoldsNothing) {
  MemoryBank bank(0);
  bank.push(Mat::Ones(2, 2));
  EXPECT_EQ(bank.size(), 0);
  EXPECT_THROW(MemoryBank(-1), ConfigError);
}

TEST(PairSets, SingleRegionMakesEverySegmentPositive) {
  std::mt19937_64 rng(2);
  const RegionPrior prior = prior_from(LabelMap(4, 4, 0));
  const ViewCorrespondence corr = make_correspondence(identity_transform({4, 4}), {4, 4});
  const SegmentSet segs = segments_from_ids(testutil::random_labels(rng, 4, 4, 3), 3, rng);
  ViewPairInput in{0, &prior, &corr, &segs, {0, 5, 15}};
  const PairSets p = build_pair_sets(std::span(&in, 1), 2);
  ASSERT_EQ(p.anchors.size(), 3u);
  for (size_t a = 0; a < 3; ++a) {
    EXPECT_EQ(p.positives[a].size(), static_cast<size_t>(segs.count()));
    EXPECT_EQ(p.negatives(a), (std::vector<int>{segs.count(), segs.count() + 1}));
  }
}

TEST(PairSets, DisjointCropsKeepPositivesInOwnView) {
  // Left half region 0, right half region 1; view 0 crops the left half,
  // view 1 the right half.
  LabelMap regions(4, 8);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 8; ++c) regions.at(r, c) = c < 4 ? 0 : 1;
  const RegionPrior prior = prior_from(regions);
  ViewTransform left, right;
  left.crop = {0, 0, 4, 4};
  right.crop = {0, 4, 4, 4};
  left.out_size = right.out_size = {4, 4};
  const ViewCorrespondence cl = make_correspondence(left, {4, 8}), cr = make_correspondence(right, {4, 8});
  std::mt19937_64 rng(3);
  LabelMap two(4, 4);
  for (int p = 0; p < 16; ++p) two.ids[p] = p % 4 < 2 ? 0 : 1;
  const SegmentSet s0 = segments_from_ids(two, 3, rng), s1 = segments_from_ids(two, 3, rng);
  const std::vector<ViewPairInput> in = {{0, &prior, &cl, &s0, {0, 3}}, {0, &prior, &cr, &s1, {0, 3}}};
  const PairSets p = build_pair_sets(in, 0);
  ASSERT_EQ(p.anchors.size(), 4u);
  for (size_t a = 0; a < 4; ++a)
    for (int s : p.positives[a]) EXPECT_EQ(p.segments[s].view, p.anchors[a].view);
}

// Exhaustive enumeration oracle over a 2-image batch with 2 views per image
// and a 4-entry bank.
TEST(PairSets, MatchesBruteForceEnumeration) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<RegionPrior> priors;
    for (int i = 0; i < 2; ++i) {
      LabelMap r(6, 6);
      for (int p = 0; p < 36; ++p) r.ids[p] = (p % 6 + trial) % 6 < 3 ? 0 : 1;
      priors.push_back(prior_from(r));
    }
    std::vector<ViewTransform> ts;
    std::vector<ViewCorrespondence> corrs;
    std::vector<SegmentSet> segs;
    AugmentConfig aug;
    aug.out_size = {5, 5};
    for (int v = 0; v < 4; ++v) {
      ts.push_back(sample_transform(trial * 10 + v, aug, {6, 6}));
      corrs.push_back(make_correspondence(ts.back(), {6, 6}));
      segs.push_back(segments_from_ids(testutil::random_labels(rng, 5, 5, 3), 4, rng));
    }
    std::vector<ViewPairInput> in;
    for (int v = 0; v < 4; ++v) in.push_back({v / 2, &priors[v / 2], &corrs[v], &segs[v], {0, 7, 12, 24}});
    const PairSets p = build_pair_sets(in, 4);

    // Oracle.
    struct Seg {
      int image, view, local, region;
      bool valid;
    };
    std::vector<Seg> all;
    std::vector<LabelMap> vr;
    for (int v = 0; v < 4; ++v) {
      LabelMap warped(5, 5);
      for (int k = 0; k < 25; ++k) {
        const int r = std::clamp(static_cast<int>(std::lround(corrs[v].src_row[k])), 0, 5);
        const int c = std::clamp(static_cast<int>(std::lround(corrs[v].src_col[k])), 0, 5);
        warped.ids[k] = priors[v / 2].ids.at(r, c);
      }
      vr.push_back(warped);
      for (int s = 0; s < segs[v].count(); ++s) {
        int votes[2] = {0, 0};
        for (int k = 0; k < 25; ++k)
          if (segs[v].ids.ids[k] == s) ++votes[warped.ids[k]];
        all.push_back({v / 2, v, s, votes[1] > votes[0] ? 1 : 0, segs[v].valid[s] != 0});
      }
    }
    ASSERT_EQ(p.segments.size(), all.size());
    size_t a = 0;
    int excluded = 0;
    for (int v = 0; v < 4; ++v)
      for (int px : in[v].anchors) {
        const int region = vr[v].ids[px];
        std::vector<int> pos, neg;
        for (size_t s = 0; s < all.size(); ++s) {
          if (!all[s].valid) continue;
          if (all[s].image == v / 2 && all[s].region == region) pos.push_back(static_cast<int>(s));
          else neg.push_back(static_cast<int>(s));
        }
        for (int j = 0; j < 4; ++j) neg.push_back(static_cast<int>(all.size()) + j);
        if (pos.empty()) {
          ++excluded;
          continue;
        }
        ASSERT_LT(a, p.anchors.size());
        ASSERT_EQ(p.positives[a], pos);
        ASSERT_EQ(p.negatives(a), neg);
        std::set<int> ps(pos.begin(), pos.end());
        for (int n : p.negatives(a)) ASSERT_FALSE(ps.count(n));
        ++a;
      }
    ASSERT_EQ(a, p.anchors.size());
    ASSERT_EQ(excluded, p.excluded_anchors);
  }
}

TEST(PairSets, AnchorWithoutPositiveIsExcluded) {
  std::mt19937_64 rng(5);
  LabelMap regions(2, 2);
  regions.ids = {0, 0, 1, 1};
  const RegionPrior prior = prior_from(regions);
  const ViewCorrespondence corr = make_correspondence(identity_transform({2, 2}), {2, 2});
  const SegmentSet segs = segments_from_ids(LabelMap(2, 2, 0), 3, rng);  // majority tie -> region 0
  ViewPairInput in{0, &prior, &corr, &segs, {0, 3}};
  const PairSets p = build_pair_sets(std::span(&in, 1), 0);
  EXPECT_EQ(p.anchors.size(), 1u);
  EXPECT_EQ(p.excluded_anchors, 1);
}

TEST(ContrastiveLoss, NoNegativesGivesZero) {
  std::mt19937_64 rng(6);
  const PairSets p = single_anchor_pairs(3, 0);
  const auto r = contrastive_loss(testutil::random_mat(rng, 1, 4), testutil::random_mat(rng, 3, 4), Mat(0, 4), p);
  EXPECT_EQ(r.loss, 0.0);
}

TEST(ContrastiveLoss, OnePositiveOneNegativeScalarOracle) {
  const PairSets p = single_anchor_pairs(1, 1);
  Mat anchor(1, 2), segs(2, 2);
  anchor << 1, 0;
  segs << 1, 0, -1, 0;
  const auto r = contrastive_loss(anchor, segs, Mat(0, 2), p, 10.0);
  EXPECT_NEAR(r.loss, -std::log(std::exp(10.0) / (std::exp(10.0) + std::exp(-10.0))), 1e-15);
}

TEST(ContrastiveLoss, BankEntriesActAsNegatives) {
  PairSets p = single_anchor_pairs(1, 0);
  p.bank_size = 1;
  Mat anchor(1, 2), segs(1, 2), bank(1, 2);
  anchor << 1, 0;
  segs << 0, 1;
  bank << 1, 0;
  const auto r = contrastive_loss(anchor, segs, bank, p, 10.0);
  EXPECT_NEAR(r.loss, -std::log(1.0 / (1.0 + std::exp(10.0))), 1e-12);
}

TEST(ContrastiveLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    PairSets p;
    const int A = 4, S = 6, B = 3, d = 5;
    for (int s = 0; s < S; ++s) p.segments.push_back({0, 0, s, s % 2, true});
    p.bank_size = B;
    for (int a = 0; a < A; ++a) {
      p.anchors.push_back({0, a, a % 2});
      std::vector<int> pos;
      for (int s = 0; s < S; ++s)
        if (s % 2 == a % 2) pos.push_back(s);
      p.positives.push_back(pos);
    }
    const Mat anchors = testutil::random_mat(rng, A, d), segs = testutil::random_mat(rng, S, d);
    const Mat bank = testutil::random_unit_rows(rng, B, d);
    const auto r = contrastive_loss(anchors, segs, bank, p, 10.0);
    const Mat ga = testutil::numeric_gradient([&](const Mat& x) { return contrastive_loss(x, segs, bank, p).loss; }, anchors);
    const Mat gs = testutil::numeric_gradient([&](const Mat& x) { return contrastive_loss(anchors, x, bank, p).loss; }, segs);
    EXPECT_LT(testutil::relative_error(r.grad_anchors, ga), 1e-4);
    EXPECT_LT(testutil::relative_error(r.grad_segments, gs), 1e-4);
  }
}

TEST(ContrastiveLoss, AllAnchorsExcludedIsUndefined) {
  PairSets p;
  p.segments.push_back({0, 0, 0, 0, true});
  EXPECT_THROW(contrastive_loss(Mat(0, 2), Mat::Ones(1, 2), Mat(0, 2), p), DegenerateError);
}

TEST(ContrastiveLoss, LargeKappaStaysFinite) {
  const PairSets p = single_anchor_pairs(1, 2);
  Mat anchor(1, 2), segs(3, 2);
  anchor << 1, 0;
  segs << -1, 0, 1, 0, 1, 0.001;
  for (double kappa : {10.0, 50.0, 100.0}) {
    const auto r = contrastive_loss(anchor, segs, Mat(0, 2), p, kappa);
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_TRUE(r.grad_anchors.allFinite());
    EXPECT_GE(r.loss, 0.0);
  }
}

// Properties: monotone in positive/negative similarity and invariant to
// segment order within S+ / S-.
TEST(ContrastiveLoss, MonotoneAndPermutationInvariantProperty) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int np = 1 + trial % 3, nn = 1 + trial % 4;
    const PairSets p = single_anchor_pairs(np, nn);
    Mat anchor(1, 2);
    anchor << 1, 0;
    Mat segs(np + nn, 2);
    std::vector<double> angles;
    for (int i = 0; i < np + nn; ++i) {
      const double th = std::acos(u(rng) * 0.95);
      segs.row(i) << std::cos(th), std::sin(th);
    }
    const double base = contrastive_loss(anchor, segs, Mat(0, 2), p).loss;
    ASSERT_GE(base, 0.0);

    Mat closer_pos = segs, closer_neg = segs;
    const double th0 = std::acos(segs(0, 0)) * 0.5;
    closer_pos.row(0) << std::cos(th0), std::sin(th0);
    const double thn = std::acos(segs(np, 0)) * 0.5;
    closer_neg.row(np) << std::cos(thn), std::sin(thn);
    ASSERT_LE(contrastive_loss(anchor, closer_pos, Mat(0, 2), p).loss, base + 1e-12);
    ASSERT_GE(contrastive_loss(anchor, closer_neg, Mat(0, 2), p).loss, base - 1e-12);

    Mat shuffled = segs;
    std::vector<int> order(np + nn);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.begin() + np, rng);
    std::shuffle(order.begin() + np, order.end(), rng);
    for (int i = 0; i < np + nn; ++i) shuffled.row(i) = segs.row(order[i]);
    ASSERT_NEAR(contrastive_loss(anchor, shuffled, Mat(0, 2), p).loss, base, 1e-12);
  }
}
