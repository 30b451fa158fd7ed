#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "lgseg/io.hpp"
#include "lgseg/segmentation_core.hpp"
#include "test_util.hpp"

using namespace lgseg;
namespace fs = std::filesystem;

TEST(NormalizeEmbeddings, ThreeFourFive) {
  DenseMap raw(1, 1, 2);
  raw.values << 3, 4;
  const auto out = normalize_embeddings(raw);
  EXPECT_DOUBLE_EQ(out.map.values(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(out.map.values(0, 1), 0.8);
  EXPECT_TRUE(out.flagged.empty());
}

TEST(NormalizeEmbeddings, ZeroVectorStaysZeroAndIsFlagged) {
  DenseMap raw(1, 2, 3);
  raw.values << 0, 0, 0, 1, 2, 2;
  const auto out = normalize_embeddings(raw, 1e-12);
  EXPECT_EQ(out.map.values.row(0).norm(), 0.0);
  EXPECT_EQ(out.flagged, std::vector<int>{0});
  EXPECT_NEAR(out.map.values.row(1).norm(), 1.0, 1e-15);
}

TEST(NormalizeEmbeddings, RandomGridHasUnitNorms) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const DenseMap raw = testutil::random_map(rng, 2, 2, 8);
    const auto out = normalize_embeddings(raw);
    for (int p = 0; p < 4; ++p) {
      ASSERT_NEAR(out.map.values.row(p).norm(), 1.0, 1e-6);
      const RowVec expect = raw.values.row(p) / raw.values.row(p).norm();
      ASSERT_LT((out.map.values.row(p) - expect).cwiseAbs().maxCoeff(), 1e-15);
    }
  }
}

TEST(NormalizeEmbeddings, RejectsNonFiniteAndScalarEmbeddings) {
  DenseMap raw(1, 1, 2);
  raw.values << std::nan(""), 1;
  EXPECT_THROW(normalize_embeddings(raw), NumericError);
  EXPECT_THROW(normalize_embeddings(DenseMap(1, 1, 1)), ShapeError);
}

TEST(NormalizeEmbeddings, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const Mat raw = testutil::random_mat(rng, 5, 4);
  const Mat w = testutil::random_mat(rng, 5, 4);
  auto f = [&](const Mat& x) {
    DenseMap m(5, 1, 4);
    m.values = x;
    return normalize_embeddings(m).map.values.cwiseProduct(w).sum();
  };
  const Mat g = normalize_backward(raw, w);
  EXPECT_LT(testutil::relative_error(g, testutil::numeric_gradient(f, raw)), 1e-6);
}

TEST(PoolSegments, ConstantSegmentReturnsThatVector) {
  DenseMap emb(2, 3, 3);
  RowVec v(3);
  v << 0.0, 0.6, 0.8;
  for (int p = 0; p < 6; ++p) emb.values.row(p) = v;
  const SegmentSet s = pool_segments(emb, LabelMap(2, 3, 7));
  ASSERT_EQ(s.count(), 1);
  EXPECT_LT((s.embeddings.row(0) - v).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(s.counts[0], 6);
  EXPECT_EQ(s.source_ids[0], 7);
}

TEST(PoolSegments, TwoOrthogonalPixels) {
  DenseMap emb(1, 2, 2);
  emb.values << 1, 0, 0, 1;
  const SegmentSet s = pool_segments(emb, LabelMap(1, 2, 0));
  EXPECT_NEAR(s.embeddings(0, 0), 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(s.embeddings(0, 1), 1 / std::sqrt(2.0), 1e-15);
}

TEST(PoolSegments, MatchesBruteForceMean) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 25; ++trial) {
    DenseMap emb(1, 3, 5);
    emb.values = testutil::random_unit_rows(rng, 3, 5);
    const SegmentSet s = pool_segments(emb, LabelMap(1, 3, 0));
    double mean[5] = {0, 0, 0, 0, 0};
    for (int p = 0; p < 3; ++p)
      for (int c = 0; c < 5; ++c) mean[c] += emb.values(p, c) / 3.0;
    double n = 0;
    for (double x : mean) n += x * x;
    n = std::sqrt(n);
    for (int c = 0; c < 5; ++c) ASSERT_NEAR(s.embeddings(0, c), mean[c] / n, 1e-12);
    ASSERT_NEAR(s.mean_norms[0], n, 1e-12);
  }
}

TEST(PoolSegments, AntipodalPixelsGiveInvalidZeroSegment) {
  DenseMap emb(1, 4, 2);
  emb.values << 1, 0, -1, 0, 0, 1, 0, 1;
  LabelMap ids(1, 4);
  ids.ids = {0, 0, 1, 1};
  const SegmentSet s = pool_segments(emb, ids);
  EXPECT_EQ(s.valid, (std::vector<uint8_t>{0, 1}));
  EXPECT_EQ(s.embeddings.row(0).norm(), 0.0);
  EXPECT_EQ(s.num_valid(), 1);
}

TEST(PoolSegments, SizeMismatchAndNegativeIdsThrow) {
  EXPECT_THROW(pool_segments(DenseMap(2, 2, 3), LabelMap(2, 3)), ShapeError);
  LabelMap neg(1, 1, -1);
  EXPECT_THROW(pool_segments(DenseMap(1, 1, 3), neg), ShapeError);
}

// Properties: ids partition the grid, counts sum to H*W, unit embeddings,
// idempotence on maps constant per segment, and backward agreeing with
// finite differences.
TEST(PoolSegments, PartitionAndIdempotenceProperty) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const int h = 3 + trial % 5, w = 2 + trial % 7, d = 2 + trial % 4;
    const LabelMap ids = testutil::random_labels(rng, h, w, 1 + trial % 6);
    DenseMap emb(h, w, d);
    emb.values = testutil::random_unit_rows(rng, h * w, d);
    const SegmentSet s = pool_segments(emb, ids);
    int total = 0;
    for (int c : s.counts) total += c;
    ASSERT_EQ(total, h * w);
    std::set<int32_t> present(ids.ids.begin(), ids.ids.end());
    ASSERT_EQ(static_cast<size_t>(s.count()), present.size());
    for (int i = 0; i < s.count(); ++i)
      if (s.valid[i]) ASSERT_NEAR(s.embeddings.row(i).norm(), 1.0, 1e-5);

    DenseMap flat(h, w, d);
    for (int p = 0; p < h * w; ++p) flat.values.row(p) = s.embeddings.row(s.ids.ids[p]);
    const SegmentSet again = pool_segments(flat, s.ids);
    for (int i = 0; i < s.count(); ++i)
      if (s.valid[i]) ASSERT_LT((again.embeddings.row(i) - s.embeddings.row(i)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(PoolSegments, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  const LabelMap ids = testutil::random_labels(rng, 3, 4, 3);
  const Mat z = testutil::random_mat(rng, 12, 4);
  const SegmentSet s0 = [&] {
    DenseMap m(3, 4, 4);
    m.values = z;
    return pool_segments(m, ids);
  }();
  const Mat w = testutil::random_mat(rng, s0.count(), 4);
  auto f = [&](const Mat& x) {
    DenseMap m(3, 4, 4);
    m.values = x;
    return pool_segments(m, ids).embeddings.cwiseProduct(w).sum();
  };
  const Mat g = pool_backward(s0, w, 12);
  EXPECT_LT(testutil::relative_error(g, testutil::numeric_gradient(f, z)), 1e-6);
}

TEST(PoolLike, UsesReferencePartition) {
  std::mt19937_64 rng(9);
  DenseMap emb(4, 4, 3);
  emb.values = testutil::random_unit_rows(rng, 16, 3);
  const SegmentSet ref = pool_segments(emb, testutil::random_labels(rng, 4, 4, 3));
  const DenseMap feats = testutil::random_map(rng, 4, 4, 6);
  const SegmentSet a = pool_like(feats, ref);
  const SegmentSet b = pool_segments(feats, ref.ids);
  EXPECT_EQ(a.ids, ref.ids);
  EXPECT_EQ(a.embeddings, b.embeddings);
  EXPECT_EQ(a.embeddings.cols(), 6);
}

TEST(Clustering, SeparableHalfPlanes) {
  DenseMap emb(6, 8, 2);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 8; ++c) {
      if (c < 4) emb.pixel(r, c) << 1, 0;
      else emb.pixel(r, c) << 0, 1;
    }
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const LabelMap ids = cluster_to_segments(emb, {2, 10, seed});
    const int32_t left = ids.at(0, 0), right = ids.at(0, 7);
    ASSERT_NE(left, right);
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 8; ++c) ASSERT_EQ(ids.at(r, c), c < 4 ? left : right);
  }
}

TEST(Clustering, KEqualsPixelCountGivesSingletons) {
  std::mt19937_64 rng(10);
  DenseMap emb(3, 3, 4);
  emb.values = testutil::random_unit_rows(rng, 9, 4);
  const LabelMap ids = cluster_to_segments(emb, {9, 10, 1});
  EXPECT_EQ(std::set<int32_t>(ids.ids.begin(), ids.ids.end()).size(), 9u);
}

TEST(Clustering, TooManyClustersIsConfigError) {
  DenseMap emb(2, 2, 2);
  emb.values.setConstant(1);
  EXPECT_THROW(cluster_to_segments(emb, {5, 10, 0}), ConfigError);
}

TEST(Clustering, BeatsRandomAssignments) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Mat pts = testutil::random_unit_rows(rng, 16, 3);
    const ClusterResult res = spherical_kmeans(pts, 4, 4, {3, 10, static_cast<uint64_t>(trial)});
    const double obj = clustering_objective(pts, res.ids);
    for (int r = 0; r < 200; ++r) {
      const LabelMap rand = testutil::random_labels(rng, 4, 4, 3);
      // Oracle: sum of cosines to each random cluster's renormalized mean.
      double ref = 0;
      for (int c = 0; c < 3; ++c) {
        RowVec m = RowVec::Zero(3);
        for (int p = 0; p < 16; ++p)
          if (rand.ids[p] == c) m += pts.row(p);
        if (m.norm() == 0) continue;
        m.normalize();
        for (int p = 0; p < 16; ++p)
          if (rand.ids[p] == c) ref += pts.row(p).dot(m);
      }
      ASSERT_GE(obj + 1e-12, ref);
    }
  }
}

TEST(Clustering, ObjectiveIsMonotoneAndDeterministic) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const Mat pts = testutil::random_unit_rows(rng, 60, 4);
    const ClusterOptions opts{2 + trial % 7, 12, static_cast<uint64_t>(trial)};
    const ClusterResult a = spherical_kmeans(pts, 6, 10, opts);
    const ClusterResult b = spherical_kmeans(pts, 6, 10, opts);
    ASSERT_EQ(a.ids, b.ids);
    for (size_t i = 1; i < a.objective_trace.size(); ++i)
      ASSERT_GE(a.objective_trace[i] + 1e-9, a.objective_trace[i - 1]);
    for (int p = 0; p < 60; ++p) {
      const Eigen::Index best = [&] {
        Eigen::Index k;
        (a.centroids * pts.row(p).transpose()).maxCoeff(&k);
        return k;
      }();
      ASSERT_NEAR(a.centroids.row(a.ids.ids[p]).dot(pts.row(p)), a.centroids.row(best).dot(pts.row(p)), 1e-12);
    }
  }
}

TEST(Slic, UniformImageGivesRoughlyEqualTiles) {
  DenseMap img(24, 24, 3);
  img.values.setConstant(0.5);
  const RegionPrior p = slic_regions(img, {4, 10.0, 10});
  ASSERT_EQ(p.count(), 4);
  std::vector<int> sizes(4, 0);
  for (int32_t v : p.ids.ids) ++sizes[v];
  for (int s : sizes) {
    EXPECT_GE(s, 576 / 4 / 2);
    EXPECT_LE(s, 576 / 4 * 3 / 2);
  }
  EXPECT_TRUE(regions_are_connected(p.ids));
  EXPECT_EQ(p.source, RegionSource::kSlic);
}

TEST(Slic, RegionsRespectColourBoundary) {
  DenseMap img(20, 20, 3);
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 20; ++c) {
      if (c < 9) img.pixel(r, c) << 0.9, 0.1, 0.1;
      else img.pixel(r, c) << 0.1, 0.2, 0.9;
    }
  const RegionPrior p = slic_regions(img, {8, 1.0, 10});
  // Cross-tabulate region id against colour side.
  std::map<int32_t, std::set<int>> sides;
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 20; ++c) sides[p.ids.at(r, c)].insert(c < 9 ? 0 : 1);
  for (const auto& [id, s] : sides) EXPECT_EQ(s.size(), 1u) << "region " << id;
}

// Property: SLIC output is contiguous from 0 and 4-connected on random images.
TEST(Slic, ContiguousConnectedProperty) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 15; ++trial) {
    const DenseMap img = testutil::random_image(rng, 10 + trial, 12 + trial % 5);
    const RegionPrior p = slic_regions(img, {3 + trial % 9, 5.0 + trial, 5});
    std::set<int32_t> ids(p.ids.ids.begin(), p.ids.ids.end());
    ASSERT_EQ(*ids.begin(), 0);
    ASSERT_EQ(*ids.rbegin(), static_cast<int32_t>(ids.size()) - 1);
    ASSERT_TRUE(regions_are_connected(p.ids));
  }
}

TEST(RegionFile, RoundTripAndCompaction) {
  const fs::path dir = fs::temp_directory_path() / "lgseg_region_test";
  fs::create_directories(dir);
  LabelMap ids(2, 3);
  ids.ids = {0, 1, 2, 2, 1, 0};
  io::write_pgm_labels(dir / "r.pgm", ids);
  const RegionPrior a = load_region_prior(dir / "r.pgm");
  EXPECT_EQ(a.ids, ids);
  EXPECT_EQ(a.source, RegionSource::kFile);

  LabelMap sparse(1, 3);
  sparse.ids = {5, 40, 5};
  io::write_label_array(dir / "s.lgda", sparse);
  const RegionPrior b = load_region_prior(dir / "s.lgda");
  EXPECT_EQ(b.ids.ids, (std::vector<int32_t>{0, 1, 0}));

  io::write_text_file(dir / "bad.pgm", "P5\n2 2\n255\n\x01");
  EXPECT_THROW(load_region_prior(dir / "bad.pgm"), IngestionError);
  EXPECT_THROW(load_region_prior(dir / "missing.pgm"), IngestionError);
  fs::remove_all(dir);
}

TEST(RegionFile, ConnectivityCheck) {
  LabelMap ids(1, 3);
  ids.ids = {0, 1, 0};
  EXPECT_FALSE(regions_are_connected(ids));
  ids.ids = {0, 0, 1};
  EXPECT_TRUE(regions_are_connected(ids));
}
