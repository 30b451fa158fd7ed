#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lgseg/types.hpp"

namespace lgseg {

struct NormalizedEmbeddings {
  PixelEmbeddingMap map;
  /// Pixels whose raw norm was below eps; their output is raw / eps, not unit.
  std::vector<int> flagged;
};

/// Divides each pixel vector by max(norm, eps). Requires d >= 2 and finite input.
NormalizedEmbeddings normalize_embeddings(const DenseMap& raw, double eps = 1e-12);

/// Backward pass of normalize_embeddings: maps dL/d(normalized) to dL/d(raw).
Mat normalize_backward(const Mat& raw, const Mat& grad_normalized, double eps = 1e-12);

/// Segment partition plus per-segment renormalized mean embeddings (v_s, or
/// i_s when pooled from encoder features).
struct SegmentSet {
  LabelMap ids;            // compact ids in [0, count())
  std::vector<int32_t> source_ids;  // original id of each compact segment
  Mat embeddings;          // S x d, unit rows (zero for degenerate segments)
  std::vector<int> counts;
  std::vector<double> mean_norms;  // norm of the un-normalized mean
  std::vector<uint8_t> valid;      // 0 when the mean was degenerate (norm < eps)

  int count() const { return static_cast<int>(counts.size()); }
  int num_valid() const;
};

/// Pools `emb` over the segments in `ids`. Ids must be non-negative; they are
/// compacted in increasing order. Segments whose mean has norm < eps keep a
/// zero embedding and are marked invalid.
SegmentSet pool_segments(const DenseMap& emb, const LabelMap& ids, double eps = 1e-8);

/// Same partition as `reference`, pooled from a different feature map. Used
/// to derive encoder segment features i_s from segments of our embeddings.
SegmentSet pool_like(const DenseMap& features, const SegmentSet& reference, double eps = 1e-8);

/// Backward pass of pool_segments: dL/dv (S x d) -> dL/dz (N x d).
Mat pool_backward(const SegmentSet& segs, const Mat& grad_segments, int num_pixels);

struct ClusterOptions {
  int k = 36;
  int iterations = 10;
  uint64_t seed = 0;
};

struct ClusterResult {
  LabelMap ids;
  Mat centroids;  // k x d, unit rows
  /// Sum over pixels of max cosine similarity, after each assignment step.
  std::vector<double> objective_trace;
};

/// Spherical k-means (k-means++ seeding on cosine distance, fixed iteration
/// budget, empty clusters reseeded at the worst-fit pixel). Ties go to the
/// lowest centroid index.
ClusterResult spherical_kmeans(const Mat& points, int height, int width, const ClusterOptions& opts);
LabelMap cluster_to_segments(const PixelEmbeddingMap& emb, const ClusterOptions& opts);

/// Sum over rows of the maximum cosine similarity to its assigned centroid.
double clustering_objective(const Mat& points, const LabelMap& ids);

enum class RegionSource { kSlic, kFile };

struct RegionPrior {
  LabelMap ids;  // contiguous from 0
  RegionSource source = RegionSource::kSlic;

  int count() const;
};

struct SlicOptions {
  int n_regions = 16;
  double compactness = 10.0;  // weight of the spatial term; smaller follows colour more
  int iterations = 10;
};

/// SLIC superpixels in CIELAB with connectivity enforcement; every region
/// is 4-connected and ids are contiguous from 0.
RegionPrior slic_regions(const DenseMap& image, const SlicOptions& opts);

/// Loads an integer region map (.pgm or .lgda). Ids are compacted to be
/// contiguous from 0 (order preserved).
RegionPrior load_region_prior(const std::filesystem::path& path);

/// Relabels ids to 0..n-1 preserving their numeric order. Negative ids are
/// rejected.
LabelMap compact_ids(const LabelMap& ids);

/// True when every id's pixels form a single 4-connected component.
bool regions_are_connected(const LabelMap& ids);

}  // namespace lgseg
