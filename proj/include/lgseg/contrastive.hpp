#pragma once

#include <deque>
#include <span>
#include <vector>

#include "lgseg/geometry_augment.hpp"
#include "lgseg/segmentation_core.hpp"
#include "lgseg/types.hpp"

namespace lgseg {

/// FIFO cache of segment embeddings from the previous `depth` batches.
/// Entries are plain copies, so nothing pushed here carries gradient.
class MemoryBank {
 public:
  explicit MemoryBank(int depth = 2);

  void push(const Mat& batch_segments);
  /// All cached embeddings, oldest batch first.
  Mat snapshot() const;
  void clear() { batches_.clear(); }

  int depth() const { return depth_; }
  int num_batches() const { return static_cast<int>(batches_.size()); }
  Eigen::Index size() const;
  const std::deque<Mat>& batches() const { return batches_; }
  void restore(std::deque<Mat> batches);

 private:
  int depth_;
  std::deque<Mat> batches_;
};

/// One augmented view entering pair-set construction. `prior` is the region
/// prior of the original image; it is warped into the view with
/// nearest-neighbour sampling through `corr`.
struct ViewPairInput {
  int image = 0;
  const RegionPrior* prior = nullptr;
  const ViewCorrespondence* corr = nullptr;
  const SegmentSet* segs = nullptr;
  std::vector<int> anchors;  // anchor pixel indices within the view
};

struct PairAnchor {
  int view = 0;
  int pixel = 0;
  int region = 0;
};

struct BatchSegment {
  int image = 0;
  int view = 0;
  int local = 0;   // index within the view's SegmentSet
  int region = 0;  // majority region id (ties to the lowest id)
  bool valid = true;
};

/// Positive and negative segment sets for every anchor pixel of a batch.
/// Segments are indexed by their position in `segments`; memory-bank
/// entries follow as indices segments.size() + j. Negatives are stored
/// implicitly: every valid batch segment that is not a positive, plus the
/// whole bank.
struct PairSets {
  std::vector<PairAnchor> anchors;  // only anchors with a non-empty S+
  std::vector<std::vector<int>> positives;
  std::vector<BatchSegment> segments;
  int bank_size = 0;
  int excluded_anchors = 0;

  std::vector<int> negatives(size_t anchor) const;
};

PairSets build_pair_sets(std::span<const ViewPairInput> views, int bank_size);

/// Majority region of every segment of `segs` under `regions` (same grid).
std::vector<int> majority_regions(const SegmentSet& segs, const LabelMap& regions);

struct ContrastiveResult {
  double loss = 0.0;
  Mat grad_anchors;   // A x d, w.r.t. the anchor embeddings passed in
  Mat grad_segments;  // S x d, w.r.t. the batch segment embeddings passed in
  int anchors_used = 0;
};

/// Pixel-segment contrastive loss, averaged over anchors:
///   L(p) = -log( sum_{S+} exp(k sim(z_p, v_s)) / sum_{S+ u S-} exp(k sim(z_p, v_s)) )
/// with cosine similarity. Row a of `anchors` is the embedding of
/// pairs.anchors[a]; `segments` rows follow pairs.segments; `bank` rows are
/// constants.
ContrastiveResult contrastive_loss(const Mat& anchors, const Mat& segments, const Mat& bank,
                                   const PairSets& pairs, double kappa = 10.0);

}  // namespace lgseg
