#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lgseg/types.hpp"
#include "lgseg/vlm_interface.hpp"

namespace lgseg {

/// Label value excluded from every metric count.
inline constexpr int32_t kIgnoreLabel = 255;

// ---------------------------------------------------------------------------
// Inference

/// Per-pixel argmax of cosine similarity to the rows of `class_text`; ties
/// go to the lowest class index.
LabelMap langseg_predict(const PixelEmbeddingMap& emb, const Mat& class_text);
LabelMap langseg_predict(const PixelEmbeddingMap& emb, const std::vector<std::string>& class_names,
                         const TextEncoder& text, const PromptEnsemble& ensemble);

/// Cosine k-NN majority vote. Neighbours are ranked by similarity (ties to
/// the lower training index); vote ties go to the smallest class id. A k
/// larger than the training set is clamped with a warning on stderr.
std::vector<int> knn_classify_segments(const Mat& queries, const Mat& train, std::span<const int> train_labels,
                                       int k = 20);

struct LinearProbeOptions {
  int max_iterations = 5000;
  double l2 = 1e-4;
  double tolerance = 1e-7;  // stop when the gradient max-norm drops below this
};

/// Multinomial logistic regression (softmax + bias) trained with full-batch
/// gradient descent on the mean cross-entropy.
class LinearProbe {
 public:
  /// Rows whose label equals kIgnoreLabel are skipped. Throws DegenerateError
  /// when fewer than two classes remain.
  static LinearProbe fit(const Mat& x, std::span<const int> labels, const LinearProbeOptions& opts = {});

  std::vector<int> predict(const Mat& x) const;
  LabelMap predict(const DenseMap& emb) const;
  Mat decision_function(const Mat& x) const;

  const std::vector<int>& classes() const { return classes_; }
  int iterations() const { return iterations_; }
  bool converged() const { return converged_; }

 private:
  Mat weights_;  // (d + 1) x C, bias in the last row
  std::vector<int> classes_;
  int iterations_ = 0;
  bool converged_ = false;
};

struct PropagationOptions {
  int top_r = 5;
  int radius = 12;          // square search window, in pixels
  double temperature = 0.05;  // softmax temperature of the vote weights
};

/// Label propagation across frames. Every pixel of frame t takes the label
/// with the largest softmax-weighted vote among its top_r most similar
/// reference pixels, where the references are the pixels of frame 0 and
/// frame t-1 inside the search window. Frame 0 keeps `first_mask`.
std::vector<LabelMap> propagate_masks(const std::vector<PixelEmbeddingMap>& frames, const LabelMap& first_mask,
                                      const PropagationOptions& opts = {});

// ---------------------------------------------------------------------------
// Metrics

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes = 0);

  /// Pixels whose gt is kIgnoreLabel are skipped. Labels must lie in
  /// [0, num_classes) otherwise.
  void add(const LabelMap& pred, const LabelMap& gt);
  void add(std::span<const int> pred, std::span<const int> gt);

  int num_classes() const { return n_; }
  int64_t at(int gt, int pred) const { return counts_[static_cast<size_t>(gt) * n_ + pred]; }
  int64_t total() const;

  /// IoU of class c, NaN when c is absent from both prediction and gt.
  double iou(int c) const;
  /// Mean IoU over `classes` present in pred or gt; all classes when empty.
  double miou(std::span<const int> classes = {}) const;
  double pixel_accuracy() const;

 private:
  int n_;
  std::vector<int64_t> counts_;
};

double compute_miou(const LabelMap& pred, const LabelMap& gt, std::span<const int> class_ids);
double compute_pacc(const LabelMap& pred, const LabelMap& gt);
/// Harmonic mean 2ab / (a + b); 0 when a + b = 0.
double compute_hiou(double miou_unknown, double miou_known);
/// Mean row-wise cosine similarity between matching segment embeddings.
double compute_avgsim(const Mat& v, const Mat& i);

struct JfResult {
  std::vector<double> j_per_frame;  // averaged over instances
  std::vector<double> f_per_frame;
  double j_mean = 0.0;
  double f_mean = 0.0;
};

/// Region similarity J (mask IoU) and boundary F-measure per frame,
/// averaged over the instance ids > 0 found in the ground truth. Boundary
/// matches tolerate a distance of ceil(0.008 * image diagonal) pixels.
JfResult compute_jf(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt);

double mask_iou(const LabelMap& pred, const LabelMap& gt, int32_t id);
double boundary_f(const LabelMap& pred, const LabelMap& gt, int32_t id, double tolerance_fraction = 0.008);

struct MetricReport {
  static constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

  std::vector<double> per_class_iou;
  double miou = kUnset;
  double pacc = kUnset;
  double miou_known = kUnset;
  double miou_unknown = kUnset;
  double hiou = kUnset;
  double avgsim = kUnset;
  double j_mean = kUnset;
  double f_mean = kUnset;
};

/// Fills per-class IoU, mIoU and pAcc from a confusion matrix; the known /
/// unknown split and hIoU are added when both class lists are non-empty.
MetricReport make_report(const ConfusionMatrix& cm, std::span<const int> known_ids = {},
                         std::span<const int> unknown_ids = {});

}  // namespace lgseg
