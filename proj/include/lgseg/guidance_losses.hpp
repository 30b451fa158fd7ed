#pragma once

#include <span>

#include "lgseg/types.hpp"

namespace lgseg {

struct SegmentLossResult {
  double loss = 0.0;
  Mat grad;  // w.r.t. the trainable segment embeddings v
};

/// Mean over segments of 1 - cos(v_s, i_s). Rows of `v` and `i` must
/// describe the same segments. `i` is a constant.
SegmentLossResult embedding_consistency_loss(const Mat& v, const Mat& i);

/// Mean over segments of the cross entropy between softmax(sim(v_s, C) / T)
/// and the pseudo-label y_s. C is treated as a constant (no gradient flows
/// into any prototype).
SegmentLossResult semantic_consistency_loss(const Mat& v, const Mat& prototypes, std::span<const int> labels,
                                            double temperature = 1.0);

/// phi(v) = softmax(sim(v, C) / T) for a single segment embedding.
Vec class_distribution(const Eigen::Ref<const RowVec>& v, const Mat& prototypes, double temperature = 1.0);

}  // namespace lgseg
