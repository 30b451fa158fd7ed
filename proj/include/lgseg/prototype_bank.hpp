#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lgseg/types.hpp"

namespace lgseg {

/// L = k + u unit-length class prototypes in the encoder feature space.
/// Rows [0, k) are the fixed known classes, rows [k, L) the learnable
/// unknown classes.
struct PrototypeBank {
  std::vector<std::string> known_names;
  Mat known;    // k x d, never modified after construction
  Mat unknown;  // u x d

  int k() const { return static_cast<int>(known.rows()); }
  int u() const { return static_cast<int>(unknown.rows()); }
  int size() const { return k() + u(); }
  int dim() const { return static_cast<int>(known.rows() ? known.cols() : unknown.cols()); }
  Mat all() const;

  void validate() const;

  // Versioned binary file:
  //   char[4] "LGPB" | u32 version (1) | u32 d | u32 k | u32 u
  //   k x (u32 len, bytes) class names | f64 known[k*d] | f64 unknown[u*d]
  void save(const std::filesystem::path& path) const;
  static PrototypeBank load(const std::filesystem::path& path);

  bool operator==(const PrototypeBank& o) const {
    return known_names == o.known_names && known == o.known && unknown == o.unknown;
  }
};

/// Known-class prototypes: softmax-normalize sim(I, T) across classes for
/// every segment, take each class's top-m segments by that normalized score
/// (ties to the lower segment index), and average their features
/// (renormalized). `text` is k x d, `segments` is n x d.
Mat build_known_prototypes(const Mat& text, const Mat& segments, int m = 32);

/// Indices of the top-m segments per class used by build_known_prototypes.
std::vector<std::vector<int>> top_m_segments(const Mat& text, const Mat& segments, int m);

/// Samples u distinct segment features (without replacement, partial
/// Fisher-Yates driven by mt19937_64(seed)) as unknown prototypes.
Mat init_unknown_prototypes(const Mat& segments, int u = 64, uint64_t seed = 0);
std::vector<int> sample_without_replacement(int n, int u, uint64_t seed);

/// argmax_l sim(feature, c_l); ties to the lowest index.
int pseudo_label(const Eigen::Ref<const RowVec>& feature, const Mat& prototypes);
int pseudo_label(const Eigen::Ref<const RowVec>& feature, const PrototypeBank& bank);
std::vector<int> pseudo_labels(const Mat& features, const Mat& prototypes);

struct UnknownLossResult {
  double loss = 0.0;
  Mat grad_unknown;  // u x d
  int assigned = 0;  // |S_u|
  std::vector<int> occupancy;  // segments per unknown class
};

/// Centroid-update loss for unknown prototypes:
///   L_u = sum_{s in S_u} (1 - sim(c_{y_s}, i_s)) / |S_u|
/// where S_u holds the segments whose label y_s >= k. Gradients flow only
/// into `unknown`. Zero loss (and gradient) when nothing is assigned.
UnknownLossResult unknown_update_loss(const Mat& unknown, const Mat& features, std::span<const int> labels,
                                      int k);

/// Rescales each row of `m` to unit length in place.
void renormalize_rows(Mat& m);

}  // namespace lgseg
