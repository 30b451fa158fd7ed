#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "lgseg/errors.hpp"

namespace lgseg {

/// Row-major dense matrix; one row per pixel / segment / prototype.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

struct Size {
  int height = 0;
  int width = 0;

  int pixels() const { return height * width; }
  bool operator==(const Size&) const = default;
};

/// H x W x C real-valued grid. Pixel (r, c) lives in row r * W + c of
/// `values`, channels along the columns. Images are DenseMaps with three
/// channels in [0, 1].
struct DenseMap {
  int height = 0;
  int width = 0;
  Mat values;

  DenseMap() = default;
  DenseMap(int h, int w, int channels)
      : height(h), width(w), values(Mat::Zero(static_cast<Eigen::Index>(h) * w, channels)) {}

  Size size() const { return {height, width}; }
  int channels() const { return static_cast<int>(values.cols()); }
  int pixels() const { return height * width; }
  bool empty() const { return pixels() == 0; }
  auto pixel(int r, int c) { return values.row(static_cast<Eigen::Index>(r) * width + c); }
  auto pixel(int r, int c) const { return values.row(static_cast<Eigen::Index>(r) * width + c); }
};

/// Dense map whose rows are unit-length embeddings (z_p). The unit-norm
/// invariant is established by normalize_embeddings().
using PixelEmbeddingMap = DenseMap;

/// H x W integer map: segment ids, region ids, class labels or instance ids.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<int32_t> ids;

  LabelMap() = default;
  LabelMap(int h, int w, int32_t fill = 0)
      : height(h), width(w), ids(static_cast<size_t>(h) * w, fill) {}

  Size size() const { return {height, width}; }
  int pixels() const { return height * width; }
  int32_t& at(int r, int c) { return ids[static_cast<size_t>(r) * width + c]; }
  int32_t at(int r, int c) const { return ids[static_cast<size_t>(r) * width + c]; }
  bool operator==(const LabelMap&) const = default;
};

inline void require_same_size(Size a, Size b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": spatial size mismatch (" + std::to_string(a.height) +
                     "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width) + ")");
  }
}

/// Row-wise cosine similarity matrix between the rows of `a` and `b`.
/// Zero rows produce zero similarity.
Mat cosine_matrix(const Mat& a, const Mat& b);

/// Copy of `m` with every row scaled to unit length (zero rows stay zero).
Mat normalized_rows(const Mat& m);

}  // namespace lgseg
