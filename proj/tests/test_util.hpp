#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>

#include "lgseg/types.hpp"

namespace lgseg::testutil {

inline Mat random_mat(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Mat random_unit_rows(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  Mat m = random_mat(rng, rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) m.row(r).normalize();
  return m;
}

inline DenseMap random_map(std::mt19937_64& rng, int h, int w, int c) {
  DenseMap m(h, w, c);
  m.values = random_mat(rng, static_cast<Eigen::Index>(h) * w, c);
  return m;
}

inline DenseMap random_image(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DenseMap m(h, w, 3);
  for (Eigen::Index i = 0; i < m.values.size(); ++i) m.values.data()[i] = u(rng);
  return m;
}

inline LabelMap random_labels(std::mt19937_64& rng, int h, int w, int n) {
  std::uniform_int_distribution<int> u(0, n - 1);
  LabelMap m(h, w);
  for (auto& v : m.ids) v = u(rng);
  return m;
}

/// Central finite-difference gradient of f at x.
inline Mat numeric_gradient(const std::function<double(const Mat&)>& f, Mat x, double h = 1e-6) {
  Mat g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + h;
    const double fp = f(x);
    x.data()[i] = orig - h;
    const double fm = f(x);
    x.data()[i] = orig;
    g.data()[i] = (fp - fm) / (2 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(const Mat& a, const Mat& b, double floor = 1e-8) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

}  // namespace lgseg::testutil
