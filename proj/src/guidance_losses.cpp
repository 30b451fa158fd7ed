#include "lgseg/guidance_losses.hpp"

#include <cmath>
#include <string>

namespace lgseg {

namespace {

// d cos(a, b) / d a for a != 0.
RowVec cosine_grad(const Eigen::Ref<const RowVec>& a, const RowVec& b_hat, double a_norm, double cos) {
  return (b_hat - cos * a / a_norm) / a_norm;
}

}  // namespace

SegmentLossResult embedding_consistency_loss(const Mat& v, const Mat& i) {
  if (v.rows() != i.rows() || v.cols() != i.cols())
    throw AlignmentError("embedding consistency: segment sets differ (" + std::to_string(v.rows()) + "x" +
                         std::to_string(v.cols()) + " vs " + std::to_string(i.rows()) + "x" +
                         std::to_string(i.cols()) + ")");
  SegmentLossResult r;
  r.grad = Mat::Zero(v.rows(), v.cols());
  if (v.rows() == 0) return r;
  const double inv = 1.0 / static_cast<double>(v.rows());
  for (Eigen::Index s = 0; s < v.rows(); ++s) {
    const double vn = v.row(s).norm();
    const double in = i.row(s).norm();
    if (vn == 0 || in == 0) {
      r.loss += inv;
      continue;
    }
    const RowVec i_hat = i.row(s) / in;
    const double cos = v.row(s).dot(i_hat) / vn;
    r.loss += (1.0 - cos) * inv;
    r.grad.row(s) = -inv * cosine_grad(v.row(s), i_hat, vn, cos);
  }
  return r;
}

Vec class_distribution(const Eigen::Ref<const RowVec>& v, const Mat& prototypes, double temperature) {
  const Mat c_hat = normalized_rows(prototypes);
  const double vn = v.norm();
  Vec logits = vn > 0 ? Vec(c_hat * v.transpose() / (vn * temperature)) : Vec::Zero(prototypes.rows());
  logits.array() -= logits.maxCoeff();
  logits = logits.array().exp();
  return logits / logits.sum();
}

SegmentLossResult semantic_consistency_loss(const Mat& v, const Mat& prototypes, std::span<const int> labels,
                                            double temperature) {
  if (static_cast<Eigen::Index>(labels.size()) != v.rows())
    throw AlignmentError("semantic consistency: label count != segment count");
  if (prototypes.rows() == 0) throw ShapeError("semantic consistency: empty prototype set");
  if (prototypes.cols() != v.cols()) throw ShapeError("semantic consistency: dimension mismatch");
  if (!(temperature > 0)) throw ConfigError("semantic consistency temperature must be positive");
  SegmentLossResult r;
  r.grad = Mat::Zero(v.rows(), v.cols());
  if (v.rows() == 0) return r;
  const Mat c_hat = normalized_rows(prototypes);
  const double inv = 1.0 / static_cast<double>(v.rows());
  for (Eigen::Index s = 0; s < v.rows(); ++s) {
    const int y = labels[s];
    if (y < 0 || y >= prototypes.rows()) throw ShapeError("semantic consistency: label out of range");
    const double vn = v.row(s).norm();
    if (vn == 0) {
      r.loss += std::log(static_cast<double>(prototypes.rows())) * inv;
      continue;
    }
    const Vec sims = c_hat * v.row(s).transpose() / vn;
    const Vec logits = sims / temperature;
    const double mx = logits.maxCoeff();
    const Vec e = (logits.array() - mx).exp();
    const double z = e.sum();
    r.loss += (std::log(z) + mx - logits[y]) * inv;
    // dL/dsim_l = (p_l - [l == y]) / T
    Vec g = e / z;
    g[y] -= 1.0;
    g /= temperature;
    // sim_l = c_hat_l . v / |v|  =>  d sim_l / dv = (c_hat_l - sim_l v_hat) / |v|
    const RowVec v_hat = v.row(s) / vn;
    const RowVec grad = (g.transpose() * c_hat - g.dot(sims) * v_hat) / vn;
    r.grad.row(s) = inv * grad;
  }
  return r;
}

}  // namespace lgseg
