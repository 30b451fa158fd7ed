#include "lgseg/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace lgseg {

MemoryBank::MemoryBank(int depth) : depth_(depth) {
  if (depth < 0) throw ConfigError("memory bank depth must be >= 0");
}

void MemoryBank::push(const Mat& batch_segments) {
  if (depth_ == 0) return;
  if (!batches_.empty() && batches_.front().cols() != batch_segments.cols())
    throw ShapeError("memory bank: embedding dimension changed");
  batches_.push_back(batch_segments);
  while (static_cast<int>(batches_.size()) > depth_) batches_.pop_front();
}

Mat MemoryBank::snapshot() const {
  if (batches_.empty()) return Mat(0, 0);
  Mat out(size(), batches_.front().cols());
  Eigen::Index row = 0;
  for (const Mat& b : batches_) {
    out.middleRows(row, b.rows()) = b;
    row += b.rows();
  }
  return out;
}

Eigen::Index MemoryBank::size() const {
  Eigen::Index n = 0;
  for (const Mat& b : batches_) n += b.rows();
  return n;
}

void MemoryBank::restore(std::deque<Mat> batches) {
  if (static_cast<int>(batches.size()) > depth_) throw ShapeError("memory bank restore exceeds depth");
  batches_ = std::move(batches);
}

std::vector<int> majority_regions(const SegmentSet& segs, const LabelMap& regions) {
  require_same_size(segs.ids.size(), regions.size(), "majority_regions");
  std::vector<std::map<int32_t, int>> votes(segs.count());
  for (int p = 0; p < regions.pixels(); ++p) ++votes[segs.ids.ids[p]][regions.ids[p]];
  std::vector<int> out(segs.count(), -1);
  for (int s = 0; s < segs.count(); ++s) {
    int best = -1;
    for (const auto& [region, n] : votes[s]) {
      if (n > best) {  // map iterates ascending, so ties keep the lowest id
        best = n;
        out[s] = region;
      }
    }
  }
  return out;
}

std::vector<int> PairSets::negatives(size_t anchor) const {
  std::vector<uint8_t> pos(segments.size(), 0);
  for (int s : positives.at(anchor)) pos[s] = 1;
  std::vector<int> neg;
  for (size_t s = 0; s < segments.size(); ++s)
    if (!pos[s] && segments[s].valid) neg.push_back(static_cast<int>(s));
  for (int j = 0; j < bank_size; ++j) neg.push_back(static_cast<int>(segments.size()) + j);
  return neg;
}

PairSets build_pair_sets(std::span<const ViewPairInput> views, int bank_size) {
  PairSets pairs;
  pairs.bank_size = bank_size;
  std::vector<LabelMap> view_regions;
  view_regions.reserve(views.size());
  for (size_t v = 0; v < views.size(); ++v) {
    const ViewPairInput& in = views[v];
    if (!in.prior || !in.corr || !in.segs) throw ShapeError("build_pair_sets: incomplete view input");
    require_same_size(in.corr->size(), in.segs->ids.size(), "build_pair_sets");
    view_regions.push_back(warp_label_map(in.prior->ids, *in.corr));
    const std::vector<int> majority = majority_regions(*in.segs, view_regions.back());
    for (int s = 0; s < in.segs->count(); ++s) {
      pairs.segments.push_back({in.image, static_cast<int>(v), s, majority[s], in.segs->valid[s] != 0});
    }
  }

  // (image, region) -> positive segment indices.
  std::map<std::pair<int, int>, std::vector<int>> by_region;
  for (size_t s = 0; s < pairs.segments.size(); ++s) {
    const BatchSegment& seg = pairs.segments[s];
    if (seg.valid) by_region[{seg.image, seg.region}].push_back(static_cast<int>(s));
  }

  for (size_t v = 0; v < views.size(); ++v) {
    for (int pixel : views[v].anchors) {
      if (pixel < 0 || pixel >= view_regions[v].pixels())
        throw ShapeError("build_pair_sets: anchor pixel out of range");
      const int region = view_regions[v].ids[pixel];
      auto it = by_region.find({views[v].image, region});
      if (it == by_region.end()) {
        ++pairs.excluded_anchors;
        continue;
      }
      pairs.anchors.push_back({static_cast<int>(v), pixel, region});
      pairs.positives.push_back(it->second);
    }
  }
  return pairs;
}

ContrastiveResult contrastive_loss(const Mat& anchors, const Mat& segments, const Mat& bank,
                                   const PairSets& pairs, double kappa) {
  const Eigen::Index num_anchors = anchors.rows();
  const Eigen::Index num_segments = segments.rows();
  const Eigen::Index num_bank = bank.rows();
  if (num_anchors != static_cast<Eigen::Index>(pairs.anchors.size()))
    throw ShapeError("contrastive_loss: anchor rows do not match pair sets");
  if (num_segments != static_cast<Eigen::Index>(pairs.segments.size()))
    throw ShapeError("contrastive_loss: segment rows do not match pair sets");
  if (num_bank != pairs.bank_size) throw ShapeError("contrastive_loss: bank rows do not match pair sets");
  if (num_anchors == 0) throw DegenerateError("contrastive loss undefined: no anchor has a positive segment");
  const Eigen::Index d = anchors.cols();
  if (segments.cols() != d || (num_bank > 0 && bank.cols() != d))
    throw ShapeError("contrastive_loss: embedding dimension mismatch");

  const Mat a_hat = normalized_rows(anchors);
  Mat keys(num_segments + num_bank, d);
  keys.topRows(num_segments) = normalized_rows(segments);
  if (num_bank > 0) keys.bottomRows(num_bank) = normalized_rows(bank);
  const Mat sims = a_hat * keys.transpose();

  std::vector<uint8_t> included(keys.rows(), 1);
  for (Eigen::Index s = 0; s < num_segments; ++s) included[s] = pairs.segments[s].valid ? 1 : 0;

  Mat grad_sims = Mat::Zero(num_anchors, keys.rows());
  std::vector<uint8_t> is_pos(keys.rows(), 0);
  std::vector<double> e(keys.rows(), 0.0);
  double total = 0;
  for (Eigen::Index a = 0; a < num_anchors; ++a) {
    const std::vector<int>& pos = pairs.positives[a];
    if (pos.empty()) throw DegenerateError("contrastive_loss: anchor with empty positive set");
    for (int s : pos) is_pos[s] = 1;
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < keys.rows(); ++j)
      if (included[j]) m = std::max(m, kappa * sims(a, j));
    double sum_pos = 0, sum_neg = 0;
    for (Eigen::Index j = 0; j < keys.rows(); ++j) {
      if (!included[j]) continue;
      e[j] = std::exp(kappa * sims(a, j) - m);
      if (is_pos[j]) {
        sum_pos += e[j];
      } else {
        sum_neg += e[j];
      }
    }
    total += std::log1p(sum_neg / sum_pos);
    const double sum_all = sum_pos + sum_neg;
    for (Eigen::Index j = 0; j < keys.rows(); ++j) {
      if (!included[j]) continue;
      double g = e[j] / sum_all;
      if (is_pos[j]) g -= e[j] / sum_pos;
      grad_sims(a, j) = kappa * g;
    }
    for (int s : pos) is_pos[s] = 0;
  }

  ContrastiveResult r;
  r.anchors_used = static_cast<int>(num_anchors);
  r.loss = total / num_anchors;
  grad_sims /= static_cast<double>(num_anchors);

  // d sim / d a = (k_hat - sim a_hat) / |a|, and symmetrically for keys.
  const Mat grad_a_hat = grad_sims * keys;
  const Mat grad_k_hat = grad_sims.leftCols(num_segments).transpose() * a_hat;
  auto project = [](const Mat& raw, const Mat& unit, const Mat& g) {
    Mat out(raw.rows(), raw.cols());
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
      const double n = raw.row(i).norm();
      if (n == 0) {
        out.row(i).setZero();
        continue;
      }
      out.row(i) = (g.row(i) - g.row(i).dot(unit.row(i)) * unit.row(i)) / n;
    }
    return out;
  };
  r.grad_anchors = project(anchors, a_hat, grad_a_hat);
  r.grad_segments = project(segments, keys.topRows(num_segments), grad_k_hat);
  return r;
}

}  // namespace lgseg
