#include "lgseg/eval_suite.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>

namespace lgseg {

LabelMap langseg_predict(const PixelEmbeddingMap& emb, const Mat& class_text) {
  if (class_text.rows() == 0) throw ConfigError("language-driven segmentation needs at least one class");
  if (class_text.cols() != emb.channels())
    throw AlignmentError("class text dimension " + std::to_string(class_text.cols()) +
                         " does not match embedding dimension " + std::to_string(emb.channels()));
  // Dividing by the pixel norm does not change the argmax, so only the
  // class vectors are normalized.
  const Mat t = normalized_rows(class_text);
  const Mat scores = emb.values * t.transpose();
  LabelMap out(emb.height, emb.width);
  for (Eigen::Index p = 0; p < scores.rows(); ++p) {
    int best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c)
      if (scores(p, c) > scores(p, best)) best = static_cast<int>(c);
    out.ids[p] = best;
  }
  return out;
}

LabelMap langseg_predict(const PixelEmbeddingMap& emb, const std::vector<std::string>& class_names,
                         const TextEncoder& text, const PromptEnsemble& ensemble) {
  if (class_names.empty()) throw ConfigError("language-driven segmentation needs at least one class");
  return langseg_predict(emb, encode_class_texts(class_names, ensemble, text));
}

std::vector<int> knn_classify_segments(const Mat& queries, const Mat& train, std::span<const int> train_labels,
                                       int k) {
  if (train.rows() == 0) throw ConfigError("k-NN needs a non-empty training set");
  if (static_cast<Eigen::Index>(train_labels.size()) != train.rows())
    throw ShapeError("k-NN: " + std::to_string(train_labels.size()) + " labels for " +
                     std::to_string(train.rows()) + " training segments");
  if (k < 1) throw ConfigError("k-NN: k must be >= 1");
  if (queries.rows() && queries.cols() != train.cols()) throw AlignmentError("k-NN: dimension mismatch");
  if (k > train.rows()) {
    std::cerr << "warning: k-NN k=" << k << " exceeds the training set size " << train.rows() << "; using k="
              << train.rows() << "\n";
    k = static_cast<int>(train.rows());
  }
  const Mat sims = cosine_matrix(queries, train);
  std::vector<int> out(queries.rows());
  std::vector<int> order(train.rows());
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
      if (sims(q, a) != sims(q, b)) return sims(q, a) > sims(q, b);
      return a < b;
    });
    std::map<int, int> votes;
    for (int j = 0; j < k; ++j) ++votes[train_labels[order[j]]];
    int best = votes.begin()->first, best_count = votes.begin()->second;
    for (const auto& [label, count] : votes)
      if (count > best_count) best = label, best_count = count;
    out[q] = best;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear probe

namespace {

Mat with_bias(const Mat& x) {
  Mat out(x.rows(), x.cols() + 1);
  out.leftCols(x.cols()) = x;
  out.col(x.cols()).setOnes();
  return out;
}

void softmax_rows(Mat& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - m).exp();
    logits.row(r) /= logits.row(r).sum();
  }
}

}  // namespace

LinearProbe LinearProbe::fit(const Mat& x, std::span<const int> labels, const LinearProbeOptions& opts) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows())
    throw ShapeError("linear probe: " + std::to_string(labels.size()) + " labels for " + std::to_string(x.rows()) +
                     " samples");
  std::vector<int> rows;
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != kIgnoreLabel) rows.push_back(static_cast<int>(i));
  LinearProbe probe;
  for (int r : rows) probe.classes_.push_back(labels[r]);
  std::sort(probe.classes_.begin(), probe.classes_.end());
  probe.classes_.erase(std::unique(probe.classes_.begin(), probe.classes_.end()), probe.classes_.end());
  if (probe.classes_.size() < 2)
    throw DegenerateError("linear probe needs at least two classes in the training labels, got " +
                          std::to_string(probe.classes_.size()));

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const int c = static_cast<int>(probe.classes_.size());
  Mat xb(n, x.cols() + 1);
  Mat y = Mat::Zero(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    xb.row(i).head(x.cols()) = x.row(rows[i]);
    xb(i, x.cols()) = 1.0;
    const auto it = std::lower_bound(probe.classes_.begin(), probe.classes_.end(), labels[rows[i]]);
    y(i, it - probe.classes_.begin()) = 1.0;
  }
  if (!xb.allFinite()) throw NumericError("linear probe: non-finite training features");

  // Step size 1/L with L an upper bound on the Hessian's largest eigenvalue.
  const double lipschitz = 0.5 * xb.rowwise().squaredNorm().mean() + opts.l2;
  const double step = 1.0 / lipschitz;
  probe.weights_ = Mat::Zero(xb.cols(), c);
  for (probe.iterations_ = 0; probe.iterations_ < opts.max_iterations; ++probe.iterations_) {
    Mat p = xb * probe.weights_;
    softmax_rows(p);
    Mat grad = xb.transpose() * (p - y) / static_cast<double>(n);
    grad.topRows(x.cols()) += opts.l2 * probe.weights_.topRows(x.cols());
    if (grad.cwiseAbs().maxCoeff() < opts.tolerance) {
      probe.converged_ = true;
      break;
    }
    probe.weights_ -= step * grad;
  }
  return probe;
}

Mat LinearProbe::decision_function(const Mat& x) const {
  if (x.cols() + 1 != weights_.rows()) throw AlignmentError("linear probe: feature dimension mismatch");
  return with_bias(x) * weights_;
}

std::vector<int> LinearProbe::predict(const Mat& x) const {
  const Mat scores = decision_function(x);
  std::vector<int> out(x.rows());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c)
      if (scores(r, c) > scores(r, best)) best = c;
    out[r] = classes_[best];
  }
  return out;
}

LabelMap LinearProbe::predict(const DenseMap& emb) const {
  LabelMap out(emb.height, emb.width);
  const auto labels = predict(emb.values);
  std::copy(labels.begin(), labels.end(), out.ids.begin());
  return out;
}

// ---------------------------------------------------------------------------
// Mask propagation

std::vector<LabelMap> propagate_masks(const std::vector<PixelEmbeddingMap>& frames, const LabelMap& first_mask,
                                      const PropagationOptions& opts) {
  if (frames.size() < 2) throw ConfigError("mask propagation needs at least two frames");
  if (opts.top_r < 1 || opts.radius < 0 || !(opts.temperature > 0))
    throw ConfigError("mask propagation: top_r >= 1, radius >= 0 and temperature > 0 required");
  const Size size = frames.front().size();
  for (const auto& f : frames) require_same_size(size, f.size(), "propagate_masks frames");
  require_same_size(size, first_mask.size(), "propagate_masks first mask");

  std::vector<LabelMap> out{first_mask};
  const bool empty = std::all_of(first_mask.ids.begin(), first_mask.ids.end(), [](int32_t v) { return v == 0; });
  if (empty) {
    for (size_t t = 1; t < frames.size(); ++t) out.emplace_back(size.height, size.width, 0);
    return out;
  }

  const int h = size.height, w = size.width;
  const Mat ref0 = normalized_rows(frames.front().values);
  Mat prev = ref0;
  struct Cand {
    double sim;
    int frame;  // 0 = first frame, 1 = previous frame
    int index;
  };
  std::vector<Cand> cands;
  std::map<int32_t, double> score;
  for (size_t t = 1; t < frames.size(); ++t) {
    const Mat cur = normalized_rows(frames[t].values);
    const LabelMap& prev_mask = out.back();
    LabelMap mask(h, w);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const auto q = cur.row(static_cast<Eigen::Index>(r) * w + c);
        cands.clear();
        for (int rr = std::max(0, r - opts.radius); rr <= std::min(h - 1, r + opts.radius); ++rr) {
          for (int cc = std::max(0, c - opts.radius); cc <= std::min(w - 1, c + opts.radius); ++cc) {
            const int idx = rr * w + cc;
            cands.push_back({q.dot(ref0.row(idx)), 0, idx});
            if (t > 1) cands.push_back({q.dot(prev.row(idx)), 1, idx});
          }
        }
        const size_t r_eff = std::min<size_t>(opts.top_r, cands.size());
        std::partial_sort(cands.begin(), cands.begin() + r_eff, cands.end(), [](const Cand& a, const Cand& b) {
          if (a.sim != b.sim) return a.sim > b.sim;
          if (a.frame != b.frame) return a.frame < b.frame;
          return a.index < b.index;
        });
        score.clear();
        const double top = cands.front().sim;
        for (size_t j = 0; j < r_eff; ++j) {
          const int32_t label = cands[j].frame == 0 ? first_mask.ids[cands[j].index] : prev_mask.ids[cands[j].index];
          score[label] += std::exp((cands[j].sim - top) / opts.temperature);
        }
        int32_t best = score.begin()->first;
        double best_score = score.begin()->second;
        for (const auto& [label, s] : score)
          if (s > best_score) best = label, best_score = s;
        mask.at(r, c) = best;
      }
    }
    out.push_back(std::move(mask));
    prev = cur;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

ConfusionMatrix::ConfusionMatrix(int num_classes) : n_(num_classes), counts_(static_cast<size_t>(n_) * n_, 0) {
  if (num_classes < 0) throw ConfigError("confusion matrix: negative class count");
}

void ConfusionMatrix::add(std::span<const int> pred, std::span<const int> gt) {
  if (pred.size() != gt.size())
    throw ShapeError("confusion matrix: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(gt.size()) + " gt labels");
  for (size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == kIgnoreLabel) continue;
    if (gt[i] < 0 || gt[i] >= n_) throw ConfigError("gt label " + std::to_string(gt[i]) + " outside class range");
    if (pred[i] < 0 || pred[i] >= n_)
      throw ConfigError("predicted label " + std::to_string(pred[i]) + " outside class range");
    ++counts_[static_cast<size_t>(gt[i]) * n_ + pred[i]];
  }
}

void ConfusionMatrix::add(const LabelMap& pred, const LabelMap& gt) {
  require_same_size(pred.size(), gt.size(), "confusion matrix");
  add(std::span<const int>(pred.ids), std::span<const int>(gt.ids));
}

int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), int64_t{0}); }

double ConfusionMatrix::iou(int c) const {
  int64_t tp = at(c, c), row = 0, col = 0;
  for (int j = 0; j < n_; ++j) {
    row += at(c, j);
    col += at(j, c);
  }
  const int64_t uni = row + col - tp;
  if (uni == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(tp) / static_cast<double>(uni);
}

double ConfusionMatrix::miou(std::span<const int> classes) const {
  if (total() == 0) throw UndefinedMetricError("mIoU undefined: no valid pixels");
  std::vector<int> all;
  if (classes.empty()) {
    all.resize(n_);
    std::iota(all.begin(), all.end(), 0);
    classes = all;
  }
  double sum = 0.0;
  int present = 0;
  for (int c : classes) {
    if (c < 0 || c >= n_) throw ConfigError("mIoU: class id " + std::to_string(c) + " outside class range");
    const double v = iou(c);
    if (std::isnan(v)) continue;
    sum += v;
    ++present;
  }
  if (present == 0) throw UndefinedMetricError("mIoU undefined: none of the requested classes occur");
  return sum / present;
}

double ConfusionMatrix::pixel_accuracy() const {
  const int64_t n = total();
  if (n == 0) throw UndefinedMetricError("pixel accuracy undefined: no valid pixels");
  int64_t correct = 0;
  for (int c = 0; c < n_; ++c) correct += at(c, c);
  return static_cast<double>(correct) / static_cast<double>(n);
}

namespace {

int label_range(const LabelMap& pred, const LabelMap& gt) {
  int32_t m = -1;
  for (int32_t v : pred.ids) m = std::max(m, v);
  for (int32_t v : gt.ids)
    if (v != kIgnoreLabel) m = std::max(m, v);
  return m + 1;
}

}  // namespace

double compute_miou(const LabelMap& pred, const LabelMap& gt, std::span<const int> class_ids) {
  require_same_size(pred.size(), gt.size(), "compute_miou");
  int n = label_range(pred, gt);
  for (int c : class_ids) n = std::max(n, c + 1);
  ConfusionMatrix cm(n);
  cm.add(pred, gt);
  return cm.miou(class_ids);
}

double compute_pacc(const LabelMap& pred, const LabelMap& gt) {
  require_same_size(pred.size(), gt.size(), "compute_pacc");
  ConfusionMatrix cm(label_range(pred, gt));
  cm.add(pred, gt);
  return cm.pixel_accuracy();
}

double compute_hiou(double a, double b) {
  if (!std::isfinite(a) || !std::isfinite(b) || a < 0 || b < 0)
    throw UndefinedMetricError("hIoU needs finite non-negative inputs");
  if (a + b == 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

double compute_avgsim(const Mat& v, const Mat& i) {
  if (v.rows() != i.rows() || v.cols() != i.cols())
    throw AlignmentError("avgsim: " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) + " vs " +
                         std::to_string(i.rows()) + "x" + std::to_string(i.cols()));
  if (v.rows() == 0) throw UndefinedMetricError("avgsim undefined: no segments");
  return cosine_matrix(v, i).diagonal().mean();
}

namespace {

std::vector<uint8_t> binary_mask(const LabelMap& m, int32_t id) {
  std::vector<uint8_t> out(m.ids.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = m.ids[i] == id;
  return out;
}

std::vector<uint8_t> boundary(const std::vector<uint8_t>& mask, int h, int w) {
  std::vector<uint8_t> b(mask.size(), 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!mask[r * w + c]) continue;
      // Outside the frame counts as background.
      const bool edge = r == 0 || r + 1 == h || c == 0 || c + 1 == w || !mask[(r - 1) * w + c] ||
                        !mask[(r + 1) * w + c] || !mask[r * w + c - 1] || !mask[r * w + c + 1];
      b[r * w + c] = edge;
    }
  return b;
}

std::vector<uint8_t> dilate(const std::vector<uint8_t>& m, int h, int w, int radius) {
  std::vector<uint8_t> out(m.size(), 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!m[r * w + c]) continue;
      for (int dr = -radius; dr <= radius; ++dr)
        for (int dc = -radius; dc <= radius; ++dc) {
          if (dr * dr + dc * dc > radius * radius) continue;
          const int rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < h && cc >= 0 && cc < w) out[rr * w + cc] = 1;
        }
    }
  return out;
}

}  // namespace

double mask_iou(const LabelMap& pred, const LabelMap& gt, int32_t id) {
  require_same_size(pred.size(), gt.size(), "mask_iou");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < gt.ids.size(); ++i) {
    const bool p = pred.ids[i] == id, g = gt.ids[i] == id;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double boundary_f(const LabelMap& pred, const LabelMap& gt, int32_t id, double tolerance_fraction) {
  require_same_size(pred.size(), gt.size(), "boundary_f");
  const int h = gt.height, w = gt.width;
  const int radius = static_cast<int>(std::ceil(tolerance_fraction * std::hypot(h, w)));
  const auto pb = boundary(binary_mask(pred, id), h, w);
  const auto gb = boundary(binary_mask(gt, id), h, w);
  const auto pd = dilate(pb, h, w, radius);
  const auto gd = dilate(gb, h, w, radius);
  int64_t np = 0, ng = 0, mp = 0, mg = 0;
  for (size_t i = 0; i < pb.size(); ++i) {
    np += pb[i];
    ng += gb[i];
    mp += pb[i] && gd[i];
    mg += gb[i] && pd[i];
  }
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const double precision = static_cast<double>(mp) / np, recall = static_cast<double>(mg) / ng;
  return precision + recall == 0 ? 0.0 : 2 * precision * recall / (precision + recall);
}

JfResult compute_jf(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt) {
  if (pred.size() != gt.size())
    throw ShapeError("J/F: " + std::to_string(pred.size()) + " predicted vs " + std::to_string(gt.size()) +
                     " gt frames");
  if (gt.empty()) throw UndefinedMetricError("J/F undefined: no frames");
  std::vector<int32_t> ids;
  for (const auto& g : gt)
    for (int32_t v : g.ids)
      if (v > 0 && v != kIgnoreLabel) ids.push_back(v);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.empty()) throw UndefinedMetricError("J/F undefined: gt has no instances");
  JfResult res;
  for (size_t t = 0; t < gt.size(); ++t) {
    double j = 0, f = 0;
    for (int32_t id : ids) {
      j += mask_iou(pred[t], gt[t], id);
      f += boundary_f(pred[t], gt[t], id);
    }
    res.j_per_frame.push_back(j / ids.size());
    res.f_per_frame.push_back(f / ids.size());
  }
  res.j_mean = std::accumulate(res.j_per_frame.begin(), res.j_per_frame.end(), 0.0) / gt.size();
  res.f_mean = std::accumulate(res.f_per_frame.begin(), res.f_per_frame.end(), 0.0) / gt.size();
  return res;
}

MetricReport make_report(const ConfusionMatrix& cm, std::span<const int> known_ids, std::span<const int> unknown_ids) {
  MetricReport r;
  for (int c = 0; c < cm.num_classes(); ++c) r.per_class_iou.push_back(cm.iou(c));
  r.miou = cm.miou();
  r.pacc = cm.pixel_accuracy();
  if (!known_ids.empty() && !unknown_ids.empty()) {
    r.miou_known = cm.miou(known_ids);
    r.miou_unknown = cm.miou(unknown_ids);
    r.hiou = compute_hiou(r.miou_unknown, r.miou_known);
  }
  return r;
}

}  // namespace lgseg
