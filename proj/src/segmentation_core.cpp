#include "lgseg/segmentation_core.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <random>
#include <string>

#include "lgseg/io.hpp"

namespace lgseg {

Mat normalized_rows(const Mat& m) {
  Mat out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n > 0) out.row(i) /= n;
  }
  return out;
}

Mat cosine_matrix(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) throw ShapeError("cosine_matrix: dimension mismatch");
  return normalized_rows(a) * normalized_rows(b).transpose();
}

NormalizedEmbeddings normalize_embeddings(const DenseMap& raw, double eps) {
  if (raw.channels() < 2) throw ShapeError("normalize_embeddings: embedding dimension must be >= 2");
  if (!raw.values.allFinite()) throw NumericError("normalize_embeddings: non-finite input");
  NormalizedEmbeddings out;
  out.map = raw;
  for (Eigen::Index i = 0; i < raw.values.rows(); ++i) {
    const double n = raw.values.row(i).norm();
    if (n < eps) out.flagged.push_back(static_cast<int>(i));
    out.map.values.row(i) /= std::max(n, eps);
  }
  return out;
}

Mat normalize_backward(const Mat& raw, const Mat& grad_normalized, double eps) {
  if (raw.rows() != grad_normalized.rows() || raw.cols() != grad_normalized.cols())
    throw ShapeError("normalize_backward: shape mismatch");
  Mat grad(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const double n = raw.row(i).norm();
    if (n < eps) {
      grad.row(i) = grad_normalized.row(i) / eps;
      continue;
    }
    const RowVec y = raw.row(i) / n;
    const double proj = grad_normalized.row(i).dot(y);
    grad.row(i) = (grad_normalized.row(i) - proj * y) / n;
  }
  return grad;
}

int SegmentSet::num_valid() const {
  return static_cast<int>(std::count(valid.begin(), valid.end(), uint8_t{1}));
}

LabelMap compact_ids(const LabelMap& ids) {
  std::map<int32_t, int32_t> remap;
  for (int32_t v : ids.ids) {
    if (v < 0) throw ShapeError("segment/region ids must be non-negative");
    remap.emplace(v, 0);
  }
  int32_t next = 0;
  for (auto& [k, v] : remap) v = next++;
  LabelMap out = ids;
  for (int32_t& v : out.ids) v = remap[v];
  return out;
}

namespace {

SegmentSet pool_impl(const DenseMap& emb, LabelMap compact, std::vector<int32_t> source_ids,
                     double eps) {
  SegmentSet s;
  const int count = static_cast<int>(source_ids.size());
  s.ids = std::move(compact);
  s.source_ids = std::move(source_ids);
  s.embeddings = Mat::Zero(count, emb.channels());
  s.counts.assign(count, 0);
  for (int p = 0; p < emb.pixels(); ++p) {
    const int id = s.ids.ids[p];
    s.embeddings.row(id) += emb.values.row(p);
    ++s.counts[id];
  }
  s.mean_norms.assign(count, 0.0);
  s.valid.assign(count, 0);
  for (int i = 0; i < count; ++i) {
    s.embeddings.row(i) /= static_cast<double>(s.counts[i]);
    const double n = s.embeddings.row(i).norm();
    s.mean_norms[i] = n;
    if (n < eps) {
      s.embeddings.row(i).setZero();
    } else {
      s.embeddings.row(i) /= n;
      s.valid[i] = 1;
    }
  }
  return s;
}

}  // namespace

SegmentSet pool_segments(const DenseMap& emb, const LabelMap& ids, double eps) {
  require_same_size(emb.size(), ids.size(), "pool_segments");
  std::vector<int32_t> present;
  {
    std::map<int32_t, int> seen;
    for (int32_t v : ids.ids) {
      if (v < 0) throw ShapeError("pool_segments: negative segment id");
      seen.emplace(v, 0);
    }
    for (const auto& [k, _] : seen) present.push_back(k);
  }
  return pool_impl(emb, compact_ids(ids), std::move(present), eps);
}

SegmentSet pool_like(const DenseMap& features, const SegmentSet& reference, double eps) {
  require_same_size(features.size(), reference.ids.size(), "pool_like");
  return pool_impl(features, reference.ids, reference.source_ids, eps);
}

Mat pool_backward(const SegmentSet& segs, const Mat& grad_segments, int num_pixels) {
  if (grad_segments.rows() != segs.count()) throw ShapeError("pool_backward: segment count mismatch");
  Mat grad_mean(segs.count(), grad_segments.cols());
  for (int s = 0; s < segs.count(); ++s) {
    if (!segs.valid[s]) {
      grad_mean.row(s).setZero();
      continue;
    }
    const auto v = segs.embeddings.row(s);
    const double proj = grad_segments.row(s).dot(v);
    grad_mean.row(s) = (grad_segments.row(s) - proj * v) / (segs.mean_norms[s] * segs.counts[s]);
  }
  Mat grad(num_pixels, grad_segments.cols());
  for (int p = 0; p < num_pixels; ++p) grad.row(p) = grad_mean.row(segs.ids.ids[p]);
  return grad;
}

// ---------------------------------------------------------------------------
// Spherical k-means

namespace {

void assign(const Mat& sims, std::vector<int32_t>& labels, std::vector<double>& best) {
  const Eigen::Index n = sims.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    int arg = 0;
    double v = sims(i, 0);
    for (Eigen::Index c = 1; c < sims.cols(); ++c) {
      if (sims(i, c) > v) {
        v = sims(i, c);
        arg = static_cast<int>(c);
      }
    }
    labels[i] = arg;
    best[i] = v;
  }
}

}  // namespace

ClusterResult spherical_kmeans(const Mat& points, int height, int width, const ClusterOptions& opts) {
  const Eigen::Index n = points.rows();
  if (n != static_cast<Eigen::Index>(height) * width) throw ShapeError("spherical_kmeans: grid size mismatch");
  if (opts.k < 1) throw ConfigError("cluster count k must be >= 1");
  if (opts.k > n)
    throw ConfigError("cluster count k=" + std::to_string(opts.k) + " exceeds pixel count " +
                      std::to_string(n));
  if (opts.iterations < 0) throw ConfigError("clustering iterations must be >= 0");

  const Mat unit = normalized_rows(points);
  std::mt19937_64 rng(opts.seed);

  // k-means++ seeding with D(x) = 1 - max cos.
  Mat centroids(opts.k, points.cols());
  std::vector<uint8_t> chosen(n, 0);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  Eigen::Index first = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
  for (int c = 0; c < opts.k; ++c) {
    Eigen::Index pick = first;
    if (c > 0) {
      double total = 0;
      for (Eigen::Index i = 0; i < n; ++i) total += chosen[i] ? 0.0 : dist[i];
      if (total > 0) {
        double u = std::uniform_real_distribution<double>(0.0, total)(rng);
        pick = -1;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (chosen[i] || dist[i] <= 0) continue;
          pick = i;
          u -= dist[i];
          if (u <= 0) break;
        }
      } else {
        // Every remaining point coincides with a centre; pick uniformly among the rest.
        const Eigen::Index remaining = n - c;
        Eigen::Index r = std::uniform_int_distribution<Eigen::Index>(0, remaining - 1)(rng);
        for (Eigen::Index i = 0; i < n; ++i) {
          if (chosen[i]) continue;
          if (r-- == 0) {
            pick = i;
            break;
          }
        }
      }
    }
    chosen[pick] = 1;
    centroids.row(c) = unit.row(pick);
    const Vec sims = unit * centroids.row(c).transpose();
    for (Eigen::Index i = 0; i < n; ++i) dist[i] = std::min(dist[i], std::max(0.0, 1.0 - sims[i]));
  }

  ClusterResult result;
  result.ids = LabelMap(height, width);
  std::vector<int32_t>& labels = result.ids.ids;
  std::vector<double> best(n);

  for (int it = 0;; ++it) {
    assign(unit * centroids.transpose(), labels, best);
    double obj = 0;
    for (double b : best) obj += b;
    result.objective_trace.push_back(obj);
    if (it == opts.iterations) break;

    Mat sums = Mat::Zero(opts.k, points.cols());
    std::vector<int> counts(opts.k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[i]) += unit.row(i);
      ++counts[labels[i]];
    }
    std::vector<uint8_t> moved(n, 0);
    for (int c = 0; c < opts.k; ++c) {
      if (counts[c] > 0) {
        const double norm = sums.row(c).norm();
        if (norm > 1e-12) centroids.row(c) = sums.row(c) / norm;
        continue;
      }
      // Empty cluster: reseed at the pixel that fits its centroid worst.
      Eigen::Index worst = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (moved[i]) continue;
        if (worst < 0 || best[i] < best[worst]) worst = i;
      }
      if (worst < 0) continue;
      moved[worst] = 1;
      centroids.row(c) = unit.row(worst);
    }
  }
  result.centroids = centroids;
  return result;
}

LabelMap cluster_to_segments(const PixelEmbeddingMap& emb, const ClusterOptions& opts) {
  return spherical_kmeans(emb.values, emb.height, emb.width, opts).ids;
}

double clustering_objective(const Mat& points, const LabelMap& ids) {
  const Mat unit = normalized_rows(points);
  std::map<int32_t, RowVec> sums;
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    auto [it, inserted] = sums.try_emplace(ids.ids[i], RowVec::Zero(unit.cols()));
    it->second += unit.row(i);
  }
  double obj = 0;
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    const RowVec& s = sums[ids.ids[i]];
    const double n = s.norm();
    if (n > 0) obj += unit.row(i).dot(s) / n;
  }
  return obj;
}

// ---------------------------------------------------------------------------
// Region priors

int RegionPrior::count() const {
  if (ids.ids.empty()) return 0;
  return *std::max_element(ids.ids.begin(), ids.ids.end()) + 1;
}

namespace {

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double kDelta = 6.0 / 29.0;
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3 * kDelta * kDelta) + 4.0 / 29.0;
}

Mat rgb_to_lab(const DenseMap& image) {
  Mat lab(image.pixels(), 3);
  for (int p = 0; p < image.pixels(); ++p) {
    const double r = srgb_to_linear(image.values(p, 0));
    const double g = srgb_to_linear(image.values(p, 1));
    const double b = srgb_to_linear(image.values(p, 2));
    const double x = (0.4124 * r + 0.3576 * g + 0.1805 * b) / 0.95047;
    const double y = 0.2126 * r + 0.7152 * g + 0.0722 * b;
    const double z = (0.0193 * r + 0.1192 * g + 0.9505 * b) / 1.08883;
    const double fx = lab_f(x), fy = lab_f(y), fz = lab_f(z);
    lab(p, 0) = 116 * fy - 16;
    lab(p, 1) = 500 * (fx - fy);
    lab(p, 2) = 200 * (fy - fz);
  }
  return lab;
}

// Relabels 4-connected components of `labels`, merging components smaller
// than `min_size` into the adjacent region with the closest mean colour.
LabelMap enforce_connectivity(const LabelMap& labels, const Mat& lab, int min_size) {
  const int h = labels.height, w = labels.width;
  LabelMap out(h, w, -1);
  std::vector<RowVec> sums;
  std::vector<int> sizes;
  const int dr[4] = {-1, 1, 0, 0};
  const int dc[4] = {0, 0, -1, 1};
  std::vector<int> component;
  for (int start = 0; start < h * w; ++start) {
    if (out.ids[start] >= 0) continue;
    const int32_t orig = labels.ids[start];
    component.clear();
    component.push_back(start);
    out.ids[start] = -2;  // visiting
    for (size_t q = 0; q < component.size(); ++q) {
      const int p = component[q];
      const int r = p / w, c = p % w;
      for (int k = 0; k < 4; ++k) {
        const int rr = r + dr[k], cc = c + dc[k];
        if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
        const int np = rr * w + cc;
        if (out.ids[np] != -1 || labels.ids[np] != orig) continue;
        out.ids[np] = -2;
        component.push_back(np);
      }
    }
    RowVec mean = RowVec::Zero(3);
    for (int p : component) mean += lab.row(p);
    mean /= static_cast<double>(component.size());

    int target = -1;
    if (static_cast<int>(component.size()) < min_size) {
      double best = std::numeric_limits<double>::infinity();
      for (int p : component) {
        const int r = p / w, c = p % w;
        for (int k = 0; k < 4; ++k) {
          const int rr = r + dr[k], cc = c + dc[k];
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          const int nl = out.ids[rr * w + cc];
          if (nl < 0) continue;
          const double d = (sums[nl] / sizes[nl] - mean).squaredNorm();
          if (d < best || (d == best && nl < target)) {
            best = d;
            target = nl;
          }
        }
      }
    }
    if (target < 0) {
      target = static_cast<int>(sizes.size());
      sums.push_back(RowVec::Zero(3));
      sizes.push_back(0);
    }
    for (int p : component) {
      out.ids[p] = target;
      sums[target] += lab.row(p);
      ++sizes[target];
    }
  }
  return out;
}

}  // namespace

RegionPrior slic_regions(const DenseMap& image, const SlicOptions& opts) {
  if (image.empty()) throw ShapeError("slic_regions: empty image");
  if (image.channels() != 3) throw ShapeError("slic_regions: expected an RGB image");
  if (opts.n_regions < 1) throw ConfigError("slic n_regions must be >= 1");
  if (opts.compactness <= 0) throw ConfigError("slic compactness must be positive");
  const int h = image.height, w = image.width;
  const Mat lab = rgb_to_lab(image);

  const int nx = std::max(1, static_cast<int>(std::lround(std::sqrt(opts.n_regions * double(w) / h))));
  const int ny = std::max(1, static_cast<int>(std::lround(double(opts.n_regions) / nx)));
  const double step_y = double(h) / ny, step_x = double(w) / nx;
  const double step = std::sqrt(step_y * step_x);

  struct Center {
    double r, c;
    RowVec color;
  };
  std::vector<Center> centers;
  auto grad_at = [&](int r, int c) {
    const int r0 = std::max(r - 1, 0), r1 = std::min(r + 1, h - 1);
    const int c0 = std::max(c - 1, 0), c1 = std::min(c + 1, w - 1);
    return (lab.row(r1 * w + c) - lab.row(r0 * w + c)).squaredNorm() +
           (lab.row(r * w + c1) - lab.row(r * w + c0)).squaredNorm();
  };
  for (int i = 0; i < ny; ++i) {
    for (int j = 0; j < nx; ++j) {
      int r = std::min(h - 1, static_cast<int>((i + 0.5) * step_y));
      int c = std::min(w - 1, static_cast<int>((j + 0.5) * step_x));
      // Move to the lowest-gradient position in the 3x3 neighbourhood.
      double g = grad_at(r, c);
      int br = r, bc = c;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          const double gg = grad_at(rr, cc);
          if (gg < g) g = gg, br = rr, bc = cc;
        }
      centers.push_back({double(br), double(bc), lab.row(br * w + bc)});
    }
  }

  LabelMap labels(h, w, 0);
  std::vector<double> dist(static_cast<size_t>(h) * w);
  const double spatial_w = (opts.compactness / step) * (opts.compactness / step);
  const int window = static_cast<int>(std::ceil(2 * std::max(step_y, step_x)));
  for (int it = 0; it < opts.iterations; ++it) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (size_t k = 0; k < centers.size(); ++k) {
      const Center& ct = centers[k];
      const int r0 = std::max(0, static_cast<int>(ct.r) - window);
      const int r1 = std::min(h - 1, static_cast<int>(ct.r) + window);
      const int c0 = std::max(0, static_cast<int>(ct.c) - window);
      const int c1 = std::min(w - 1, static_cast<int>(ct.c) + window);
      for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c) {
          const int p = r * w + c;
          const double ds = (r - ct.r) * (r - ct.r) + (c - ct.c) * (c - ct.c);
          const double d = (lab.row(p) - ct.color).squaredNorm() + ds * spatial_w;
          if (d < dist[p]) {
            dist[p] = d;
            labels.ids[p] = static_cast<int32_t>(k);
          }
        }
    }
    std::vector<double> sr(centers.size(), 0), sc(centers.size(), 0);
    std::vector<RowVec> scol(centers.size(), RowVec::Zero(3));
    std::vector<int> cnt(centers.size(), 0);
    for (int p = 0; p < h * w; ++p) {
      const int k = labels.ids[p];
      sr[k] += p / w;
      sc[k] += p % w;
      scol[k] += lab.row(p);
      ++cnt[k];
    }
    for (size_t k = 0; k < centers.size(); ++k) {
      if (cnt[k] == 0) continue;
      centers[k] = {sr[k] / cnt[k], sc[k] / cnt[k], scol[k] / cnt[k]};
    }
  }

  const int min_size = std::max(1, (h * w) / (4 * static_cast<int>(centers.size())));
  RegionPrior prior;
  prior.ids = enforce_connectivity(labels, lab, min_size);
  prior.source = RegionSource::kSlic;
  return prior;
}

RegionPrior load_region_prior(const std::filesystem::path& path) {
  RegionPrior prior;
  try {
    prior.ids = compact_ids(io::read_label_file(path));
  } catch (const ShapeError& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
  if (prior.ids.pixels() == 0) throw IngestionError("empty region prior: " + path.string());
  prior.source = RegionSource::kFile;
  return prior;
}

bool regions_are_connected(const LabelMap& ids) {
  const int h = ids.height, w = ids.width;
  std::vector<uint8_t> seen(ids.ids.size(), 0);
  std::map<int32_t, int> components;
  for (int start = 0; start < h * w; ++start) {
    if (seen[start]) continue;
    const int32_t id = ids.ids[start];
    if (++components[id] > 1) return false;
    std::deque<int> q{start};
    seen[start] = 1;
    while (!q.empty()) {
      const int p = q.front();
      q.pop_front();
      const int r = p / w, c = p % w;
      const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& nb : nbr) {
        if (nb[0] < 0 || nb[0] >= h || nb[1] < 0 || nb[1] >= w) continue;
        const int np = nb[0] * w + nb[1];
        if (seen[np] || ids.ids[np] != id) continue;
        seen[np] = 1;
        q.push_back(np);
      }
    }
  }
  return true;
}

}  // namespace lgseg
