#include "lgseg/pixel_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lgseg/segmentation_core.hpp"

namespace lgseg {

void EncoderArch::validate() const {
  if (patch_radius < 0) throw ConfigError("encoder patch_radius must be >= 0");
  if (embed_dim < 2) throw ConfigError("encoder embed_dim must be >= 2");
  for (int h : hidden)
    if (h < 1) throw ConfigError("encoder hidden widths must be positive");
}

PixelEncoder::PixelEncoder(const EncoderArch& arch, uint64_t seed) : arch_(arch) {
  arch_.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  int fan_in = arch_.input_dim();
  std::vector<int> widths = arch_.hidden;
  widths.push_back(arch_.embed_dim);
  for (size_t l = 0; l < widths.size(); ++l) {
    const bool last = l + 1 == widths.size();
    // He init for ReLU layers, Xavier for the linear output layer.
    const double scale = last ? std::sqrt(1.0 / fan_in) : std::sqrt(2.0 / fan_in);
    Mat w(fan_in, widths[l]);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng) * scale;
    params_.push_back(std::move(w));
    params_.push_back(Mat::Zero(1, widths[l]));
    fan_in = widths[l];
  }
}

Mat PixelEncoder::patches(const DenseMap& image) const {
  if (image.channels() != 3) throw ShapeError("PixelEncoder expects an RGB image");
  const int r = arch_.patch_radius;
  Mat x(image.pixels(), arch_.input_dim());
  for (int i = 0; i < image.height; ++i) {
    for (int j = 0; j < image.width; ++j) {
      const Eigen::Index row = static_cast<Eigen::Index>(i) * image.width + j;
      int col = 0;
      for (int di = -r; di <= r; ++di) {
        const int ii = std::clamp(i + di, 0, image.height - 1);
        for (int dj = -r; dj <= r; ++dj) {
          const int jj = std::clamp(j + dj, 0, image.width - 1);
          x.block(row, col, 1, 3) = image.pixel(ii, jj).array() - 0.5;
          col += 3;
        }
      }
    }
  }
  return x;
}

DenseMap PixelEncoder::forward(const DenseMap& image, Cache* cache) const {
  Mat a = patches(image);
  if (cache) {
    cache->activations.clear();
    cache->pre.clear();
  }
  const size_t layers = params_.size() / 2;
  for (size_t l = 0; l < layers; ++l) {
    Mat z = a * params_[2 * l];
    z.rowwise() += params_[2 * l + 1].row(0);
    if (cache) cache->activations.push_back(std::move(a));
    if (l + 1 == layers) {
      DenseMap out;
      out.height = image.height;
      out.width = image.width;
      out.values = std::move(z);
      return out;
    }
    if (cache) cache->pre.push_back(z);
    a = z.cwiseMax(0.0);
  }
  return {};
}

std::vector<Mat> PixelEncoder::backward(const Cache& cache, const Mat& grad_raw) const {
  const size_t layers = params_.size() / 2;
  std::vector<Mat> grads(params_.size());
  Mat g = grad_raw;
  for (size_t l = layers; l-- > 0;) {
    const Mat& a = cache.activations[l];
    grads[2 * l] = a.transpose() * g;
    grads[2 * l + 1] = g.colwise().sum();
    if (l == 0) break;
    g = g * params_[2 * l].transpose();
    g = g.cwiseProduct((cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
  }
  return grads;
}

DenseMap PixelEncoder::embed(const DenseMap& image) const {
  return normalize_embeddings(forward(image)).map;
}

size_t PixelEncoder::num_parameters() const {
  size_t n = 0;
  for (const Mat& p : params_) n += static_cast<size_t>(p.size());
  return n;
}

}  // namespace lgseg
