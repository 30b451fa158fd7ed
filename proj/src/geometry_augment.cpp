#include "lgseg/geometry_augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace lgseg {

namespace {

void check_range(double lo, double hi, const char* name) {
  if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi))
    throw ConfigError(std::string("augmentation range '") + name + "' is invalid (min > max)");
}

void check_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0))
    throw ConfigError(std::string("augmentation probability '") + name + "' must lie in [0, 1]");
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool coin(std::mt19937_64& rng, double p) {
  // Always consume one draw so later fields do not shift with p.
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return u < p;
}

// Samples the source location `coord` (continuous, pixel centres at integers)
// with edge replication.
void sample_bilinear(const DenseMap& map, double r, double c, Eigen::Ref<RowVec> out) {
  const double rr = std::clamp(r, 0.0, static_cast<double>(map.height - 1));
  const double cc = std::clamp(c, 0.0, static_cast<double>(map.width - 1));
  const int r0 = static_cast<int>(std::floor(rr));
  const int c0 = static_cast<int>(std::floor(cc));
  const int r1 = std::min(r0 + 1, map.height - 1);
  const int c1 = std::min(c0 + 1, map.width - 1);
  const double fr = rr - r0;
  const double fc = cc - c0;
  out = (1 - fr) * ((1 - fc) * map.pixel(r0, c0) + fc * map.pixel(r0, c1)) +
        fr * ((1 - fc) * map.pixel(r1, c0) + fc * map.pixel(r1, c1));
}

int nearest_index(double coord, int extent) {
  // Round half up, then clamp into the grid.
  const int i = static_cast<int>(std::floor(coord + 0.5));
  return std::clamp(i, 0, extent - 1);
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0 ? d / mx : 0.0;
  if (d <= 0) {
    h = 0;
    return;
  }
  if (mx == r) {
    h = std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    h = (b - r) / d + 2.0;
  } else {
    h = (r - g) / d + 4.0;
  }
  h /= 6.0;
  if (h < 0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = (h - std::floor(h)) * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s);
  const double q = v * (1 - s * f);
  const double t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

DenseMap gaussian_blur(const DenseMap& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  DenseMap tmp(img.height, img.width, img.channels());
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      for (int i = -radius; i <= radius; ++i) {
        const int cc = std::clamp(c + i, 0, img.width - 1);
        tmp.pixel(r, c) += kernel[i + radius] * img.pixel(r, cc);
      }
  DenseMap out(img.height, img.width, img.channels());
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      for (int i = -radius; i <= radius; ++i) {
        const int rr = std::clamp(r + i, 0, img.height - 1);
        out.pixel(r, c) += kernel[i + radius] * tmp.pixel(rr, c);
      }
  return out;
}

}  // namespace

void AugmentConfig::validate() const {
  check_range(scale_min, scale_max, "scale");
  if (scale_min <= 0.0 || scale_max > 1.0) throw ConfigError("augmentation scale must lie in (0, 1]");
  check_range(ratio_min, ratio_max, "ratio");
  if (ratio_min <= 0.0) throw ConfigError("augmentation ratio must be positive");
  check_prob(flip_prob, "flip_prob");
  check_prob(jitter_prob, "jitter_prob");
  check_prob(blur_prob, "blur_prob");
  if (brightness < 0 || contrast < 0 || saturation < 0 || brightness >= 1 || contrast >= 1 ||
      saturation >= 1)
    throw ConfigError("colour jitter strengths must lie in [0, 1)");
  if (hue < 0 || hue > 0.5) throw ConfigError("hue jitter must lie in [0, 0.5]");
  check_range(blur_sigma_min, blur_sigma_max, "blur_sigma");
  if (blur_sigma_min < 0) throw ConfigError("blur sigma must be non-negative");
  if (out_size.height < 0 || out_size.width < 0 || (out_size.height == 0) != (out_size.width == 0))
    throw ConfigError("view out_size must be both positive or both zero");
}

ViewTransform identity_transform(Size image_size) {
  ViewTransform t;
  t.crop = {0, 0, image_size.height, image_size.width};
  t.out_size = image_size;
  return t;
}

ViewTransform sample_transform(uint64_t seed, const AugmentConfig& config, Size image_size) {
  config.validate();
  if (image_size.height <= 0 || image_size.width <= 0)
    throw ConfigError("sample_transform: image size must be positive");
  std::mt19937_64 rng(seed);
  const double area = static_cast<double>(image_size.pixels());

  ViewTransform t;
  t.out_size = config.out_size.height > 0 ? config.out_size : image_size;

  // Random-resized-crop: up to 10 attempts, then fall back to a centred crop
  // of the largest admissible aspect ratio.
  bool found = false;
  for (int attempt = 0; attempt < 10 && !found; ++attempt) {
    const double target = area * uniform(rng, config.scale_min, config.scale_max);
    const double log_ratio = uniform(rng, std::log(config.ratio_min), std::log(config.ratio_max));
    const double ratio = std::exp(log_ratio);
    const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (w < 1 || h < 1 || w > image_size.width || h > image_size.height) continue;
    const int top = static_cast<int>(std::uniform_int_distribution<int>(0, image_size.height - h)(rng));
    const int left = static_cast<int>(std::uniform_int_distribution<int>(0, image_size.width - w)(rng));
    t.crop = {top, left, h, w};
    found = true;
  }
  if (!found) {
    const double in_ratio = static_cast<double>(image_size.width) / image_size.height;
    int w = image_size.width;
    int h = image_size.height;
    if (in_ratio < config.ratio_min) {
      h = static_cast<int>(std::lround(w / config.ratio_min));
    } else if (in_ratio > config.ratio_max) {
      w = static_cast<int>(std::lround(h * config.ratio_max));
    }
    h = std::clamp(h, 1, image_size.height);
    w = std::clamp(w, 1, image_size.width);
    t.crop = {(image_size.height - h) / 2, (image_size.width - w) / 2, h, w};
  }

  t.flip_h = coin(rng, config.flip_prob);

  const bool jitter = coin(rng, config.jitter_prob);
  const double b = uniform(rng, 1 - config.brightness, 1 + config.brightness);
  const double c = uniform(rng, 1 - config.contrast, 1 + config.contrast);
  const double s = uniform(rng, 1 - config.saturation, 1 + config.saturation);
  const double h = uniform(rng, -config.hue, config.hue);
  if (jitter) t.photometric = {b, c, s, h, 0.0};

  const bool blur = coin(rng, config.blur_prob);
  const double sigma = uniform(rng, config.blur_sigma_min, config.blur_sigma_max);
  if (blur) t.photometric.blur_sigma = sigma;
  return t;
}

ViewCorrespondence make_correspondence(const ViewTransform& t, Size source_size) {
  const CropRect& cr = t.crop;
  if (cr.top < 0 || cr.left < 0 || cr.height <= 0 || cr.width <= 0 ||
      cr.top + cr.height > source_size.height || cr.left + cr.width > source_size.width)
    throw ShapeError("crop rectangle lies outside the source image");
  if (t.out_size.height <= 0 || t.out_size.width <= 0) throw ShapeError("view size must be positive");

  ViewCorrespondence corr;
  corr.height = t.out_size.height;
  corr.width = t.out_size.width;
  const size_t n = static_cast<size_t>(corr.height) * corr.width;
  corr.src_row.resize(n);
  corr.src_col.resize(n);
  corr.valid.assign(n, 1);
  const double sy = static_cast<double>(cr.height) / corr.height;
  const double sx = static_cast<double>(cr.width) / corr.width;
  for (int i = 0; i < corr.height; ++i) {
    for (int j = 0; j < corr.width; ++j) {
      const int jj = t.flip_h ? corr.width - 1 - j : j;
      const size_t k = static_cast<size_t>(i) * corr.width + j;
      corr.src_row[k] = cr.top + (i + 0.5) * sy - 0.5;
      corr.src_col[k] = cr.left + (jj + 0.5) * sx - 0.5;
    }
  }
  return corr;
}

std::pair<double, double> source_to_view(const ViewTransform& t, double src_row, double src_col) {
  const CropRect& cr = t.crop;
  const double i = (src_row - cr.top + 0.5) * t.out_size.height / cr.height - 0.5;
  double j = (src_col - cr.left + 0.5) * t.out_size.width / cr.width - 0.5;
  if (t.flip_h) j = t.out_size.width - 1 - j;
  return {i, j};
}

DenseMap warp_dense_map(const DenseMap& map, const ViewCorrespondence& corr, Interp mode) {
  if (map.empty()) throw ShapeError("warp_dense_map: empty source map");
  DenseMap out(corr.height, corr.width, map.channels());
  for (int i = 0; i < corr.height; ++i) {
    for (int j = 0; j < corr.width; ++j) {
      const size_t k = static_cast<size_t>(i) * corr.width + j;
      if (!corr.valid[k]) continue;
      if (mode == Interp::kBilinear) {
        sample_bilinear(map, corr.src_row[k], corr.src_col[k], out.pixel(i, j));
      } else {
        out.pixel(i, j) = map.pixel(nearest_index(corr.src_row[k], map.height),
                                    nearest_index(corr.src_col[k], map.width));
      }
    }
  }
  return out;
}

LabelMap warp_label_map(const LabelMap& labels, const ViewCorrespondence& corr) {
  if (labels.pixels() == 0) throw ShapeError("warp_label_map: empty source map");
  LabelMap out(corr.height, corr.width, -1);
  for (int i = 0; i < corr.height; ++i) {
    for (int j = 0; j < corr.width; ++j) {
      const size_t k = static_cast<size_t>(i) * corr.width + j;
      if (!corr.valid[k]) continue;
      out.at(i, j) = labels.at(nearest_index(corr.src_row[k], labels.height),
                               nearest_index(corr.src_col[k], labels.width));
    }
  }
  return out;
}

DenseMap apply_photometric(const DenseMap& image, const Photometric& p) {
  if (p.is_identity()) return image;
  if (image.channels() != 3) throw ShapeError("photometric jitter expects an RGB image");
  DenseMap out = image;
  const double mean_gray =
      (0.299 * image.values.col(0) + 0.587 * image.values.col(1) + 0.114 * image.values.col(2)).mean();
  for (Eigen::Index k = 0; k < out.values.rows(); ++k) {
    double r = out.values(k, 0) * p.brightness;
    double g = out.values(k, 1) * p.brightness;
    double b = out.values(k, 2) * p.brightness;
    const double mg = mean_gray * p.brightness;
    r = (r - mg) * p.contrast + mg;
    g = (g - mg) * p.contrast + mg;
    b = (b - mg) * p.contrast + mg;
    const double gray = 0.299 * r + 0.587 * g + 0.114 * b;
    r = (r - gray) * p.saturation + gray;
    g = (g - gray) * p.saturation + gray;
    b = (b - gray) * p.saturation + gray;
    r = std::clamp(r, 0.0, 1.0);
    g = std::clamp(g, 0.0, 1.0);
    b = std::clamp(b, 0.0, 1.0);
    if (p.hue != 0.0) {
      double h, s, v;
      rgb_to_hsv(r, g, b, h, s, v);
      hsv_to_rgb(h + p.hue, s, v, r, g, b);
    }
    out.values(k, 0) = r;
    out.values(k, 1) = g;
    out.values(k, 2) = b;
  }
  if (p.blur_sigma > 0) out = gaussian_blur(out, p.blur_sigma);
  return out;
}

AugmentedView apply_to_image(const DenseMap& image, const ViewTransform& t) {
  if (image.empty()) throw ShapeError("apply_to_image: empty image");
  AugmentedView view;
  view.corr = make_correspondence(t, image.size());
  view.image = apply_photometric(warp_dense_map(image, view.corr, Interp::kBilinear), t.photometric);
  return view;
}

DenseMap resize_bilinear(const DenseMap& map, Size out) {
  ViewTransform t;
  t.crop = {0, 0, map.height, map.width};
  t.out_size = out;
  return warp_dense_map(map, make_correspondence(t, map.size()), Interp::kBilinear);
}

}  // namespace lgseg
