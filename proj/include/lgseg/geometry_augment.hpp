#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "lgseg/types.hpp"

namespace lgseg {

struct CropRect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  bool operator==(const CropRect&) const = default;
};

/// Pixel-value-only adjustments. Scales of 1 and hue/blur of 0 are identity.
struct Photometric {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue = 0.0;         // rotation in turns, [-0.5, 0.5]
  double blur_sigma = 0.0;  // Gaussian sigma in view pixels; 0 disables

  bool is_identity() const {
    return brightness == 1.0 && contrast == 1.0 && saturation == 1.0 && hue == 0.0 &&
           blur_sigma == 0.0;
  }
  bool operator==(const Photometric&) const = default;
};

struct ViewTransform {
  CropRect crop;
  bool flip_h = false;
  Size out_size;
  Photometric photometric;

  bool operator==(const ViewTransform&) const = default;
};

/// Augmentation ranges (SimCLR-style family). An `out_size` of 0x0 means
/// "same as the source image".
struct AugmentConfig {
  double scale_min = 0.35;  // crop area as a fraction of the image area
  double scale_max = 1.0;
  double ratio_min = 3.0 / 4.0;  // crop aspect ratio width / height
  double ratio_max = 4.0 / 3.0;
  double flip_prob = 0.5;
  double jitter_prob = 0.8;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;
  double blur_prob = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 1.0;
  Size out_size{0, 0};

  /// Throws ConfigError when a range is inverted or out of domain.
  void validate() const;
};

/// Maps each view pixel to real-valued coordinates in the source image.
/// Pixel centres sit at integer coordinates, so the continuous extent of
/// a H0 x W0 image is [-0.5, H0 - 0.5] x [-0.5, W0 - 0.5].
struct ViewCorrespondence {
  int height = 0;
  int width = 0;
  std::vector<double> src_row;
  std::vector<double> src_col;
  std::vector<uint8_t> valid;

  Size size() const { return {height, width}; }
};

struct AugmentedView {
  DenseMap image;
  ViewCorrespondence corr;
};

enum class Interp { kNearest, kBilinear };

ViewTransform sample_transform(uint64_t seed, const AugmentConfig& config, Size image_size);

/// Identity transform for an image of the given size.
ViewTransform identity_transform(Size image_size);

ViewCorrespondence make_correspondence(const ViewTransform& t, Size source_size);

/// Source -> view coordinate map (the inverse of the correspondence), used
/// for round-trip checks. Returns (row, col) in view pixels.
std::pair<double, double> source_to_view(const ViewTransform& t, double src_row, double src_col);

AugmentedView apply_to_image(const DenseMap& image, const ViewTransform& t);

DenseMap warp_dense_map(const DenseMap& map, const ViewCorrespondence& corr, Interp mode);
LabelMap warp_label_map(const LabelMap& labels, const ViewCorrespondence& corr);

/// Applies only the photometric part of a transform to an RGB image.
DenseMap apply_photometric(const DenseMap& image, const Photometric& p);

/// Bilinear resize of any dense map (half-pixel-centre convention).
DenseMap resize_bilinear(const DenseMap& map, Size out);

}  // namespace lgseg
