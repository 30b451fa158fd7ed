#pragma once

#include <cstdint>
#include <vector>

#include "lgseg/types.hpp"

namespace lgseg {

/// Trainable pixel embedding function: an MLP applied to the (2r+1)^2 RGB
/// patch around every pixel (edge replicated), followed by L2 normalization
/// done by the caller via normalize_embeddings().
struct EncoderArch {
  int patch_radius = 1;
  std::vector<int> hidden = {32, 32};
  int embed_dim = 16;

  int input_dim() const { return (2 * patch_radius + 1) * (2 * patch_radius + 1) * 3; }
  void validate() const;
};

class PixelEncoder {
 public:
  struct Cache {
    std::vector<Mat> activations;  // input followed by each hidden activation
    std::vector<Mat> pre;          // pre-activation of each hidden layer
  };

  PixelEncoder() = default;
  PixelEncoder(const EncoderArch& arch, uint64_t seed);

  const EncoderArch& arch() const { return arch_; }

  /// Raw (un-normalized) N x d outputs. Fills `cache` when non-null.
  DenseMap forward(const DenseMap& image, Cache* cache = nullptr) const;

  /// Gradient of the loss w.r.t. every parameter, given dL/d(raw output).
  std::vector<Mat> backward(const Cache& cache, const Mat& grad_raw) const;

  /// forward + normalize.
  DenseMap embed(const DenseMap& image) const;

  /// Layer parameters in order W0, b0, W1, b1, ... (biases are 1 x n).
  std::vector<Mat>& params() { return params_; }
  const std::vector<Mat>& params() const { return params_; }

  size_t num_parameters() const;

 private:
  Mat patches(const DenseMap& image) const;

  EncoderArch arch_;
  std::vector<Mat> params_;
};

}  // namespace lgseg
