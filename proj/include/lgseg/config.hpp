#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lgseg/eval_suite.hpp"
#include "lgseg/segmentation_core.hpp"
#include "lgseg/trainer.hpp"

namespace lgseg {

/// Image directory with optional region priors and ground truth. Files are
/// matched by stem: images/<id>.ppm, regions/<id>.pgm|.lgda, gt/<id>.pgm.
struct DatasetSplit {
  std::filesystem::path images;
  std::filesystem::path regions;  // empty: SLIC regions
  std::filesystem::path gt;       // empty: no ground truth
};

struct EncoderSpec {
  std::string kind = "stub";  // "stub" or "adapter"
  std::filesystem::path palette;
  double noise_sigma = 0.0;
  int stride = 1;
  uint64_t seed = 0;
  std::string adapter;          // registered adapter name when kind == "adapter"
  std::string adapter_options;
};

/// Class names of a fold: `known` are used for training, `unknown` are held
/// out (never seen by training) and only appear at evaluation.
struct ClassSplit {
  std::vector<std::string> known;
  std::vector<std::string> unknown;
  int fold = 0;

  void validate() const;
};

struct EvalSpec {
  /// All class names; gt label c refers to classes[c].
  std::vector<std::string> classes;
  ClassSplit split;
  int knn_k = 20;
  /// Pixels per training image used to fit the linear probe (0 = all).
  int probe_pixels_per_image = 0;
  LinearProbeOptions probe;
  PropagationOptions propagation;
  /// "model" (trained embeddings) or "encoder" (frozen features) for tracking.
  std::string track_features = "model";
};

struct VideoSpec {
  std::filesystem::path frames;  // frames/<id>.ppm, sorted by name
  std::filesystem::path masks;   // masks/<id>.pgm, instance ids, 0 = background
};

struct RunConfig {
  DatasetSplit train;
  DatasetSplit eval;
  VideoSpec video;
  EncoderSpec encoder;
  std::filesystem::path prompts;  // empty: built-in 85-template ensemble
  SlicOptions slic;
  TrainConfig training;
  EvalSpec evaluation;
  std::filesystem::path output;
  bool deterministic = true;

  /// Parses JSON text. Unknown keys anywhere are rejected with ConfigError.
  /// Relative paths are resolved against `base_dir`.
  static RunConfig parse(const std::string& text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  /// Canonical JSON of every setting except the output directory.
  std::string canonical_json() const;
  /// FNV-1a of canonical_json(); recorded in every output file.
  uint64_t hash() const;
  std::string hash_hex() const;

  /// Checks value ranges and that every referenced path exists.
  void validate() const;
};

}  // namespace lgseg
