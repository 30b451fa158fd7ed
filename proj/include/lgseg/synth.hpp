#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lgseg/types.hpp"
#include "lgseg/vlm_interface.hpp"

namespace lgseg::synth {

/// Shape classes of the synthetic corpus, in gt-id order, and the two
/// background texture colours (background pixels carry kIgnoreLabel).
const std::vector<std::string>& shape_classes();
const std::vector<std::string>& background_names();

/// Palette covering shapes and backgrounds with unit vectors of length `dim`.
StubPalette default_palette(int dim = 16, uint64_t seed = 7);

struct SceneOptions {
  int height = 32;
  int width = 32;
  int min_shapes = 2;
  int max_shapes = 3;
  int min_size = 9;   // bounding box side, pixels
  int max_size = 14;
  double colour_noise = 0.03;  // per-channel uniform jitter
};

struct Scene {
  DenseMap image;
  LabelMap gt;  // class id per pixel, kIgnoreLabel on background
};

/// Coloured shapes (disc, block, wedge, ring) on a striped two-tone
/// background, all drawn from `seed`.
Scene make_scene(uint64_t seed, const SceneOptions& opts = {});

struct VideoOptions {
  int height = 48;
  int width = 48;
  int frames = 10;
  int square = 14;
  int step = 2;  // pixels per frame, along the diagonal
};

struct Video {
  std::vector<DenseMap> frames;
  std::vector<LabelMap> masks;  // 1 inside the square, 0 elsewhere
};

/// A single square translating over a static striped background.
Video make_translating_square(uint64_t seed, const VideoOptions& opts = {});

struct CorpusOptions {
  int train_images = 32;
  int eval_images = 16;
  int dim = 16;
  SceneOptions scene;
  VideoOptions video;
  uint64_t seed = 1;
};

/// Writes palette.json, train/{images,gt}, eval/{images,gt},
/// video/{frames,masks} and a runnable config.json under `dir`.
void write_corpus(const std::filesystem::path& dir, const CorpusOptions& opts);

}  // namespace lgseg::synth
