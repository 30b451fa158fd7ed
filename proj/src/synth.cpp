#include "lgseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include <nlohmann/json.hpp>

#include "lgseg/eval_suite.hpp"
#include "lgseg/io.hpp"

namespace lgseg::synth {

namespace {

using Rgb = std::array<double, 3>;

const std::vector<Rgb>& shape_colours() {
  static const std::vector<Rgb> c = {{0.85, 0.20, 0.20}, {0.20, 0.75, 0.25}, {0.20, 0.30, 0.85}, {0.90, 0.80, 0.15}};
  return c;
}

const std::vector<Rgb>& background_colours() {
  static const std::vector<Rgb> c = {{0.60, 0.55, 0.45}, {0.35, 0.38, 0.42}};
  return c;
}

void put(DenseMap& img, int r, int c, const Rgb& rgb, std::mt19937_64& rng, double noise) {
  std::uniform_real_distribution<double> u(-noise, noise);
  for (int k = 0; k < 3; ++k) img.pixel(r, c)(k) = std::clamp(rgb[k] + u(rng), 0.0, 1.0);
}

void striped_background(DenseMap& img, std::mt19937_64& rng, double noise) {
  std::uniform_int_distribution<int> period_d(4, 8), orient_d(0, 2);
  const int period = period_d(rng);
  const int orient = orient_d(rng);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const int t = orient == 0 ? r : orient == 1 ? c : r + c;
      put(img, r, c, background_colours()[(t / period) % 2], rng, noise);
    }
}

// Inside test for shape `cls` with top-left (r0, c0) and side `s`.
bool inside(int cls, int r, int c, int r0, int c0, int s) {
  const double cy = r0 + (s - 1) / 2.0, cx = c0 + (s - 1) / 2.0;
  const double dy = r - cy, dx = c - cx, rad = s / 2.0;
  if (r < r0 || r >= r0 + s || c < c0 || c >= c0 + s) return false;
  switch (cls) {
    case 0:
      return dy * dy + dx * dx <= rad * rad;
    case 1:
      return true;
    case 2: {
      // Upward triangle: the half-width grows linearly from the apex.
      const double frac = static_cast<double>(r - r0 + 1) / s;
      return std::abs(dx) <= frac * rad;
    }
    default: {
      const double d2 = dy * dy + dx * dx;
      const double inner = rad * 0.5;
      return d2 <= rad * rad && d2 >= inner * inner;
    }
  }
}

std::string frame_name(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%04d", prefix, i);
  return buf;
}

}  // namespace

const std::vector<std::string>& shape_classes() {
  static const std::vector<std::string> n = {"disc", "block", "wedge", "ring"};
  return n;
}

const std::vector<std::string>& background_names() {
  static const std::vector<std::string> n = {"sand", "slate"};
  return n;
}

StubPalette default_palette(int dim, uint64_t seed) {
  std::vector<std::pair<std::string, std::array<double, 3>>> colours;
  for (size_t i = 0; i < shape_classes().size(); ++i) colours.emplace_back(shape_classes()[i], shape_colours()[i]);
  for (size_t i = 0; i < background_names().size(); ++i)
    colours.emplace_back(background_names()[i], background_colours()[i]);
  return make_palette(colours, dim, seed);
}

Scene make_scene(uint64_t seed, const SceneOptions& opts) {
  if (opts.height < 4 || opts.width < 4 || opts.min_size < 3 || opts.max_size < opts.min_size ||
      opts.max_size > std::min(opts.height, opts.width) || opts.min_shapes < 1 || opts.max_shapes < opts.min_shapes)
    throw ConfigError("invalid synthetic scene options");
  std::mt19937_64 rng(seed);
  Scene s{DenseMap(opts.height, opts.width, 3), LabelMap(opts.height, opts.width, kIgnoreLabel)};
  striped_background(s.image, rng, opts.colour_noise);
  std::uniform_int_distribution<int> count_d(opts.min_shapes, opts.max_shapes);
  std::uniform_int_distribution<int> class_d(0, static_cast<int>(shape_classes().size()) - 1);
  std::uniform_int_distribution<int> size_d(opts.min_size, opts.max_size);
  const int n = count_d(rng);
  for (int i = 0; i < n; ++i) {
    const int cls = class_d(rng);
    const int side = size_d(rng);
    std::uniform_int_distribution<int> r_d(0, opts.height - side), c_d(0, opts.width - side);
    const int r0 = r_d(rng), c0 = c_d(rng);
    for (int r = r0; r < r0 + side; ++r)
      for (int c = c0; c < c0 + side; ++c)
        if (inside(cls, r, c, r0, c0, side)) {
          put(s.image, r, c, shape_colours()[cls], rng, opts.colour_noise);
          s.gt.at(r, c) = cls;
        }
  }
  return s;
}

Video make_translating_square(uint64_t seed, const VideoOptions& opts) {
  const int travel = opts.step * (opts.frames - 1);
  if (opts.frames < 2 || opts.square < 2 || 2 + travel + opts.square > std::min(opts.height, opts.width))
    throw ConfigError("translating square leaves the frame; enlarge the video or shorten the path");
  std::mt19937_64 rng(seed);
  DenseMap background(opts.height, opts.width, 3);
  striped_background(background, rng, 0.0);
  Video v;
  for (int t = 0; t < opts.frames; ++t) {
    DenseMap f = background;
    LabelMap m(opts.height, opts.width, 0);
    const int r0 = 2 + t * opts.step, c0 = 2 + t * opts.step;
    for (int r = r0; r < r0 + opts.square; ++r)
      for (int c = c0; c < c0 + opts.square; ++c) {
        for (int k = 0; k < 3; ++k) f.pixel(r, c)(k) = shape_colours()[1][k];
        m.at(r, c) = 1;
      }
    v.frames.push_back(std::move(f));
    v.masks.push_back(std::move(m));
  }
  return v;
}

void write_corpus(const std::filesystem::path& dir, const CorpusOptions& opts) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  default_palette(opts.dim, io::mix_seed(opts.seed, 0x70616cULL)).save(dir / "palette.json");
  auto write_split = [&](const std::string& split, int count, uint64_t stream) {
    for (int i = 0; i < count; ++i) {
      const Scene s = make_scene(io::mix_seed(opts.seed, stream, static_cast<uint64_t>(i)), opts.scene);
      const std::string id = frame_name("img", i);
      io::write_ppm(dir / split / "images" / (id + ".ppm"), s.image);
      io::write_pgm_labels(dir / split / "gt" / (id + ".pgm"), s.gt);
    }
  };
  write_split("train", opts.train_images, 1);
  write_split("eval", opts.eval_images, 2);
  const Video v = make_translating_square(io::mix_seed(opts.seed, 3), opts.video);
  for (size_t t = 0; t < v.frames.size(); ++t) {
    io::write_ppm(dir / "video" / "frames" / (frame_name("f", static_cast<int>(t)) + ".ppm"), v.frames[t]);
    io::write_pgm_labels(dir / "video" / "masks" / (frame_name("f", static_cast<int>(t)) + ".pgm"), v.masks[t]);
  }

  const auto& classes = shape_classes();
  nlohmann::json cfg = {
      {"train_data", {{"images", "train/images"}, {"gt", "train/gt"}}},
      {"eval_data", {{"images", "eval/images"}, {"gt", "eval/gt"}}},
      {"video", {{"frames", "video/frames"}, {"masks", "video/masks"}}},
      {"encoder", {{"kind", "stub"}, {"palette", "palette.json"}, {"noise_sigma", 0.5}, {"stride", 4}, {"seed", opts.seed}}},
      {"slic", {{"n_regions", 12}, {"compactness", 10.0}}},
      {"train",
       {{"iterations", 400},
        {"batch_size", 4},
        {"segments_per_view", 12},
        {"anchors_per_view", 96},
        {"top_m", 32},
        {"unknown_count", 64},
        {"lr0", 0.05},
        {"seed", opts.seed},
        {"arch", {{"patch_radius", 1}, {"hidden", {32, 32}}, {"embed_dim", opts.dim}}}}},
      {"eval",
       {{"classes", classes},
        {"known", std::vector<std::string>(classes.begin(), classes.end() - 1)},
        {"unknown", std::vector<std::string>{classes.back()}},
        {"fold", 0}}},
      {"output", "run"},
  };
  io::write_text_file(dir / "config.json", cfg.dump(2) + "\n");
}

}  // namespace lgseg::synth
