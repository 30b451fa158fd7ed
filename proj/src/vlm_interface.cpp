#include "lgseg/vlm_interface.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lgseg/geometry_augment.hpp"
#include "lgseg/io.hpp"

namespace lgseg {

DenseMap DenseFeatureEncoder::encode_dense(const DenseMap& image) const {
  if (image.empty()) throw ShapeError("encode_dense: empty image");
  DenseMap native = encode_native(image);
  if (native.size() == image.size()) return native;
  return resize_bilinear(native, image.size());
}

// ---------------------------------------------------------------------------

PromptEnsemble PromptEnsemble::defaults() {
  PromptEnsemble e;
  e.templates = {
      "a bad photo of a {}.",
      "a photo of many {}.",
      "a sculpture of a {}.",
      "a photo of the hard to see {}.",
      "a low resolution photo of the {}.",
      "a rendering of a {}.",
      "graffiti of a {}.",
      "a bad photo of the {}.",
      "a cropped photo of the {}.",
      "a tattoo of a {}.",
      "the embroidered {}.",
      "a photo of a hard to see {}.",
      "a bright photo of a {}.",
      "a photo of a clean {}.",
      "a photo of a dirty {}.",
      "a dark photo of the {}.",
      "a drawing of a {}.",
      "a photo of my {}.",
      "the plastic {}.",
      "a photo of the cool {}.",
      "a close-up photo of a {}.",
      "a black and white photo of the {}.",
      "a painting of the {}.",
      "a painting of a {}.",
      "a pixelated photo of the {}.",
      "a sculpture of the {}.",
      "a bright photo of the {}.",
      "a cropped photo of a {}.",
      "a plastic {}.",
      "a photo of the dirty {}.",
      "a jpeg corrupted photo of a {}.",
      "a blurry photo of the {}.",
      "a photo of the {}.",
      "a good photo of the {}.",
      "a rendering of the {}.",
      "a {} in a video game.",
      "a photo of one {}.",
      "a doodle of a {}.",
      "a close-up photo of the {}.",
      "a photo of a {}.",
      "the origami {}.",
      "the {} in a video game.",
      "a sketch of a {}.",
      "a doodle of the {}.",
      "a origami {}.",
      "a low resolution photo of a {}.",
      "the toy {}.",
      "a rendition of the {}.",
      "a photo of the clean {}.",
      "a photo of a large {}.",
      "a rendition of a {}.",
      "a photo of a nice {}.",
      "a photo of a weird {}.",
      "a blurry photo of a {}.",
      "a cartoon {}.",
      "art of a {}.",
      "a sketch of the {}.",
      "a embroidered {}.",
      "a pixelated photo of a {}.",
      "itap of the {}.",
      "a jpeg corrupted photo of the {}.",
      "a good photo of a {}.",
      "a plushie {}.",
      "a photo of the nice {}.",
      "a photo of the small {}.",
      "a photo of the weird {}.",
      "the cartoon {}.",
      "art of the {}.",
      "a drawing of the {}.",
      "a photo of the large {}.",
      "a black and white photo of a {}.",
      "the plushie {}.",
      "a dark photo of a {}.",
      "itap of a {}.",
      "graffiti of the {}.",
      "a toy {}.",
      "itap of my {}.",
      "a photo of a cool {}.",
      "a photo of a small {}.",
      "a tattoo of the {}.",
      "there is a {} in the scene.",
      "there is the {} in the scene.",
      "this is a {} in the scene.",
      "this is the {} in the scene.",
      "this is one {} in the scene.",
  };
  return e;
}

PromptEnsemble PromptEnsemble::load(const std::filesystem::path& path) {
  std::istringstream in(io::read_text_file(path));
  PromptEnsemble e;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    e.templates.push_back(line);
  }
  try {
    e.validate();
  } catch (const ConfigError& err) {
    throw IngestionError(path.string() + ": " + err.what());
  }
  return e;
}

void PromptEnsemble::validate() const {
  if (templates.empty()) throw ConfigError("prompt ensemble is empty");
  for (const std::string& t : templates) {
    const size_t first = t.find(kPlaceholder);
    if (first == std::string::npos || t.find(kPlaceholder, first + 1) != std::string::npos)
      throw ConfigError("prompt template must contain exactly one '{}': \"" + t + "\"");
  }
}

std::string PromptEnsemble::fill(size_t i, std::string_view name) const {
  std::string t = templates.at(i);
  t.replace(t.find(kPlaceholder), kPlaceholder.size(), name);
  return t;
}

Vec encode_class_text(std::string_view name, const PromptEnsemble& ensemble, const TextEncoder& text) {
  if (name.empty()) throw ConfigError("class name must be non-empty");
  ensemble.validate();
  Vec sum = Vec::Zero(text.dim());
  for (size_t i = 0; i < ensemble.templates.size(); ++i) sum += text.encode(ensemble.fill(i, name));
  sum /= static_cast<double>(ensemble.templates.size());
  const double n = sum.norm();
  if (n < 1e-12) throw NumericError("class text embedding collapsed to zero for '" + std::string(name) + "'");
  return sum / n;
}

Mat encode_class_texts(const std::vector<std::string>& names, const PromptEnsemble& ensemble,
                       const TextEncoder& text) {
  Mat out(static_cast<Eigen::Index>(names.size()), text.dim());
  for (size_t i = 0; i < names.size(); ++i) out.row(i) = encode_class_text(names[i], ensemble, text).transpose();
  return out;
}

// ---------------------------------------------------------------------------

int StubPalette::nearest(double r, double g, double b) const {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& c = entries[i].rgb;
    const double d = (c[0] - r) * (c[0] - r) + (c[1] - g) * (c[1] - g) + (c[2] - b) * (c[2] - b);
    if (d < bd) {
      bd = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

int StubPalette::find(std::string_view name) const {
  for (size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) return static_cast<int>(i);
  return -1;
}

void StubPalette::validate() const {
  if (entries.empty()) throw ConfigError("stub palette is empty");
  const int d = dim();
  if (d < 2) throw ConfigError("stub palette vectors must have dimension >= 2");
  for (size_t i = 0; i < entries.size(); ++i) {
    const PaletteEntry& e = entries[i];
    if (e.name.empty()) throw ConfigError("stub palette entry without a name");
    if (e.vector.size() != d) throw ConfigError("stub palette vectors differ in dimension");
    if (std::abs(e.vector.norm() - 1.0) > 1e-6) throw ConfigError("stub palette vector '" + e.name + "' is not unit length");
    for (size_t j = 0; j < i; ++j) {
      if (entries[j].name == e.name) throw ConfigError("duplicate stub palette name '" + e.name + "'");
      if ((entries[j].vector - e.vector).norm() < 1e-9)
        throw ConfigError("stub palette vectors must be pairwise distinct");
    }
  }
}

namespace {

Vec random_unit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(dim);
  do {
    for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  } while (v.norm() < 1e-9);
  return v.normalized();
}

}  // namespace

StubPalette make_palette(const std::vector<std::pair<std::string, std::array<double, 3>>>& colours,
                         int dim, uint64_t seed) {
  if (dim < 2) throw ConfigError("palette dimension must be >= 2");
  std::mt19937_64 rng(seed);
  StubPalette p;
  const bool orthogonalize = static_cast<int>(colours.size()) <= dim;
  for (const auto& [name, rgb] : colours) {
    Vec v = random_unit(rng, dim);
    if (orthogonalize) {
      for (const PaletteEntry& e : p.entries) v -= v.dot(e.vector) * e.vector;
      v.normalize();
    }
    p.entries.push_back({name, rgb, v});
  }
  p.validate();
  return p;
}

StubPalette StubPalette::load(const std::filesystem::path& path) {
  StubPalette p;
  try {
    const auto j = nlohmann::json::parse(io::read_text_file(path));
    for (const auto& [key, _] : j.items())
      if (key != "dim" && key != "entries" && key != "seed")
        throw IngestionError("unknown palette key '" + key + "' in " + path.string());
    const int dim = j.at("dim").get<int>();
    std::mt19937_64 rng(j.value("seed", uint64_t{0}));
    for (const auto& e : j.at("entries")) {
      for (const auto& [key, _] : e.items())
        if (key != "name" && key != "rgb" && key != "vector")
          throw IngestionError("unknown palette entry key '" + key + "' in " + path.string());
      PaletteEntry entry;
      entry.name = e.at("name").get<std::string>();
      entry.rgb = e.at("rgb").get<std::array<double, 3>>();
      if (e.contains("vector")) {
        const auto vals = e.at("vector").get<std::vector<double>>();
        entry.vector = Eigen::Map<const Vec>(vals.data(), static_cast<Eigen::Index>(vals.size())).normalized();
      } else {
        entry.vector = random_unit(rng, dim);
      }
      if (entry.vector.size() != dim) throw IngestionError("palette vector dimension mismatch in " + path.string());
      p.entries.push_back(std::move(entry));
    }
    p.validate();
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("malformed palette file " + path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
  return p;
}

void StubPalette::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["dim"] = dim();
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries) {
    j["entries"].push_back({{"name", e.name},
                            {"rgb", e.rgb},
                            {"vector", std::vector<double>(e.vector.data(), e.vector.data() + e.vector.size())}});
  }
  io::write_text_file(path, j.dump(2) + "\n");
}

StubDenseEncoder::StubDenseEncoder(StubPalette palette, StubOptions opts)
    : palette_(std::move(palette)), opts_(opts) {
  palette_.validate();
  if (opts_.stride < 1) throw ConfigError("stub encoder stride must be >= 1");
  if (opts_.noise_sigma < 0) throw ConfigError("stub noise_sigma must be non-negative");
}

DenseMap StubDenseEncoder::encode_native(const DenseMap& image) const {
  if (image.channels() != 3) throw ShapeError("stub encoder expects an RGB image");
  const int s = opts_.stride;
  const int h = (image.height + s - 1) / s;
  const int w = (image.width + s - 1) / s;
  const int d = dim();
  DenseMap out(h, w, d);

  const uint64_t content = io::fnv1a(std::string_view(reinterpret_cast<const char*>(image.values.data()),
                                                      image.values.size() * sizeof(double)));
  std::mt19937_64 rng(io::mix_seed(opts_.seed, content));
  std::normal_distribution<double> normal(0.0, opts_.noise_sigma / std::sqrt(static_cast<double>(d)));

  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      RowVec mean = RowVec::Zero(3);
      int n = 0;
      for (int ii = i * s; ii < std::min(image.height, (i + 1) * s); ++ii)
        for (int jj = j * s; jj < std::min(image.width, (j + 1) * s); ++jj, ++n) mean += image.pixel(ii, jj);
      mean /= n;
      const int c = palette_.nearest(mean[0], mean[1], mean[2]);
      auto px = out.pixel(i, j);
      px = palette_.entries[c].vector.transpose();
      if (opts_.noise_sigma > 0) {
        for (int k = 0; k < d; ++k) px[k] += normal(rng);
        px /= px.norm();
      }
    }
  }
  return out;
}

std::string StubDenseEncoder::fingerprint() const {
  std::ostringstream ss;
  ss.precision(17);
  ss << "stub;sigma=" << opts_.noise_sigma << ";seed=" << opts_.seed << ";stride=" << opts_.stride;
  for (const auto& e : palette_.entries) {
    ss << ";" << e.name << "(" << e.rgb[0] << "," << e.rgb[1] << "," << e.rgb[2] << ")";
    for (int k = 0; k < e.vector.size(); ++k) ss << "," << e.vector[k];
  }
  return ss.str();
}

StubTextEncoder::StubTextEncoder(StubPalette palette) : palette_(std::move(palette)) { palette_.validate(); }

Vec StubTextEncoder::encode(std::string_view text) const {
  // Whole-word match; the longest matching vocabulary name wins.
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; };
  int best = -1;
  for (size_t i = 0; i < palette_.entries.size(); ++i) {
    const std::string& name = palette_.entries[i].name;
    for (size_t pos = text.find(name); pos != std::string_view::npos; pos = text.find(name, pos + 1)) {
      const bool left_ok = pos == 0 || !is_word(text[pos - 1]);
      const size_t end = pos + name.size();
      const bool right_ok = end == text.size() || !is_word(text[end]);
      if (left_ok && right_ok) {
        if (best < 0 || name.size() > palette_.entries[best].name.size()) best = static_cast<int>(i);
        break;
      }
    }
  }
  if (best >= 0) return palette_.entries[best].vector;
  std::cerr << "warning: stub text encoder has no vocabulary entry for \"" << text
            << "\"; returning an uninformative vector\n";
  std::mt19937_64 rng(io::fnv1a(text));
  return random_unit(rng, dim());
}

StubPair make_stub_encoder(const StubPalette& palette, const StubOptions& opts) {
  return {std::make_shared<StubDenseEncoder>(palette, opts), std::make_shared<StubTextEncoder>(palette)};
}

// ---------------------------------------------------------------------------

namespace {

std::map<std::string, AdapterFactory>& adapter_registry() {
  static std::map<std::string, AdapterFactory> registry;
  return registry;
}

std::mutex& adapter_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void register_adapter(const std::string& name, AdapterFactory factory) {
  std::lock_guard lock(adapter_mutex());
  adapter_registry()[name] = std::move(factory);
}

bool has_adapter(const std::string& name) {
  std::lock_guard lock(adapter_mutex());
  return adapter_registry().count(name) > 0;
}

StubPair make_adapter(const std::string& name, const std::string& options) {
  AdapterFactory factory;
  {
    std::lock_guard lock(adapter_mutex());
    auto it = adapter_registry().find(name);
    if (it == adapter_registry().end())
      throw ConfigError("vision-language adapter '" + name + "' is not available in this build");
    factory = it->second;
  }
  return factory(options);
}

// ---------------------------------------------------------------------------

FeatureCache::FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

FeatureCache FeatureCache::from_env() {
  const char* dir = std::getenv("LGSEG_CACHE_DIR");
  return FeatureCache(dir && *dir ? std::filesystem::path(dir) : std::filesystem::path());
}

std::filesystem::path FeatureCache::path_for(const DenseFeatureEncoder& encoder, const std::string& image_id) const {
  std::string safe;
  for (char c : image_id) safe.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' ? c : '_');
  return dir_ / io::hex64(io::fnv1a(encoder.fingerprint())) / (safe + "-" + io::hex64(io::fnv1a(image_id)) + ".lgda");
}

DenseMap FeatureCache::get_or_compute(const DenseFeatureEncoder& encoder, const std::string& image_id,
                                      const DenseMap& image) const {
  if (!enabled()) return encoder.encode_dense(image);
  const auto path = path_for(encoder, image_id);
  const uint64_t content = io::fnv1a(std::string_view(reinterpret_cast<const char*>(image.values.data()),
                                                      image.values.size() * sizeof(double)));
  const std::string meta = encoder.fingerprint() + "|" + image_id + "|" + io::hex64(content);
  if (std::filesystem::exists(path)) {
    try {
      std::string stored;
      DenseMap cached = io::read_dense_array(path, &stored);
      if (stored == meta && cached.size() == image.size()) return cached;
    } catch (const IngestionError&) {
      // Unreadable cache entries are recomputed below.
    }
  }
  DenseMap features = encoder.encode_dense(image);
  io::write_dense_array(path, features, meta);
  return features;
}

}  // namespace lgseg
