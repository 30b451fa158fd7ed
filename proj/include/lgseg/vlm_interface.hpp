#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "lgseg/types.hpp"

namespace lgseg {

/// Frozen image encoder producing dense features in the joint text-image
/// space. Implementations are read-only after construction and expose no
/// trainable parameters.
class DenseFeatureEncoder {
 public:
  virtual ~DenseFeatureEncoder() = default;

  /// Native-resolution features (H' x W' x d_c), H' = ceil(H / stride).
  virtual DenseMap encode_native(const DenseMap& image) const = 0;
  virtual int dim() const = 0;
  virtual int stride() const = 0;
  /// Identifies the encoder and its parameters; used as a cache key.
  virtual std::string fingerprint() const = 0;

  /// Features bilinearly resized to the input resolution.
  DenseMap encode_dense(const DenseMap& image) const;
};

/// Frozen text encoder: string -> unit d_c vector.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual Vec encode(std::string_view text) const = 0;
  virtual int dim() const = 0;
};

/// Prompt templates, each containing exactly one "{}" placeholder.
struct PromptEnsemble {
  static constexpr std::string_view kPlaceholder = "{}";

  std::vector<std::string> templates;

  /// The 85-template ensemble (80 object templates + 5 scene templates).
  static PromptEnsemble defaults();
  /// Plain text, one template per line; blank lines and '#' lines skipped.
  static PromptEnsemble load(const std::filesystem::path& path);

  void validate() const;
  std::string fill(size_t i, std::string_view name) const;
};

/// Mean of per-template text embeddings, renormalized (t_k).
Vec encode_class_text(std::string_view name, const PromptEnsemble& ensemble, const TextEncoder& text);

/// k x d matrix of class text embeddings.
Mat encode_class_texts(const std::vector<std::string>& names, const PromptEnsemble& ensemble,
                       const TextEncoder& text);

// ---------------------------------------------------------------------------
// Stub encoder: a deterministic stand-in with a colour -> vector lookup.

struct PaletteEntry {
  std::string name;
  std::array<double, 3> rgb{};  // in [0, 1]
  Vec vector;                   // unit length
};

struct StubPalette {
  std::vector<PaletteEntry> entries;

  int dim() const { return entries.empty() ? 0 : static_cast<int>(entries.front().vector.size()); }
  /// Index of the palette colour nearest (Euclidean RGB) to `rgb`; ties to the lowest index.
  int nearest(double r, double g, double b) const;
  int find(std::string_view name) const;  // -1 if absent
  void validate() const;

  /// JSON: {"dim": d, "entries": [{"name": .., "rgb": [r,g,b], "vector": [..]}]}.
  /// "vector" may be omitted, in which case a seeded random unit vector is used.
  static StubPalette load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct StubOptions {
  double noise_sigma = 0.0;  // expected norm of the isotropic noise added per pixel
  uint64_t seed = 0;
  int stride = 1;
};

class StubDenseEncoder final : public DenseFeatureEncoder {
 public:
  StubDenseEncoder(StubPalette palette, StubOptions opts);

  DenseMap encode_native(const DenseMap& image) const override;
  int dim() const override { return palette_.dim(); }
  int stride() const override { return opts_.stride; }
  std::string fingerprint() const override;

  const StubPalette& palette() const { return palette_; }

 private:
  StubPalette palette_;
  StubOptions opts_;
};

/// Text "X" (or any prompt containing vocabulary word X as a whole word) maps
/// to the palette vector of X. Unknown text yields a warning and a seeded
/// pseudo-random unit vector that carries no palette information.
class StubTextEncoder final : public TextEncoder {
 public:
  explicit StubTextEncoder(StubPalette palette);

  Vec encode(std::string_view text) const override;
  int dim() const override { return palette_.dim(); }

 private:
  StubPalette palette_;
};

struct StubPair {
  std::shared_ptr<const DenseFeatureEncoder> dense;
  std::shared_ptr<const TextEncoder> text;
};

StubPair make_stub_encoder(const StubPalette& palette, const StubOptions& opts);

/// Orthonormal-ish palette helper: `names` with colours, vectors drawn from a
/// seeded Gaussian and renormalized, then Gram-Schmidt orthogonalized when
/// names.size() <= dim.
StubPalette make_palette(const std::vector<std::pair<std::string, std::array<double, 3>>>& colours,
                         int dim, uint64_t seed);

// ---------------------------------------------------------------------------
// Optional real-model adapters, registered by name.

using AdapterFactory = std::function<StubPair(const std::string& options)>;
void register_adapter(const std::string& name, AdapterFactory factory);
bool has_adapter(const std::string& name);
/// Throws ConfigError when the adapter is not registered.
StubPair make_adapter(const std::string& name, const std::string& options);

// ---------------------------------------------------------------------------
// On-disk feature cache: one .lgda file per (encoder fingerprint, image id).

class FeatureCache {
 public:
  /// Empty `dir` disables caching.
  explicit FeatureCache(std::filesystem::path dir = {});

  /// Directory from the LGSEG_CACHE_DIR environment variable, if set.
  static FeatureCache from_env();

  DenseMap get_or_compute(const DenseFeatureEncoder& encoder, const std::string& image_id,
                          const DenseMap& image) const;
  bool enabled() const { return !dir_.empty(); }
  std::filesystem::path path_for(const DenseFeatureEncoder& encoder, const std::string& image_id) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace lgseg
