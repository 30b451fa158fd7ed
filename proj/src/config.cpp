#include "lgseg/config.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "lgseg/io.hpp"

namespace lgseg {

using nlohmann::json;

namespace {

// Object view that remembers which keys were read so leftovers can be
// reported as unknown.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  void path(const std::string& key, std::filesystem::path& out, const std::filesystem::path& base) {
    std::string s;
    get(key, s);
    if (!s.empty()) out = resolve(s, base);
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(has(key) ? j_.at(key) : empty, where_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + where_ + "." + key + "'");
  }

  static std::filesystem::path resolve(const std::string& s, const std::filesystem::path& base) {
    std::filesystem::path p(s);
    if (p.is_relative() && !base.empty()) p = base / p;
    return p.lexically_normal();
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_split(Section s, DatasetSplit& d, const std::filesystem::path& base) {
  s.path("images", d.images, base);
  s.path("regions", d.regions, base);
  s.path("gt", d.gt, base);
  s.finish();
}

void read_train(Section s, TrainConfig& t) {
  s.get("iterations", t.iterations);
  s.get("batch_size", t.batch_size);
  s.get("views_per_image", t.views_per_image);
  s.get("kappa", t.kappa);
  s.get("segments_per_view", t.segments_per_view);
  s.get("kmeans_iterations", t.kmeans_iterations);
  s.get("top_m", t.top_m);
  s.get("unknown_count", t.unknown_count);
  s.get("bank_depth", t.bank_depth);
  s.get("anchors_per_view", t.anchors_per_view);
  s.get("lr0", t.lr0);
  s.get("poly_power", t.poly_power);
  s.get("momentum", t.momentum);
  s.get("weight_decay", t.weight_decay);
  s.get("semantic_temperature", t.semantic_temperature);
  s.get("seed", t.seed);
  s.get("checkpoint_every", t.checkpoint_every);
  {
    Section w = s.child("weights");
    w.get("contrastive", t.weights.contrastive);
    w.get("embedding", t.weights.embedding);
    w.get("semantic", t.weights.semantic);
    w.finish();
  }
  {
    Section a = s.child("arch");
    a.get("patch_radius", t.arch.patch_radius);
    a.get("hidden", t.arch.hidden);
    a.get("embed_dim", t.arch.embed_dim);
    a.finish();
  }
  {
    Section a = s.child("augment");
    AugmentConfig& g = t.augment;
    a.get("scale_min", g.scale_min);
    a.get("scale_max", g.scale_max);
    a.get("ratio_min", g.ratio_min);
    a.get("ratio_max", g.ratio_max);
    a.get("flip_prob", g.flip_prob);
    a.get("jitter_prob", g.jitter_prob);
    a.get("brightness", g.brightness);
    a.get("contrast", g.contrast);
    a.get("saturation", g.saturation);
    a.get("hue", g.hue);
    a.get("blur_prob", g.blur_prob);
    a.get("blur_sigma_min", g.blur_sigma_min);
    a.get("blur_sigma_max", g.blur_sigma_max);
    a.get("out_height", g.out_size.height);
    a.get("out_width", g.out_size.width);
    a.finish();
  }
  s.finish();
}

json split_json(const DatasetSplit& d) {
  return {{"images", d.images.string()}, {"regions", d.regions.string()}, {"gt", d.gt.string()}};
}

void require_dir(const std::filesystem::path& p, const std::string& what) {
  if (!p.empty() && !std::filesystem::is_directory(p))
    throw ConfigError(what + " directory does not exist: " + p.string());
}

}  // namespace

void ClassSplit::validate() const {
  std::set<std::string> k(known.begin(), known.end()), u(unknown.begin(), unknown.end());
  if (k.size() != known.size()) throw ConfigError("duplicate name in the known class list");
  if (u.size() != unknown.size()) throw ConfigError("duplicate name in the unknown class list");
  for (const auto& n : unknown)
    if (k.count(n)) throw ConfigError("class '" + n + "' is listed as both known and unknown");
}

RunConfig RunConfig::parse(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section root(j, "config");
  read_split(root.child("train_data"), c.train, base_dir);
  read_split(root.child("eval_data"), c.eval, base_dir);
  {
    Section v = root.child("video");
    v.path("frames", c.video.frames, base_dir);
    v.path("masks", c.video.masks, base_dir);
    v.finish();
  }
  {
    Section e = root.child("encoder");
    e.get("kind", c.encoder.kind);
    e.path("palette", c.encoder.palette, base_dir);
    e.get("noise_sigma", c.encoder.noise_sigma);
    e.get("stride", c.encoder.stride);
    e.get("seed", c.encoder.seed);
    e.get("adapter", c.encoder.adapter);
    e.get("adapter_options", c.encoder.adapter_options);
    e.finish();
  }
  root.path("prompts", c.prompts, base_dir);
  {
    Section s = root.child("slic");
    s.get("n_regions", c.slic.n_regions);
    s.get("compactness", c.slic.compactness);
    s.get("iterations", c.slic.iterations);
    s.finish();
  }
  read_train(root.child("train"), c.training);
  {
    Section e = root.child("eval");
    EvalSpec& ev = c.evaluation;
    e.get("classes", ev.classes);
    e.get("known", ev.split.known);
    e.get("unknown", ev.split.unknown);
    e.get("fold", ev.split.fold);
    e.get("knn_k", ev.knn_k);
    e.get("probe_pixels_per_image", ev.probe_pixels_per_image);
    e.get("probe_max_iterations", ev.probe.max_iterations);
    e.get("probe_l2", ev.probe.l2);
    e.get("probe_tolerance", ev.probe.tolerance);
    e.get("track_top_r", ev.propagation.top_r);
    e.get("track_radius", ev.propagation.radius);
    e.get("track_temperature", ev.propagation.temperature);
    e.get("track_features", ev.track_features);
    e.finish();
  }
  root.path("output", c.output, base_dir);
  root.get("deterministic", c.deterministic);
  root.finish();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse(io::read_text_file(path), path.parent_path());
}

std::string RunConfig::canonical_json() const {
  const TrainConfig& t = training;
  const AugmentConfig& g = t.augment;
  json j = {
      {"train_data", split_json(train)},
      {"eval_data", split_json(eval)},
      {"video", {{"frames", video.frames.string()}, {"masks", video.masks.string()}}},
      {"encoder",
       {{"kind", encoder.kind},
        {"palette", encoder.palette.string()},
        {"noise_sigma", encoder.noise_sigma},
        {"stride", encoder.stride},
        {"seed", encoder.seed},
        {"adapter", encoder.adapter},
        {"adapter_options", encoder.adapter_options}}},
      {"prompts", prompts.string()},
      {"slic", {{"n_regions", slic.n_regions}, {"compactness", slic.compactness}, {"iterations", slic.iterations}}},
      {"train",
       {{"iterations", t.iterations},
        {"batch_size", t.batch_size},
        {"views_per_image", t.views_per_image},
        {"kappa", t.kappa},
        {"segments_per_view", t.segments_per_view},
        {"kmeans_iterations", t.kmeans_iterations},
        {"top_m", t.top_m},
        {"unknown_count", t.unknown_count},
        {"bank_depth", t.bank_depth},
        {"anchors_per_view", t.anchors_per_view},
        {"lr0", t.lr0},
        {"poly_power", t.poly_power},
        {"momentum", t.momentum},
        {"weight_decay", t.weight_decay},
        {"semantic_temperature", t.semantic_temperature},
        {"seed", t.seed},
        {"checkpoint_every", t.checkpoint_every},
        {"weights",
         {{"contrastive", t.weights.contrastive},
          {"embedding", t.weights.embedding},
          {"semantic", t.weights.semantic}}},
        {"arch", {{"patch_radius", t.arch.patch_radius}, {"hidden", t.arch.hidden}, {"embed_dim", t.arch.embed_dim}}},
        {"augment",
         {{"scale_min", g.scale_min},
          {"scale_max", g.scale_max},
          {"ratio_min", g.ratio_min},
          {"ratio_max", g.ratio_max},
          {"flip_prob", g.flip_prob},
          {"jitter_prob", g.jitter_prob},
          {"brightness", g.brightness},
          {"contrast", g.contrast},
          {"saturation", g.saturation},
          {"hue", g.hue},
          {"blur_prob", g.blur_prob},
          {"blur_sigma_min", g.blur_sigma_min},
          {"blur_sigma_max", g.blur_sigma_max},
          {"out_height", g.out_size.height},
          {"out_width", g.out_size.width}}}}},
      {"eval",
       {{"classes", evaluation.classes},
        {"known", evaluation.split.known},
        {"unknown", evaluation.split.unknown},
        {"fold", evaluation.split.fold},
        {"knn_k", evaluation.knn_k},
        {"probe_pixels_per_image", evaluation.probe_pixels_per_image},
        {"probe_max_iterations", evaluation.probe.max_iterations},
        {"probe_l2", evaluation.probe.l2},
        {"probe_tolerance", evaluation.probe.tolerance},
        {"track_top_r", evaluation.propagation.top_r},
        {"track_radius", evaluation.propagation.radius},
        {"track_temperature", evaluation.propagation.temperature},
        {"track_features", evaluation.track_features}}},
      {"deterministic", deterministic},
  };
  // nlohmann::json objects are key-sorted, so dump() is canonical.
  return j.dump();
}

uint64_t RunConfig::hash() const { return io::fnv1a(canonical_json()); }

std::string RunConfig::hash_hex() const { return io::hex64(hash()); }

void RunConfig::validate() const {
  training.validate();
  evaluation.split.validate();
  if (encoder.kind == "stub") {
    if (encoder.palette.empty()) throw ConfigError("encoder.palette is required for the stub encoder");
    if (!std::filesystem::exists(encoder.palette))
      throw ConfigError("encoder palette file does not exist: " + encoder.palette.string());
  } else if (encoder.kind == "adapter") {
    if (encoder.adapter.empty()) throw ConfigError("encoder.adapter is required when encoder.kind is 'adapter'");
  } else {
    throw ConfigError("encoder.kind must be 'stub' or 'adapter', got '" + encoder.kind + "'");
  }
  if (!prompts.empty() && !std::filesystem::exists(prompts))
    throw ConfigError("prompt template file does not exist: " + prompts.string());
  require_dir(train.images, "train_data.images");
  require_dir(train.regions, "train_data.regions");
  require_dir(train.gt, "train_data.gt");
  require_dir(eval.images, "eval_data.images");
  require_dir(eval.regions, "eval_data.regions");
  require_dir(eval.gt, "eval_data.gt");
  require_dir(video.frames, "video.frames");
  require_dir(video.masks, "video.masks");
  if (evaluation.knn_k < 1) throw ConfigError("eval.knn_k must be >= 1");
  if (evaluation.probe_pixels_per_image < 0) throw ConfigError("eval.probe_pixels_per_image must be >= 0");
  if (evaluation.track_features != "model" && evaluation.track_features != "encoder")
    throw ConfigError("eval.track_features must be 'model' or 'encoder'");
  for (const auto& names : {evaluation.split.known, evaluation.split.unknown})
    for (const auto& n : names)
      if (!evaluation.classes.empty() &&
          std::find(evaluation.classes.begin(), evaluation.classes.end(), n) == evaluation.classes.end())
        throw ConfigError("class '" + n + "' is not in eval.classes");
}

}  // namespace lgseg
