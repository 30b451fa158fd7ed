#include "lgseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "lgseg/guidance_losses.hpp"
#include "lgseg/io.hpp"

namespace lgseg {

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw ConfigError(std::string("train.") + name + " must be positive");
  };
  positive(iterations, "iterations");
  positive(batch_size, "batch_size");
  positive(views_per_image, "views_per_image");
  positive(kappa, "kappa");
  positive(segments_per_view, "segments_per_view");
  positive(top_m, "top_m");
  positive(anchors_per_view, "anchors_per_view");
  positive(poly_power, "poly_power");
  positive(semantic_temperature, "semantic_temperature");
  if (kmeans_iterations < 0) throw ConfigError("train.kmeans_iterations must be >= 0");
  if (unknown_count < 0) throw ConfigError("train.unknown_count must be >= 0");
  if (bank_depth < 0) throw ConfigError("train.bank_depth must be >= 0");
  if (lr0 < 0) throw ConfigError("train.lr0 must be >= 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("train.momentum must lie in [0, 1)");
  if (weight_decay < 0) throw ConfigError("train.weight_decay must be >= 0");
  if (weights.contrastive < 0 || weights.embedding < 0 || weights.semantic < 0)
    throw ConfigError("train.weights must be non-negative");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  arch.validate();
  augment.validate();
}

double total_loss(double contrastive, double embedding, double semantic, const LossWeights& w) {
  if (!std::isfinite(contrastive) || !std::isfinite(embedding) || !std::isfinite(semantic)) {
    std::ostringstream ss;
    ss.precision(17);
    ss << "non-finite loss component: L_t=" << contrastive << " L_e=" << embedding << " L_s=" << semantic;
    throw NumericError(ss.str());
  }
  return w.contrastive * contrastive + w.embedding * embedding + w.semantic * semantic;
}

double lr_at(int iter, const TrainConfig& config) {
  const double frac = std::clamp(static_cast<double>(iter) / config.iterations, 0.0, 1.0);
  return config.lr0 * std::pow(1.0 - frac, config.poly_power);
}

TrainState init_state(const TrainConfig& config, PrototypeBank bank) {
  config.validate();
  bank.validate();
  if (bank.dim() != config.arch.embed_dim)
    throw ConfigError("encoder embed_dim (" + std::to_string(config.arch.embed_dim) +
                      ") must equal the feature dimension of the prototype bank (" + std::to_string(bank.dim()) + ")");
  TrainState s;
  s.model = PixelEncoder(config.arch, io::mix_seed(config.seed, 0x6d6f64656cULL));
  for (const Mat& p : s.model.params()) s.velocity.push_back(Mat::Zero(p.rows(), p.cols()));
  s.unknown_velocity = Mat::Zero(bank.unknown.rows(), bank.unknown.cols());
  s.bank = std::move(bank);
  s.memory = MemoryBank(config.bank_depth);
  return s;
}

std::vector<int> batch_indices(uint64_t seed, int iteration, int dataset_size, int batch_size) {
  if (dataset_size <= 0) throw ConfigError("training dataset is empty");
  // Epoch-wise permutation so every image is visited once per epoch.
  const int per_epoch = std::max(1, dataset_size / batch_size);
  const int epoch = iteration / per_epoch;
  const int slot = iteration % per_epoch;
  std::vector<int> perm(dataset_size);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(io::mix_seed(seed, 0x62617463ULL, static_cast<uint64_t>(epoch)));
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> out;
  for (int b = 0; b < batch_size; ++b) out.push_back(perm[(slot * batch_size + b) % dataset_size]);
  return out;
}

namespace {

struct ViewWork {
  AugmentedView view;
  DenseMap raw;
  PixelEncoder::Cache cache;
  PixelEmbeddingMap z;
  SegmentSet regions;  // region prior warped into the view, pooled from z (contrastive)
  SegmentSet segs;     // clusters of z (consistency losses)
  SegmentSet feats;    // encoder features pooled over `segs`
  std::vector<int> anchors;
};

std::vector<int> sample_anchors(int pixels, int count, uint64_t seed) {
  if (count >= pixels) {
    std::vector<int> all(pixels);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  return sample_without_replacement(pixels, count, seed);
}

// Stacks the embeddings of one SegmentSet per view; offsets[v] is the first row of view v.
Mat stack_segments(const std::vector<ViewWork>& views, SegmentSet ViewWork::*member, std::vector<int>& offsets,
                   int d) {
  offsets.assign(views.size() + 1, 0);
  for (size_t v = 0; v < views.size(); ++v) offsets[v + 1] = offsets[v] + (views[v].*member).count();
  Mat out(offsets.back(), d);
  for (size_t v = 0; v < views.size(); ++v)
    out.middleRows(offsets[v], (views[v].*member).count()) = (views[v].*member).embeddings;
  return out;
}

}  // namespace

LossBreakdown train_step(TrainState& state, std::span<const TrainSample* const> batch, const TrainConfig& config) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  const int it = state.iteration;
  const uint64_t seed = config.seed;
  const int d = state.model.arch().embed_dim;

  std::vector<ViewWork> views;
  views.reserve(batch.size() * config.views_per_image);
  for (size_t b = 0; b < batch.size(); ++b) {
    const TrainSample& sample = *batch[b];
    require_same_size(sample.image.size(), sample.features.size(), "train_step features");
    require_same_size(sample.image.size(), sample.prior.ids.size(), "train_step region prior");
    if (sample.features.channels() != d)
      throw AlignmentError("encoder feature dimension " + std::to_string(sample.features.channels()) +
                           " differs from the embedding dimension " + std::to_string(d));
    for (int v = 0; v < config.views_per_image; ++v) {
      const uint64_t view_seed = io::mix_seed(seed, static_cast<uint64_t>(it), b, static_cast<uint64_t>(v));
      ViewWork w;
      const ViewTransform t = sample_transform(view_seed, config.augment, sample.image.size());
      w.view = apply_to_image(sample.image, t);
      // Encoder features come from the original image and are warped into the view.
      const DenseMap view_features = warp_dense_map(sample.features, w.view.corr, Interp::kBilinear);
      w.raw = state.model.forward(w.view.image, &w.cache);
      w.z = normalize_embeddings(w.raw).map;
      w.regions = pool_segments(w.z, warp_label_map(sample.prior.ids, w.view.corr));
      ClusterOptions copts;
      copts.k = std::min(config.segments_per_view, w.z.pixels());
      copts.iterations = config.kmeans_iterations;
      copts.seed = io::mix_seed(view_seed, 0x6b6d65616e73ULL);
      w.segs = pool_segments(w.z, cluster_to_segments(w.z, copts));
      w.feats = pool_like(view_features, w.segs);
      w.anchors = sample_anchors(w.z.pixels(), config.anchors_per_view, io::mix_seed(view_seed, 0x616e63686f72ULL));
      views.push_back(std::move(w));
    }
  }

  LossBreakdown out;
  out.iteration = it;
  out.lr = lr_at(it, config);
  std::vector<Mat> grad_z(views.size());
  for (size_t v = 0; v < views.size(); ++v) grad_z[v] = Mat::Zero(views[v].z.pixels(), d);

  // L_t over region segments, with the memory bank as extra negatives.
  std::vector<int> region_offset;
  const Mat region_v = stack_segments(views, &ViewWork::regions, region_offset, d);
  std::vector<ViewPairInput> pair_inputs;
  for (size_t v = 0; v < views.size(); ++v) {
    ViewPairInput in;
    in.image = static_cast<int>(v / config.views_per_image);
    in.prior = &batch[in.image]->prior;
    in.corr = &views[v].view.corr;
    in.segs = &views[v].regions;
    in.anchors = views[v].anchors;
    pair_inputs.push_back(std::move(in));
  }
  const Mat bank_snapshot = state.memory.snapshot();
  const PairSets pairs = build_pair_sets(pair_inputs, static_cast<int>(bank_snapshot.rows()));
  out.anchors_excluded = pairs.excluded_anchors;
  ContrastiveResult lt;
  if (config.weights.contrastive > 0 && !pairs.anchors.empty()) {
    Mat anchor_z(pairs.anchors.size(), d);
    for (size_t a = 0; a < pairs.anchors.size(); ++a)
      anchor_z.row(a) = views[pairs.anchors[a].view].z.values.row(pairs.anchors[a].pixel);
    lt = contrastive_loss(anchor_z, region_v, bank_snapshot, pairs, config.kappa);
    out.contrastive = lt.loss;
    out.anchors_used = lt.anchors_used;
  }

  // L_e, L_s over the clustered segments; L_u on the unknown prototypes.
  std::vector<int> seg_offset;
  const Mat seg_v = stack_segments(views, &ViewWork::segs, seg_offset, d);
  std::vector<int> valid_rows;
  for (size_t v = 0; v < views.size(); ++v)
    for (int s = 0; s < views[v].segs.count(); ++s)
      if (views[v].segs.valid[s] && views[v].feats.valid[s]) valid_rows.push_back(seg_offset[v] + s);
  Mat v_valid(valid_rows.size(), d), i_valid(valid_rows.size(), d);
  for (size_t r = 0; r < valid_rows.size(); ++r) {
    v_valid.row(r) = seg_v.row(valid_rows[r]);
    const auto vi = std::upper_bound(seg_offset.begin(), seg_offset.end(), valid_rows[r]) - seg_offset.begin() - 1;
    i_valid.row(r) = views[vi].feats.embeddings.row(valid_rows[r] - seg_offset[vi]);
  }
  out.segments = static_cast<int>(valid_rows.size());

  const Mat prototypes = state.bank.all();
  const std::vector<int> labels = pseudo_labels(i_valid, prototypes);
  SegmentLossResult le, ls;
  if (!valid_rows.empty()) {
    le = embedding_consistency_loss(v_valid, i_valid);
    ls = semantic_consistency_loss(v_valid, prototypes, labels, config.semantic_temperature);
  }
  const UnknownLossResult lu = unknown_update_loss(state.bank.unknown, i_valid, labels, state.bank.k());
  out.embedding = le.loss;
  out.semantic = ls.loss;
  out.unknown = lu.loss;
  out.unknown_assigned = lu.assigned;
  out.total = total_loss(out.contrastive, out.embedding, out.semantic, config.weights);
  if (!std::isfinite(out.unknown)) throw NumericError("non-finite unknown-prototype loss");

  // Backward.
  Mat grad_region = Mat::Zero(region_v.rows(), d);
  if (lt.anchors_used > 0) {
    grad_region = config.weights.contrastive * lt.grad_segments;
    for (size_t a = 0; a < pairs.anchors.size(); ++a)
      grad_z[pairs.anchors[a].view].row(pairs.anchors[a].pixel) += config.weights.contrastive * lt.grad_anchors.row(a);
  }
  Mat grad_seg = Mat::Zero(seg_v.rows(), d);
  for (size_t r = 0; r < valid_rows.size(); ++r)
    grad_seg.row(valid_rows[r]) += config.weights.embedding * le.grad.row(r) + config.weights.semantic * ls.grad.row(r);

  std::vector<Mat> grads;
  for (size_t v = 0; v < views.size(); ++v) {
    const int n = views[v].z.pixels();
    grad_z[v] += pool_backward(views[v].regions, grad_region.middleRows(region_offset[v], views[v].regions.count()), n);
    grad_z[v] += pool_backward(views[v].segs, grad_seg.middleRows(seg_offset[v], views[v].segs.count()), n);
    const Mat grad_raw = normalize_backward(views[v].raw.values, grad_z[v]);
    std::vector<Mat> g = state.model.backward(views[v].cache, grad_raw);
    if (grads.empty()) {
      grads = std::move(g);
    } else {
      for (size_t p = 0; p < grads.size(); ++p) grads[p] += g[p];
    }
  }
  for (size_t p = 0; p < grads.size(); ++p)
    if (!grads[p].allFinite()) throw NumericError("non-finite gradient in model parameter " + std::to_string(p));

  // Momentum SGD on the model.
  auto& params = state.model.params();
  for (size_t p = 0; p < params.size(); ++p) {
    state.velocity[p] = config.momentum * state.velocity[p] + grads[p] + config.weight_decay * params[p];
    params[p] -= out.lr * state.velocity[p];
  }
  // Separate group for the unknown prototypes, renormalized after the step.
  if (state.bank.u() > 0) {
    state.unknown_velocity = config.momentum * state.unknown_velocity + lu.grad_unknown;
    state.bank.unknown -= out.lr * state.unknown_velocity;
    renormalize_rows(state.bank.unknown);
  }

  // Only valid region segments enter the bank.
  std::vector<int> bank_rows;
  for (size_t s = 0; s < pairs.segments.size(); ++s)
    if (pairs.segments[s].valid) bank_rows.push_back(static_cast<int>(s));
  Mat pushed(bank_rows.size(), d);
  for (size_t r = 0; r < bank_rows.size(); ++r) pushed.row(r) = region_v.row(bank_rows[r]);
  state.memory.push(pushed);
  ++state.iteration;
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCkptMagic[4] = {'L', 'G', 'C', 'K'};
constexpr uint32_t kCkptVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void mat(const Mat& m) {
    pod<uint32_t>(static_cast<uint32_t>(m.rows()));
    pod<uint32_t>(static_cast<uint32_t>(m.cols()));
    out_.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  void str(const std::string& s) {
    pod<uint32_t>(static_cast<uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::filesystem::path path) : in_(in), path_(std::move(path)) {}
  template <typename T>
  T pod() {
    T v{};
    if (!in_.read(reinterpret_cast<char*>(&v), sizeof(T))) fail();
    return v;
  }
  Mat mat() {
    const auto r = pod<uint32_t>();
    const auto c = pod<uint32_t>();
    if (static_cast<uint64_t>(r) * c > (1ULL << 28)) fail();
    Mat m(r, c);
    if (m.size() && !in_.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double))))
      fail();
    return m;
  }
  std::string str() {
    const auto n = pod<uint32_t>();
    if (n > (1u << 16)) fail();
    std::string s(n, '\0');
    if (n && !in_.read(s.data(), n)) fail();
    return s;
  }
  [[noreturn]] void fail() { throw IngestionError("truncated or corrupt checkpoint " + path_.string()); }

 private:
  std::istream& in_;
  std::filesystem::path path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state, uint64_t config_hash) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IngestionError("cannot write " + tmp.string());
    out.write(kCkptMagic, 4);
    Writer w(out);
    w.pod<uint32_t>(kCkptVersion);
    w.pod<uint64_t>(config_hash);
    w.pod<int32_t>(state.iteration);
    const EncoderArch& arch = state.model.arch();
    w.pod<int32_t>(arch.patch_radius);
    w.pod<int32_t>(arch.embed_dim);
    w.pod<uint32_t>(static_cast<uint32_t>(arch.hidden.size()));
    for (int h : arch.hidden) w.pod<int32_t>(h);
    w.pod<uint32_t>(static_cast<uint32_t>(state.model.params().size()));
    for (const Mat& p : state.model.params()) w.mat(p);
    for (const Mat& v : state.velocity) w.mat(v);
    w.pod<uint32_t>(static_cast<uint32_t>(state.bank.known_names.size()));
    for (const std::string& n : state.bank.known_names) w.str(n);
    w.mat(state.bank.known);
    w.mat(state.bank.unknown);
    w.mat(state.unknown_velocity);
    w.pod<int32_t>(state.memory.depth());
    w.pod<uint32_t>(static_cast<uint32_t>(state.memory.num_batches()));
    for (const Mat& b : state.memory.batches()) w.mat(b);
    if (!out) throw IngestionError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path, uint64_t* config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw IngestionError("not a checkpoint file: " + path.string());
  Reader r(in, path);
  if (r.pod<uint32_t>() != kCkptVersion) throw IngestionError("unsupported checkpoint version: " + path.string());
  const auto hash = r.pod<uint64_t>();
  if (config_hash) *config_hash = hash;
  TrainState s;
  s.iteration = r.pod<int32_t>();
  EncoderArch arch;
  arch.patch_radius = r.pod<int32_t>();
  arch.embed_dim = r.pod<int32_t>();
  const auto layers = r.pod<uint32_t>();
  if (layers > 64) r.fail();
  arch.hidden.clear();
  for (uint32_t i = 0; i < layers; ++i) arch.hidden.push_back(r.pod<int32_t>());
  s.model = PixelEncoder(arch, 0);
  const auto nparams = r.pod<uint32_t>();
  if (nparams != s.model.params().size()) r.fail();
  for (Mat& p : s.model.params()) {
    Mat loaded = r.mat();
    if (loaded.rows() != p.rows() || loaded.cols() != p.cols()) r.fail();
    p = std::move(loaded);
  }
  for (uint32_t i = 0; i < nparams; ++i) s.velocity.push_back(r.mat());
  const auto k = r.pod<uint32_t>();
  if (k > 1000000) r.fail();
  for (uint32_t i = 0; i < k; ++i) s.bank.known_names.push_back(r.str());
  s.bank.known = r.mat();
  s.bank.unknown = r.mat();
  s.unknown_velocity = r.mat();
  s.memory = MemoryBank(r.pod<int32_t>());
  const auto nb = r.pod<uint32_t>();
  std::deque<Mat> batches;
  for (uint32_t i = 0; i < nb; ++i) batches.push_back(r.mat());
  s.memory.restore(std::move(batches));
  if (in.peek() != std::char_traits<char>::eof()) throw IngestionError("trailing bytes in checkpoint " + path.string());
  s.bank.validate();
  return s;
}

std::string format_log_record(const LossBreakdown& b) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "{\"iter\":" << b.iteration << ",\"lr\":" << b.lr << ",\"L_t\":" << b.contrastive
     << ",\"L_e\":" << b.embedding << ",\"L_s\":" << b.semantic << ",\"L_u\":" << b.unknown
     << ",\"total\":" << b.total << ",\"anchors\":" << b.anchors_used << ",\"anchors_excluded\":" << b.anchors_excluded
     << ",\"segments\":" << b.segments << ",\"unknown_assigned\":" << b.unknown_assigned << "}";
  return ss.str();
}

void run_training(TrainState& state, std::span<const TrainSample> dataset, const TrainConfig& config,
                  const TrainRunOptions& options) {
  const int end = options.end_iteration < 0 ? config.iterations : options.end_iteration;
  if (options.start_iteration != state.iteration)
    throw ConfigError("run_training: start iteration does not match the state");
  const int batch = std::min<int>(config.batch_size, static_cast<int>(dataset.size()));
  while (state.iteration < end) {
    const auto idx = batch_indices(config.seed, state.iteration, static_cast<int>(dataset.size()), batch);
    std::vector<const TrainSample*> samples;
    for (int i : idx) samples.push_back(&dataset[i]);
    LossBreakdown b;
    try {
      b = train_step(state, samples, config);
    } catch (const NumericError&) {
      if (options.on_checkpoint) options.on_checkpoint(state);
      throw;
    }
    if (options.on_step) options.on_step(b);
    if (options.on_checkpoint && config.checkpoint_every > 0 && state.iteration % config.checkpoint_every == 0 &&
        state.iteration != end)
      options.on_checkpoint(state);
  }
}

}  // namespace lgseg
