#include "lgseg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include "lgseg/io.hpp"
#include "lgseg/segmentation_core.hpp"

namespace lgseg::pipeline {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> list_files(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw ConfigError("directory does not exist: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IngestionError("no " + ext + " files in " + dir.string());
  return out;
}

fs::path require_output(const RunConfig& cfg) {
  if (cfg.output.empty()) throw ConfigError("no output directory configured (set \"output\" or pass --out)");
  return cfg.output;
}

int majority_label(const std::vector<int64_t>& votes) {
  int best = -1;
  int64_t best_count = 0;
  for (size_t c = 0; c < votes.size(); ++c)
    if (votes[c] > best_count) best = static_cast<int>(c), best_count = votes[c];
  return best;
}

// Majority gt class of every segment, -1 when a segment has no labelled pixel.
std::vector<int> segment_gt(const LabelMap& segs, int count, const LabelMap& gt, int num_classes) {
  std::vector<std::vector<int64_t>> votes(count, std::vector<int64_t>(num_classes, 0));
  for (size_t p = 0; p < gt.ids.size(); ++p) {
    const int32_t g = gt.ids[p];
    if (g == kIgnoreLabel) continue;
    if (g < 0 || g >= num_classes) throw IngestionError("gt label " + std::to_string(g) + " outside the class list");
    ++votes[segs.ids[p]][g];
  }
  std::vector<int> out(count);
  for (int s = 0; s < count; ++s) out[s] = majority_label(votes[s]);
  return out;
}

LabelMap cluster_view(const PixelEmbeddingMap& z, const TrainConfig& t, uint64_t stream, size_t index) {
  ClusterOptions opts;
  opts.k = std::min(t.segments_per_view, z.pixels());
  opts.iterations = t.kmeans_iterations;
  opts.seed = io::mix_seed(t.seed, stream, index);
  return cluster_to_segments(z, opts);
}

std::vector<int> class_indices(const std::vector<std::string>& classes, const std::vector<std::string>& names) {
  std::vector<int> out;
  for (const auto& n : names) {
    const auto it = std::find(classes.begin(), classes.end(), n);
    if (it == classes.end()) throw ConfigError("class '" + n + "' is not in eval.classes");
    out.push_back(static_cast<int>(it - classes.begin()));
  }
  return out;
}

TrainState load_model(const RunConfig& cfg) {
  const fs::path path = require_output(cfg) / "model.lgck";
  if (!fs::exists(path)) throw ConfigError("no trained model at " + path.string() + "; run train first");
  return load_checkpoint(path);
}

void write_predictions(const fs::path& dir, const std::vector<TrainSample>& samples, const std::vector<LabelMap>& preds) {
  for (size_t i = 0; i < preds.size(); ++i) io::write_pgm_labels(dir / (samples[i].id + ".pgm"), preds[i]);
}

}  // namespace

StubPair make_encoders(const RunConfig& cfg) {
  if (cfg.encoder.kind == "adapter") return make_adapter(cfg.encoder.adapter, cfg.encoder.adapter_options);
  if (cfg.encoder.kind != "stub") throw ConfigError("unknown encoder kind '" + cfg.encoder.kind + "'");
  StubOptions opts;
  opts.noise_sigma = cfg.encoder.noise_sigma;
  opts.seed = cfg.encoder.seed;
  opts.stride = cfg.encoder.stride;
  return make_stub_encoder(StubPalette::load(cfg.encoder.palette), opts);
}

PromptEnsemble load_prompts(const RunConfig& cfg) {
  return cfg.prompts.empty() ? PromptEnsemble::defaults() : PromptEnsemble::load(cfg.prompts);
}

LoadedSplit load_split(const DatasetSplit& split, const RunConfig& cfg, const DenseFeatureEncoder& encoder,
                       bool require_gt) {
  if (split.images.empty()) throw ConfigError("dataset split has no image directory");
  if (require_gt && split.gt.empty())
    throw ConfigError("ground truth is required for this command but no gt directory is configured for " +
                      split.images.string());
  const FeatureCache cache = FeatureCache::from_env();
  LoadedSplit out;
  for (const fs::path& path : list_files(split.images, ".ppm")) {
    TrainSample s;
    s.id = path.stem().string();
    s.image = io::read_ppm(path);
    s.features = cache.get_or_compute(encoder, s.id, s.image);
    if (split.regions.empty()) {
      s.prior = slic_regions(s.image, cfg.slic);
    } else {
      fs::path rp = split.regions / (s.id + ".pgm");
      if (!fs::exists(rp)) rp = split.regions / (s.id + ".lgda");
      if (!fs::exists(rp)) throw IngestionError("missing region prior for image " + s.id + " in " + split.regions.string());
      s.prior = load_region_prior(rp);
      require_same_size(s.image.size(), s.prior.ids.size(), ("region prior of " + s.id).c_str());
    }
    if (!split.gt.empty()) {
      const fs::path gp = split.gt / (s.id + ".pgm");
      if (!fs::exists(gp)) throw IngestionError("missing gt for image " + s.id + " in " + split.gt.string());
      LabelMap g = io::read_pgm_labels(gp);
      require_same_size(s.image.size(), g.size(), ("gt of " + s.id).c_str());
      out.gt.push_back(std::move(g));
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

Mat corpus_segment_features(const std::vector<TrainSample>& samples, const TrainConfig& t) {
  std::vector<RowVec> rows;
  for (size_t n = 0; n < samples.size(); ++n) {
    const DenseMap& f = samples[n].features;
    const SegmentSet segs = pool_segments(f, cluster_view(f, t, 0x62616e6bULL, n));
    for (int i = 0; i < segs.count(); ++i)
      if (segs.valid[i]) rows.push_back(segs.embeddings.row(i));
  }
  if (rows.empty()) throw DegenerateError("corpus has no valid segments");
  Mat out(rows.size(), rows.front().size());
  for (size_t i = 0; i < rows.size(); ++i) out.row(i) = rows[i];
  return out;
}

PrototypeBank build_bank(const RunConfig& cfg, const std::vector<TrainSample>& samples, const TextEncoder& text,
                         const PromptEnsemble& prompts) {
  const auto& known = cfg.evaluation.split.known;
  if (known.empty()) throw ConfigError("eval.known lists no classes to build prototypes for");
  const TrainConfig& t = cfg.training;
  const Mat segs = corpus_segment_features(samples, t);
  if (segs.rows() < t.top_m)
    throw ConfigError("corpus has " + std::to_string(segs.rows()) + " valid segments, fewer than top_m = " +
                      std::to_string(t.top_m));
  if (segs.rows() < t.unknown_count)
    throw ConfigError("corpus has " + std::to_string(segs.rows()) + " valid segments, fewer than unknown_count = " +
                      std::to_string(t.unknown_count));
  PrototypeBank bank;
  bank.known_names = known;
  bank.known = build_known_prototypes(encode_class_texts(known, prompts, text), segs, t.top_m);
  bank.unknown = init_unknown_prototypes(segs, t.unknown_count, io::mix_seed(t.seed, 0x756e6b6eULL));
  bank.validate();
  return bank;
}

PrototypeBank cmd_build_prototypes(const RunConfig& cfg) {
  cfg.validate();
  const fs::path out = require_output(cfg);
  const StubPair enc = make_encoders(cfg);
  const LoadedSplit data = load_split(cfg.train, cfg, *enc.dense, false);
  PrototypeBank bank = build_bank(cfg, data.samples, *enc.text, load_prompts(cfg));
  bank.save(out / "prototypes.lgpb");
  report::Table t;
  t.header = {"config_hash", "kind", "index", "name", "norm"};
  for (int i = 0; i < bank.k(); ++i)
    t.add_row({cfg.hash_hex(), "known", std::to_string(i), bank.known_names[i], report::format_number(bank.known.row(i).norm())});
  for (int i = 0; i < bank.u(); ++i)
    t.add_row({cfg.hash_hex(), "unknown", std::to_string(i), "", report::format_number(bank.unknown.row(i).norm())});
  report::write_csv(out / "prototypes.csv", t);
  return bank;
}

TrainResult cmd_train(const RunConfig& cfg, const fs::path& resume) {
  cfg.validate();
  const fs::path out = require_output(cfg);
  const fs::path bank_path = out / "prototypes.lgpb";
  if (!fs::exists(bank_path)) throw ConfigError("no prototype bank at " + bank_path.string() + "; run build-prototypes first");
  const StubPair enc = make_encoders(cfg);
  const LoadedSplit data = load_split(cfg.train, cfg, *enc.dense, false);
  const uint64_t hash = cfg.hash();

  TrainResult res;
  if (resume.empty()) {
    res.state = init_state(cfg.training, PrototypeBank::load(bank_path));
  } else {
    uint64_t stored = 0;
    res.state = load_checkpoint(resume, &stored);
    if (stored != hash)
      throw ConfigError("checkpoint " + resume.string() + " was written with config " + io::hex64(stored) +
                        ", current config is " + io::hex64(hash));
  }

  fs::create_directories(out);
  std::ofstream log(out / "train_log.jsonl", resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw IngestionError("cannot write " + (out / "train_log.jsonl").string());
  if (resume.empty()) log << "{\"config_hash\":\"" << cfg.hash_hex() << "\"}\n";

  TrainRunOptions opts;
  opts.start_iteration = res.state.iteration;
  opts.on_step = [&](const LossBreakdown& b) {
    res.trace.push_back(b);
    log << format_log_record(b) << "\n";
  };
  opts.on_checkpoint = [&](const TrainState& s) {
    char name[32];
    std::snprintf(name, sizeof(name), "iter_%06d.lgck", s.iteration);
    save_checkpoint(out / "checkpoints" / name, s, hash);
  };
  try {
    run_training(res.state, data.samples, cfg.training, opts);
  } catch (const NumericError& e) {
    log.flush();
    throw NumericError(std::string(e.what()) + " (state before the failing step saved under " +
                       (out / "checkpoints").string() + ")");
  }
  log.flush();
  save_checkpoint(out / "model.lgck", res.state, hash);

  report::Table loss;
  loss.header = {"config_hash", "iteration", "lr", "L_t", "L_e", "L_s", "L_u", "total"};
  report::Series total{"total", {}, {}}, lt{"L_t", {}, {}}, le{"L_e", {}, {}}, ls{"L_s", {}, {}};
  for (const auto& b : res.trace) {
    using report::format_number;
    loss.add_row({cfg.hash_hex(), std::to_string(b.iteration), format_number(b.lr), format_number(b.contrastive),
                  format_number(b.embedding), format_number(b.semantic), format_number(b.unknown),
                  format_number(b.total)});
    for (auto* s : {&total, &lt, &le, &ls}) s->x.push_back(b.iteration);
    total.y.push_back(b.total);
    lt.y.push_back(b.contrastive);
    le.y.push_back(b.embedding);
    ls.y.push_back(b.semantic);
  }
  report::write_csv(out / "loss.csv", loss);
  io::write_text_file(out / "loss.svg", report::svg_line_plot("training loss", {total, lt, le, ls}, "iteration",
                                                              "loss", "config " + cfg.hash_hex()));

  // Snapshot: mean total loss over the first and last tenth of this run.
  report::Table summary;
  summary.header = {"config_hash", "iterations", "first_window_total", "last_window_total", "final_L_t",
                    "final_L_e", "final_L_s", "final_L_u"};
  if (!res.trace.empty()) {
    const size_t w = std::max<size_t>(1, res.trace.size() / 10);
    auto mean_total = [&](size_t from) {
      double s = 0;
      for (size_t i = from; i < from + w; ++i) s += res.trace[i].total;
      return s / w;
    };
    const auto& f = res.trace.back();
    using report::format_number;
    summary.add_row({cfg.hash_hex(), std::to_string(res.state.iteration), format_number(mean_total(0)),
                     format_number(mean_total(res.trace.size() - w)), format_number(f.contrastive),
                     format_number(f.embedding), format_number(f.semantic), format_number(f.unknown)});
  }
  report::write_csv(out / "train_summary.csv", summary);
  return res;
}

EvalMode parse_eval_mode(const std::string& s) {
  if (s == "langseg") return EvalMode::kLangseg;
  if (s == "knn") return EvalMode::kKnn;
  if (s == "linear") return EvalMode::kLinear;
  if (s == "track") return EvalMode::kTrack;
  throw ConfigError("unknown eval mode '" + s + "' (expected langseg, knn, linear or track)");
}

std::string to_string(EvalMode m) {
  switch (m) {
    case EvalMode::kLangseg: return "langseg";
    case EvalMode::kKnn: return "knn";
    case EvalMode::kLinear: return "linear";
    case EvalMode::kTrack: return "track";
  }
  return "?";
}

namespace {

EvalResult eval_langseg(const RunConfig& cfg, const TrainState& state, const StubPair& enc, const LoadedSplit& data,
                        const fs::path& pred_dir) {
  const auto& classes = cfg.evaluation.classes;
  const PromptEnsemble prompts = load_prompts(cfg);
  const Mat text = encode_class_texts(classes, prompts, *enc.text);
  ConfusionMatrix cm(static_cast<int>(classes.size()));
  std::vector<LabelMap> preds;
  std::vector<RowVec> v_rows, i_rows;
  for (size_t n = 0; n < data.samples.size(); ++n) {
    const TrainSample& s = data.samples[n];
    const PixelEmbeddingMap z = state.model.embed(s.image);
    preds.push_back(langseg_predict(z, text));
    cm.add(preds.back(), data.gt[n]);
    const SegmentSet v = pool_segments(z, cluster_view(z, cfg.training, 0x6576616cULL, n));
    const SegmentSet i = pool_like(s.features, v);
    for (int k = 0; k < v.count(); ++k)
      if (v.valid[k] && i.valid[k]) v_rows.push_back(v.embeddings.row(k)), i_rows.push_back(i.embeddings.row(k));
  }
  write_predictions(pred_dir, data.samples, preds);
  const auto known = class_indices(classes, cfg.evaluation.split.known);
  const auto unknown = class_indices(classes, cfg.evaluation.split.unknown);
  EvalResult r;
  r.metrics = make_report(cm, known, unknown);
  if (!v_rows.empty()) {
    Mat v(v_rows.size(), v_rows.front().size()), i(i_rows.size(), i_rows.front().size());
    for (size_t k = 0; k < v_rows.size(); ++k) v.row(k) = v_rows[k], i.row(k) = i_rows[k];
    r.metrics.avgsim = compute_avgsim(v, i);
  }

  // Held-out class discovery.
  const PrototypeBank& bank = state.bank;
  for (size_t u = 0; u < unknown.size(); ++u) {
    const int c = unknown[u];
    r.unknown_names.push_back(classes[c]);
    const Vec t = encode_class_text(classes[c], prompts, *enc.text);
    double best = std::numeric_limits<double>::quiet_NaN();
    if (bank.u() > 0) best = (normalized_rows(bank.unknown) * t.normalized()).maxCoeff();
    r.unknown_proto_cos.push_back(best);
    int64_t total = 0, hits = 0;
    for (size_t n = 0; n < data.samples.size(); ++n) {
      const SegmentSet segs = pool_segments(data.samples[n].features, data.samples[n].prior.ids);
      const auto labels = segment_gt(segs.ids, segs.count(), data.gt[n], static_cast<int>(classes.size()));
      for (int k = 0; k < segs.count(); ++k) {
        if (!segs.valid[k] || labels[k] != c) continue;
        ++total;
        hits += pseudo_label(segs.embeddings.row(k), bank) >= bank.k();
      }
    }
    r.unknown_label_rate.push_back(total ? static_cast<double>(hits) / total : std::numeric_limits<double>::quiet_NaN());
  }
  return r;
}

EvalResult eval_knn(const RunConfig& cfg, const TrainState& state, const LoadedSplit& train, const LoadedSplit& data,
                    const fs::path& pred_dir) {
  const int nc = static_cast<int>(cfg.evaluation.classes.size());
  std::vector<RowVec> rows;
  std::vector<int> labels;
  for (size_t n = 0; n < train.samples.size(); ++n) {
    const PixelEmbeddingMap z = state.model.embed(train.samples[n].image);
    const SegmentSet segs = pool_segments(z, cluster_view(z, cfg.training, 0x6b6e6e74ULL, n));
    const auto gt = segment_gt(segs.ids, segs.count(), train.gt[n], nc);
    for (int k = 0; k < segs.count(); ++k)
      if (segs.valid[k] && gt[k] >= 0) rows.push_back(segs.embeddings.row(k)), labels.push_back(gt[k]);
  }
  if (rows.empty()) throw DegenerateError("k-NN: no labelled training segments");
  Mat bank(rows.size(), rows.front().size());
  for (size_t k = 0; k < rows.size(); ++k) bank.row(k) = rows[k];
  ConfusionMatrix cm(nc);
  std::vector<LabelMap> preds;
  for (size_t n = 0; n < data.samples.size(); ++n) {
    const PixelEmbeddingMap z = state.model.embed(data.samples[n].image);
    const SegmentSet segs = pool_segments(z, cluster_view(z, cfg.training, 0x6b6e6e65ULL, n));
    const auto seg_labels = knn_classify_segments(segs.embeddings, bank, labels, cfg.evaluation.knn_k);
    LabelMap pred(z.height, z.width);
    for (size_t p = 0; p < pred.ids.size(); ++p) pred.ids[p] = seg_labels[segs.ids.ids[p]];
    cm.add(pred, data.gt[n]);
    preds.push_back(std::move(pred));
  }
  write_predictions(pred_dir, data.samples, preds);
  EvalResult r;
  r.metrics = make_report(cm, class_indices(cfg.evaluation.classes, cfg.evaluation.split.known),
                          class_indices(cfg.evaluation.classes, cfg.evaluation.split.unknown));
  return r;
}

EvalResult eval_linear(const RunConfig& cfg, const TrainState& state, const LoadedSplit& train,
                       const LoadedSplit& data, const fs::path& pred_dir) {
  const int nc = static_cast<int>(cfg.evaluation.classes.size());
  std::vector<RowVec> rows;
  std::vector<int> labels;
  for (size_t n = 0; n < train.samples.size(); ++n) {
    const PixelEmbeddingMap z = state.model.embed(train.samples[n].image);
    std::vector<int> pixels;
    for (int p = 0; p < z.pixels(); ++p)
      if (train.gt[n].ids[p] != kIgnoreLabel) pixels.push_back(p);
    const int cap = cfg.evaluation.probe_pixels_per_image;
    if (cap > 0 && static_cast<int>(pixels.size()) > cap) {
      const auto pick = sample_without_replacement(static_cast<int>(pixels.size()), cap,
                                                   io::mix_seed(cfg.training.seed, 0x70726f62ULL, n));
      std::vector<int> kept;
      for (int i : pick) kept.push_back(pixels[i]);
      std::sort(kept.begin(), kept.end());
      pixels = std::move(kept);
    }
    for (int p : pixels) {
      if (train.gt[n].ids[p] >= nc) throw IngestionError("gt label outside the class list");
      rows.push_back(z.values.row(p));
      labels.push_back(train.gt[n].ids[p]);
    }
  }
  if (rows.empty()) throw DegenerateError("linear probe: no labelled training pixels");
  Mat x(rows.size(), rows.front().size());
  for (size_t k = 0; k < rows.size(); ++k) x.row(k) = rows[k];
  const LinearProbe probe = LinearProbe::fit(x, labels, cfg.evaluation.probe);
  ConfusionMatrix cm(nc);
  std::vector<LabelMap> preds;
  for (size_t n = 0; n < data.samples.size(); ++n) {
    preds.push_back(probe.predict(state.model.embed(data.samples[n].image)));
    cm.add(preds.back(), data.gt[n]);
  }
  write_predictions(pred_dir, data.samples, preds);
  EvalResult r;
  r.metrics = make_report(cm, class_indices(cfg.evaluation.classes, cfg.evaluation.split.known),
                          class_indices(cfg.evaluation.classes, cfg.evaluation.split.unknown));
  return r;
}

EvalResult eval_track(const RunConfig& cfg, const TrainState* state, const StubPair& enc, const fs::path& pred_dir) {
  if (cfg.video.frames.empty()) throw ConfigError("tracking needs video.frames");
  if (cfg.video.masks.empty()) throw ConfigError("tracking needs video.masks (gt instance masks)");
  const auto frame_paths = list_files(cfg.video.frames, ".ppm");
  std::vector<PixelEmbeddingMap> feats;
  std::vector<LabelMap> gt;
  for (const auto& p : frame_paths) {
    const DenseMap img = io::read_ppm(p);
    feats.push_back(state ? state->model.embed(img) : enc.dense->encode_dense(img));
    const fs::path mp = cfg.video.masks / (p.stem().string() + ".pgm");
    if (!fs::exists(mp)) throw IngestionError("missing gt mask " + mp.string());
    gt.push_back(io::read_pgm_labels(mp));
  }
  const auto preds = propagate_masks(feats, gt.front(), cfg.evaluation.propagation);
  for (size_t t = 0; t < preds.size(); ++t)
    io::write_pgm_labels(pred_dir / (frame_paths[t].stem().string() + ".pgm"), preds[t]);
  // Frame 0 is given, so scores cover frames 1..T-1.
  const std::vector<LabelMap> p(preds.begin() + 1, preds.end()), g(gt.begin() + 1, gt.end());
  const JfResult jf = compute_jf(p, g);
  EvalResult r;
  r.metrics.j_mean = jf.j_mean;
  r.metrics.f_mean = jf.f_mean;
  r.j_per_frame = jf.j_per_frame;
  r.f_per_frame = jf.f_per_frame;
  return r;
}

double mean_or_nan(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

}  // namespace

EvalResult cmd_eval(const RunConfig& cfg, EvalMode mode) {
  cfg.validate();
  const fs::path out = require_output(cfg);
  const std::string m = to_string(mode);
  const fs::path pred_dir = out / "predictions" / m;
  const StubPair enc = make_encoders(cfg);
  const auto& classes = cfg.evaluation.classes;
  EvalResult r;
  if (mode == EvalMode::kTrack) {
    if (cfg.evaluation.track_features == "encoder") {
      r = eval_track(cfg, nullptr, enc, pred_dir);
    } else {
      const TrainState state = load_model(cfg);
      r = eval_track(cfg, &state, enc, pred_dir);
    }
  } else {
    if (classes.empty()) throw ConfigError("eval.classes is empty");
    const TrainState state = load_model(cfg);
    if (cfg.eval.gt.empty()) throw ConfigError("eval mode '" + m + "' needs eval_data.gt");
    const LoadedSplit data = load_split(cfg.eval, cfg, *enc.dense, true);
    if (mode == EvalMode::kLangseg) {
      r = eval_langseg(cfg, state, enc, data, pred_dir);
    } else {
      if (cfg.train.gt.empty()) throw ConfigError("eval mode '" + m + "' needs train_data.gt to fit on");
      const LoadedSplit train = load_split(cfg.train, cfg, *enc.dense, true);
      r = mode == EvalMode::kKnn ? eval_knn(cfg, state, train, data, pred_dir)
                                 : eval_linear(cfg, state, train, data, pred_dir);
    }
  }

  using report::format_number;
  const std::string hash = cfg.hash_hex();
  const auto& w = cfg.training.weights;
  report::Table t;
  t.header = {"config_hash", "mode", "w_contrastive", "w_embedding", "w_semantic", "unknown_count"};
  for (const auto& c : report::metric_columns()) t.header.push_back(c);
  t.header.push_back("unknown_proto_cos");
  t.header.push_back("unknown_label_rate");
  std::vector<std::string> row = {hash,
                                  m,
                                  format_number(w.contrastive),
                                  format_number(w.embedding),
                                  format_number(w.semantic),
                                  std::to_string(cfg.training.unknown_count)};
  for (const auto& v : report::metric_values(r.metrics)) row.push_back(v);
  row.push_back(format_number(mean_or_nan(r.unknown_proto_cos)));
  row.push_back(format_number(mean_or_nan(r.unknown_label_rate)));
  t.add_row(std::move(row));
  report::write_csv(out / ("eval_" + m + ".csv"), t);

  if (mode == EvalMode::kTrack) {
    report::Table f;
    f.header = {"config_hash", "frame", "J", "F"};
    report::Series js{"J", {}, {}}, fs_{"F", {}, {}};
    for (size_t i = 0; i < r.j_per_frame.size(); ++i) {
      f.add_row({hash, std::to_string(i + 1), format_number(r.j_per_frame[i]), format_number(r.f_per_frame[i])});
      js.x.push_back(i + 1), fs_.x.push_back(i + 1);
      js.y.push_back(r.j_per_frame[i]), fs_.y.push_back(r.f_per_frame[i]);
    }
    report::write_csv(out / "eval_track_frames.csv", f);
    io::write_text_file(out / "eval_track.svg",
                        report::svg_line_plot("mask propagation", {js, fs_}, "frame", "score", "config " + hash));
  } else {
    report::Table c;
    c.header = {"config_hash", "class", "split", "IoU"};
    const auto& split = cfg.evaluation.split;
    for (size_t k = 0; k < classes.size(); ++k) {
      const bool is_unknown = std::find(split.unknown.begin(), split.unknown.end(), classes[k]) != split.unknown.end();
      c.add_row({hash, classes[k], is_unknown ? "unknown" : "known", format_number(r.metrics.per_class_iou[k])});
    }
    report::write_csv(out / ("eval_" + m + "_classes.csv"), c);
    io::write_text_file(out / ("eval_" + m + ".svg"),
                        report::svg_bar_chart("per-class IoU (" + m + ")", classes, r.metrics.per_class_iou,
                                              "config " + hash));
  }
  return r;
}

report::Table cmd_report(const std::vector<fs::path>& run_dirs, const std::string& mode, const fs::path& out) {
  if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");
  parse_eval_mode(mode);
  std::vector<report::Table> tables;
  std::vector<std::string> names;
  for (const auto& d : run_dirs) {
    const fs::path p = d / ("eval_" + mode + ".csv");
    if (!fs::exists(p)) throw ConfigError("run directory has no " + p.filename().string() + ": " + d.string());
    tables.push_back(report::read_csv(p));
    names.push_back(d.filename().empty() ? d.parent_path().filename().string() : d.filename().string());
  }
  const report::Table merged = report::merge_runs(tables, names);
  report::write_csv(out / "report.csv", merged);
  const std::string metric = mode == "track" ? "J_mean" : "mIoU";
  std::vector<double> values;
  for (size_t r = 0; r < merged.rows.size(); ++r) values.push_back(report::parse_number(merged.cell(r, metric)));
  std::vector<std::string> labels;
  for (size_t r = 0; r < merged.rows.size(); ++r) labels.push_back(merged.cell(r, "run"));
  io::write_text_file(out / "report.svg", report::svg_bar_chart(metric + " per run", labels, values));
  if (mode != "track")
    report::write_csv(out / "ablation.csv", report::ablation_matrix(merged, {"mIoU", "mIoU_k", "mIoU_u", "hIoU", "avgsim"}));
  return merged;
}

}  // namespace lgseg::pipeline
