#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lgseg/config.hpp"
#include "lgseg/eval_suite.hpp"
#include "lgseg/prototype_bank.hpp"
#include "lgseg/report.hpp"
#include "lgseg/trainer.hpp"
#include "lgseg/vlm_interface.hpp"

namespace lgseg::pipeline {

// Output layout under RunConfig::output:
//   prototypes.lgpb, prototypes.csv        build-prototypes
//   train_log.jsonl, loss.csv, loss.svg,
//   train_summary.csv, model.lgck,
//   checkpoints/iter_NNNNNN.lgck           train
//   eval_<mode>.csv, eval_<mode>_classes.csv,
//   eval_<mode>.svg, predictions/<mode>/   eval
//   report.csv, report.svg, ablation.csv   report

struct LoadedSplit {
  std::vector<TrainSample> samples;
  std::vector<LabelMap> gt;  // empty when the split has no gt directory
};

StubPair make_encoders(const RunConfig& cfg);
PromptEnsemble load_prompts(const RunConfig& cfg);

/// Reads images (sorted by file name), encoder features (through the
/// LGSEG_CACHE_DIR cache when set), region priors and optional gt.
LoadedSplit load_split(const DatasetSplit& split, const RunConfig& cfg, const DenseFeatureEncoder& encoder,
                       bool require_gt);

/// Mean encoder feature of every segment of the corpus, where segments are
/// spherical k-means clusters of each image's encoder features.
Mat corpus_segment_features(const std::vector<TrainSample>& samples, const TrainConfig& t);

/// Known prototypes from the known class names, unknown ones sampled from
/// the corpus segments. Throws ConfigError when the corpus has fewer
/// segments than top_m or unknown_count.
PrototypeBank build_bank(const RunConfig& cfg, const std::vector<TrainSample>& samples, const TextEncoder& text,
                         const PromptEnsemble& prompts);

PrototypeBank cmd_build_prototypes(const RunConfig& cfg);

struct TrainResult {
  std::vector<LossBreakdown> trace;
  TrainState state;
};

/// `resume` (optional) continues from a checkpoint written with the same
/// config hash.
TrainResult cmd_train(const RunConfig& cfg, const std::filesystem::path& resume = {});

enum class EvalMode { kLangseg, kKnn, kLinear, kTrack };
EvalMode parse_eval_mode(const std::string& s);
std::string to_string(EvalMode m);

struct EvalResult {
  MetricReport metrics;
  /// Held-out class discovery, filled by the language-driven mode when the
  /// class split has unknown classes: best cosine between an unknown
  /// prototype and each held-out class text, and the fraction of its gt
  /// segments whose encoder features get an unknown pseudo-label.
  std::vector<std::string> unknown_names;
  std::vector<double> unknown_proto_cos;
  std::vector<double> unknown_label_rate;
  std::vector<double> j_per_frame;
  std::vector<double> f_per_frame;
};

EvalResult cmd_eval(const RunConfig& cfg, EvalMode mode);

/// Merges eval_<mode>.csv of each run directory into `out`.
report::Table cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::string& mode,
                         const std::filesystem::path& out);

}  // namespace lgseg::pipeline
