#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lgseg/contrastive.hpp"
#include "lgseg/geometry_augment.hpp"
#include "lgseg/pixel_encoder.hpp"
#include "lgseg/prototype_bank.hpp"
#include "lgseg/segmentation_core.hpp"

namespace lgseg {

struct LossWeights {
  double contrastive = 1.0;  // L_t
  double embedding = 1.0;    // L_e
  double semantic = 1.0;     // L_s

  bool operator==(const LossWeights&) const = default;
};

/// Training hyperparameters. Defaults follow the reference schedule
/// (kappa 10, 36 segments per view, top-32 known prototypes, 64 unknowns,
/// batch 8 with a 2-batch memory bank, lr 0.001 with polynomial decay).
struct TrainConfig {
  int iterations = 20000;
  int batch_size = 8;
  int views_per_image = 2;
  double kappa = 10.0;
  int segments_per_view = 36;
  int kmeans_iterations = 10;
  int top_m = 32;
  int unknown_count = 64;
  int bank_depth = 2;
  int anchors_per_view = 1024;
  double lr0 = 0.001;
  double poly_power = 0.9;
  double momentum = 0.9;
  double weight_decay = 0.0;
  /// Softmax temperature inside phi; 1.0 means raw cosine similarities.
  double semantic_temperature = 1.0;
  LossWeights weights;
  uint64_t seed = 0;
  int checkpoint_every = 0;  // 0: only the final checkpoint
  EncoderArch arch;
  AugmentConfig augment;

  void validate() const;
};

/// Weighted sum of the three training losses. Throws NumericError when any
/// component is non-finite.
double total_loss(double contrastive, double embedding, double semantic, const LossWeights& w = {});

/// Polynomial decay: lr0 * (1 - iter / iterations)^power.
double lr_at(int iter, const TrainConfig& config);

struct LossBreakdown {
  int iteration = 0;
  double lr = 0.0;
  double contrastive = 0.0;
  double embedding = 0.0;
  double semantic = 0.0;
  double unknown = 0.0;
  double total = 0.0;
  int anchors_used = 0;
  int anchors_excluded = 0;
  int segments = 0;
  int unknown_assigned = 0;
};

/// One training image with its frozen encoder features (at image
/// resolution) and region prior.
struct TrainSample {
  std::string id;
  DenseMap image;
  DenseMap features;
  RegionPrior prior;
};

struct TrainState {
  PixelEncoder model;
  std::vector<Mat> velocity;  // momentum buffers, one per model parameter
  PrototypeBank bank;
  Mat unknown_velocity;
  MemoryBank memory{2};
  int iteration = 0;
};

TrainState init_state(const TrainConfig& config, PrototypeBank bank);

/// One optimizer step on the model (weighted L_t + L_e + L_s) and one on
/// the unknown prototypes (L_u, then renormalization); the memory bank is
/// updated last. The lr comes from lr_at(state.iteration, config).
LossBreakdown train_step(TrainState& state, std::span<const TrainSample* const> batch, const TrainConfig& config);

/// Deterministic batch composition for an iteration.
std::vector<int> batch_indices(uint64_t seed, int iteration, int dataset_size, int batch_size);

// Checkpoint file (versioned binary, little-endian):
//   char[4] "LGCK" | u32 version (1) | u64 config hash | i32 iteration
//   encoder arch | model params | momentum buffers
//   prototype bank (same payload as the bank file) | unknown momentum
//   memory bank batches
void save_checkpoint(const std::filesystem::path& path, const TrainState& state, uint64_t config_hash);
TrainState load_checkpoint(const std::filesystem::path& path, uint64_t* config_hash = nullptr);

/// Line-delimited JSON record for a training log.
std::string format_log_record(const LossBreakdown& b);

struct TrainRunOptions {
  int start_iteration = 0;
  int end_iteration = -1;  // exclusive; -1 = config.iterations
  std::function<void(const LossBreakdown&)> on_step;
  std::function<void(const TrainState&)> on_checkpoint;
};

/// Runs train_step over [start, end) with batches from batch_indices().
/// On a non-finite loss the state before the failing step is handed to
/// on_checkpoint and the NumericError is rethrown.
void run_training(TrainState& state, std::span<const TrainSample> dataset, const TrainConfig& config,
                  const TrainRunOptions& options = {});

}  // namespace lgseg
