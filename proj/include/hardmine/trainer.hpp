#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hardmine/detecteval.hpp"
#include "hardmine/roihead.hpp"
#include "hardmine/sampler.hpp"
#include "hardmine/synthdata.hpp"

namespace hardmine {

struct TrainConfig {
  SamplerConfig sampler;
  double lr_initial = 0.001;
  double lr_decay_factor = 0.1;
  uint32_t lr_decay_every = 1500;
  uint32_t total_iters = 4000;
  uint32_t snapshot_every = 500;
  double momentum = 0.9925;
  uint64_t seed = 1;
  uint32_t hidden_dim = 64;
  double lambda = 1.0;
  bool class_agnostic_loc = false;
  // OHEM only: rank the pooled per-image NMS survivors of all N images
  // jointly instead of taking B/N per image.
  bool joint_selection = false;
  bool normalize_deltas = false;
  std::string snapshot_dir;  // empty: no snapshot files are written
};

void validate(const TrainConfig& cfg, const DatasetConfig& data_cfg);

struct IterationRecord {
  uint32_t iter = 0;
  double lr = 0.0;
  uint32_t selected_count = 0;
  double mean_selected_loss = 0.0;
  uint64_t forward_roi_count = 0;   // readonly-phase RoIs for ohem,
  uint64_t backward_roi_count = 0;  // == backward for heuristic/all
  double wall_time_ms = 0.0;
  // Diagnostics kept in memory only (not part of the CSV contract):
  double mean_selected_cls = 0.0;
  double mean_selected_loc = 0.0;
  std::vector<uint32_t> drawn_scenes;
  bool skipped_update = false;
};

struct TrainResult {
  HeadParams params;
  SgdState momentum;
  std::vector<IterationRecord> records;
  std::vector<std::string> snapshot_paths;
};

// SGD over the dataset with per-iteration mini-batches of N scenes and B/N
// RoIs each. For ohem, each iteration runs a readonly forward pass over all
// non-excluded RoIs under the current parameters, selects the hardest by
// loss (NMS-deduplicated), then forwards+backwards only the selection.
// Gradients accumulate across the N single-scene passes into one update.
TrainResult train(const TrainConfig& cfg, const Dataset& data);

// Continue a run from a snapshot written by train(); subsequent records are
// identical to the original run's (the live state is quantized to snapshot
// precision whenever one is written).
TrainResult resume_train(const TrainConfig& cfg, const Dataset& data,
                         const std::string& snapshot_path);

double lr_at(const TrainConfig& cfg, uint32_t iter);

// Per-iteration rng streams, derived (not sequential) so that resume and
// per-image parallel sampling reproduce exactly.
SplitMix64 scene_draw_rng(uint64_t seed, uint32_t iter);
SplitMix64 sampling_rng(uint64_t seed, uint32_t iter, uint32_t image);

struct MeanLoss {
  double total = 0.0, cls = 0.0, loc = 0.0;
  uint64_t roi_count = 0;
};

// Sampling-independent training diagnostic: mean loss over ALL RoIs of the
// split, labeled with bg_lo = 0 so every region counts.
MeanLoss eval_mean_loss(const HeadParams& params, const Dataset& split);

// Deterministic columns only; wall times go to the sibling timing CSV.
void write_train_log_csv(const std::vector<IterationRecord>& records,
                         const std::string& path);
void write_timing_csv(const std::vector<IterationRecord>& records,
                      const std::string& path);

struct AblationOptions {
  std::vector<uint64_t> seeds = {1, 2, 3};
  double allrois_lr_multiplier = 3.0;  // lr raise for the big-batch variant
  uint32_t allrois_batch = 2048;
  DetectOpts detect;
  uint32_t max_parallel = 0;  // 0: hardware concurrency
};

struct AblationVariant {
  std::string name;
  TrainConfig config;
};

// The six documented rows: heuristic bg_lo 0.1 / 0, heuristic N=1,
// all-RoIs big batch with raised lr, ohem N=1, ohem N=2.
std::vector<AblationVariant> ablation_variants(const TrainConfig& base,
                                               const AblationOptions& opts);

struct AblationRow {
  std::string variant;
  uint64_t seed = 0;
  double final_map = 0.0;
  double final_mean_loss = 0.0;
  double mean_iter_time_ms = 0.0;
};

std::vector<AblationRow> run_ablation_suite(const TrainConfig& base,
                                            const Dataset& train_split,
                                            const Dataset& test_split,
                                            const AblationOptions& opts);

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::string& path);

// mAP of a parameter snapshot over a split (shared by ablation and cli).
EvalReport evaluate_detector(const HeadParams& params, const Dataset& split,
                             const DetectOpts& opts, bool iterative = false);

}  // namespace hardmine
