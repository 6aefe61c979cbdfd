#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hardmine/geometry.hpp"
#include "hardmine/rng.hpp"
#include "hardmine/synthdata.hpp"

namespace hardmine {

enum class Strategy { kHeuristic, kOhem, kAll };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct SamplerConfig {
  Strategy strategy = Strategy::kHeuristic;
  uint32_t batch_size = 128;      // B, total RoIs per SGD iteration
  uint32_t images_per_batch = 2;  // N
  double fg_fraction = 0.25;      // heuristic only
  double bg_lo = 0.1;
  double fg_thresh = 0.5;
  double nms_dedup_iou = 0.7;  // ohem only
  uint64_t seed = 1;

  uint32_t quota() const { return batch_size / images_per_batch; }
};

void validate(const SamplerConfig& cfg);

// A proposal after ground-truth matching.
//   label >= 1  <=>  max_iou >= fg_thresh  <=>  target present
//   label == 0 and !excluded  =>  max_iou in [bg_lo, fg_thresh)
//   excluded  <=>  max_iou < bg_lo; never enters any mini-batch
struct LabeledRoI {
  uint32_t roi_index = 0;
  BBox box;
  int label = 0;
  double max_iou = 0.0;
  int matched_gt = -1;
  std::optional<BoxDelta> target;
  bool excluded = false;
};

std::vector<LabeledRoI> label_rois(const std::vector<BBox>& proposals,
                                   const std::vector<GtObject>& objects,
                                   double fg_thresh, double bg_lo);

// Classic fg:bg rebalanced sampling: round(fg_fraction*quota) fg (fewer if
// unavailable), remainder bg without replacement, bg repeated with
// replacement only once the bg pool is exhausted. Throws SamplingError when
// nothing is sampleable.
std::vector<uint32_t> heuristic_sample(const std::vector<LabeledRoI>& labeled,
                                       uint32_t quota, double fg_fraction,
                                       SplitMix64& rng);

// Hard example selection: NMS-dedup boxes using loss as the score, then
// take the quota highest-loss survivors. No fg/bg ratio of any kind.
// Callers pass non-excluded RoIs only; indices refer to the input arrays.
std::vector<uint32_t> ohem_select(const std::vector<double>& losses,
                                  const std::vector<BBox>& boxes,
                                  uint32_t quota, double nms_dedup_iou);

// Every non-excluded RoI, uniformly subsampled down to quota when over.
std::vector<uint32_t> all_sample(const std::vector<LabeledRoI>& labeled,
                                 uint32_t quota, SplitMix64& rng);

}  // namespace hardmine
