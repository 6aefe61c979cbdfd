#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hardmine/geometry.hpp"
#include "hardmine/roihead.hpp"
#include "hardmine/synthdata.hpp"

namespace hardmine {

struct Detection {
  uint64_t scene_id = 0;
  int class_id = 0;  // in [1, K]
  BBox box;
  double score = 0.0;
};

struct DetectOpts {
  double score_thresh = 0.25;
  double nms_iou = 0.3;
  double delta_clamp = kDeltaClamp;
  // detect_iterative only:
  double rescore_thresh = 0.5;  // stage-1 boxes at/above are re-run
  double vote_iou = 0.5;        // membership for weighted box voting
};

struct SceneDetections {
  std::vector<Detection> detections;
  uint64_t degenerate_count = 0;  // decoded boxes discarded after clipping
};

// Score every proposal for every class, decode the class's delta slot,
// clip, drop below score_thresh, then per-class NMS.
SceneDetections detect(const HeadParams& params, const Scene& scene,
                       const DetectOpts& opts);

// Two-round localization: high-scoring first-round boxes are re-featurized,
// rescored and relocalized; NMS runs on the union and each kept box is
// replaced by the score-weighted average of overlapping candidates.
SceneDetections detect_iterative(const HeadParams& params, const Scene& scene,
                                 const FeatureSynth& synth,
                                 const DetectOpts& opts);

struct EvalReport {
  // Indexed by class_id - 1. ap is NaN for classes with no gt instances;
  // those are excluded from map.
  std::vector<double> ap;
  std::vector<uint64_t> gt_count;
  std::vector<uint64_t> det_count;
  double map = 0.0;
  uint32_t classes_with_gt = 0;
};

// PASCAL-style evaluation at a single IoU threshold: greedy score-ordered
// matching against unmatched ground truth, AP as the area under the
// precision envelope (all-point interpolation).
EvalReport voc_ap(const std::vector<Detection>& detections,
                  const std::vector<Scene>& scenes, uint32_t num_classes,
                  double iou_thresh = 0.5);

void write_detections_csv(const std::vector<Detection>& dets,
                          const std::string& path);
std::vector<Detection> read_detections_csv(const std::string& path);
void write_report_csv(const EvalReport& report, const std::string& path);
std::string format_report(const EvalReport& report);

}  // namespace hardmine
