#include "hardmine/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hardmine/errors.hpp"

namespace hardmine {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kHeuristic:
      return "heuristic";
    case Strategy::kOhem:
      return "ohem";
    case Strategy::kAll:
      return "all";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "heuristic") return Strategy::kHeuristic;
  if (name == "ohem") return Strategy::kOhem;
  if (name == "all") return Strategy::kAll;
  throw ConfigError("unknown strategy '" + name +
                    "' (expected heuristic, ohem or all)");
}

void validate(const SamplerConfig& cfg) {
  if (cfg.images_per_batch < 1)
    throw ConfigError("images_per_batch must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.batch_size % cfg.images_per_batch != 0)
    throw ConfigError("batch_size must be divisible by images_per_batch");
  if (!(cfg.fg_fraction >= 0.0 && cfg.fg_fraction <= 1.0))
    throw ConfigError("fg_fraction must be in [0,1]");
  if (!(cfg.fg_thresh > 0.0 && cfg.fg_thresh <= 1.0))
    throw ConfigError("fg_thresh must be in (0,1]");
  if (!(cfg.bg_lo >= 0.0 && cfg.bg_lo < cfg.fg_thresh))
    throw ConfigError("bg_lo must be in [0, fg_thresh)");
  if (!(cfg.nms_dedup_iou >= 0.0 && cfg.nms_dedup_iou <= 1.0))
    throw ConfigError("nms_dedup_iou must be in [0,1]");
}

std::vector<LabeledRoI> label_rois(const std::vector<BBox>& proposals,
                                   const std::vector<GtObject>& objects,
                                   double fg_thresh, double bg_lo) {
  if (proposals.empty())
    throw std::invalid_argument("label_rois: no proposals");

  std::vector<LabeledRoI> out;
  out.reserve(proposals.size());
  for (uint32_t i = 0; i < proposals.size(); ++i) {
    LabeledRoI roi;
    roi.roi_index = i;
    roi.box = proposals[i];
    for (size_t g = 0; g < objects.size(); ++g) {
      const double v = iou(proposals[i], objects[g].box);
      if (v > roi.max_iou) {  // ties keep the lower gt index
        roi.max_iou = v;
        roi.matched_gt = static_cast<int>(g);
      }
    }
    if (roi.max_iou >= fg_thresh) {
      const GtObject& gt = objects[static_cast<size_t>(roi.matched_gt)];
      roi.label = gt.class_id;
      roi.target = encode_delta(roi.box, gt.box);
    } else if (roi.max_iou < bg_lo) {
      roi.excluded = true;
    }
    out.push_back(std::move(roi));
  }
  return out;
}

namespace {

// Uniform sample of `take` entries without replacement (partial
// Fisher-Yates); pool is permuted in place.
void take_without_replacement(std::vector<uint32_t>& pool, uint32_t take,
                              SplitMix64& rng, std::vector<uint32_t>& out) {
  for (uint32_t i = 0; i < take; ++i) {
    const size_t j = i + rng.next_below(pool.size() - i);
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
}

}  // namespace

std::vector<uint32_t> heuristic_sample(const std::vector<LabeledRoI>& labeled,
                                       uint32_t quota, double fg_fraction,
                                       SplitMix64& rng) {
  if (quota < 1) throw std::invalid_argument("heuristic_sample: quota < 1");

  std::vector<uint32_t> fg, bg;
  for (const auto& roi : labeled) {
    if (roi.excluded) continue;
    (roi.label >= 1 ? fg : bg).push_back(roi.roi_index);
  }
  if (fg.empty() && bg.empty())
    throw SamplingError("heuristic_sample: no sampleable RoIs");

  const uint32_t fg_target =
      static_cast<uint32_t>(std::llround(fg_fraction * quota));
  uint32_t n_fg = std::min<uint32_t>(fg_target, fg.size());
  if (bg.empty())  // nothing to fill with; take as much fg as possible
    n_fg = std::min<uint32_t>(quota, fg.size());

  std::vector<uint32_t> out;
  out.reserve(quota);
  take_without_replacement(fg, n_fg, rng, out);

  const uint32_t need = quota - n_fg;
  const uint32_t n_bg = std::min<uint32_t>(need, bg.size());
  take_without_replacement(bg, n_bg, rng, out);

  // Undersupplied image: repeat-sample bg (or fg when bg is empty).
  const std::vector<uint32_t>& pad_pool = bg.empty() ? fg : bg;
  for (uint32_t i = n_fg + n_bg; i < quota; ++i)
    out.push_back(pad_pool[rng.next_below(pad_pool.size())]);
  return out;
}

std::vector<uint32_t> ohem_select(const std::vector<double>& losses,
                                  const std::vector<BBox>& boxes,
                                  uint32_t quota, double nms_dedup_iou) {
  if (losses.size() != boxes.size())
    throw std::invalid_argument("ohem_select: losses/boxes length mismatch");

  // NMS visits in descending loss order, so its survivors come out already
  // ranked; truncating keeps the quota hardest.
  const std::vector<int> kept = nms(boxes, losses, nms_dedup_iou);
  const size_t n = std::min<size_t>(quota, kept.size());
  return std::vector<uint32_t>(kept.begin(), kept.begin() + n);
}

std::vector<uint32_t> all_sample(const std::vector<LabeledRoI>& labeled,
                                 uint32_t quota, SplitMix64& rng) {
  std::vector<uint32_t> pool;
  for (const auto& roi : labeled)
    if (!roi.excluded) pool.push_back(roi.roi_index);

  if (pool.size() <= quota) return pool;

  std::vector<uint32_t> out;
  out.reserve(quota);
  take_without_replacement(pool, quota, rng, out);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace hardmine
