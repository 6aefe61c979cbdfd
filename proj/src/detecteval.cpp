#include "hardmine/detecteval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "hardmine/errors.hpp"

namespace hardmine {

namespace {

struct Candidate {
  BBox box;
  double score;
};

// Scored, relocalized, clipped box for one (proposal, class) pair.
bool make_candidate(const HeadOutput& out, const HeadParams& params,
                    const BBox& source, int cls, const Scene& scene,
                    const DetectOpts& opts, Candidate& cand,
                    uint64_t& degenerate) {
  const double score = out.probs[static_cast<size_t>(cls)];
  if (score < opts.score_thresh) return false;
  const uint32_t slot = params.dims.loc_slot(cls);
  BoxDelta d{out.deltas[slot], out.deltas[slot + 1], out.deltas[slot + 2],
             out.deltas[slot + 3]};
  d = params.delta_stats.unapply(d);
  const BBox decoded = decode_delta(source, d, opts.delta_clamp);
  const BBox clipped = clip_to_extent(decoded, scene.width, scene.height);
  if (is_degenerate(clipped)) {
    ++degenerate;
    return false;
  }
  cand = Candidate{clipped, score};
  return true;
}

std::vector<Detection> suppress_per_class(
    const std::vector<std::vector<Candidate>>& per_class, const Scene& scene,
    double nms_iou) {
  std::vector<Detection> dets;
  for (size_t c = 0; c < per_class.size(); ++c) {
    const auto& cands = per_class[c];
    if (cands.empty()) continue;
    std::vector<BBox> boxes(cands.size());
    std::vector<double> scores(cands.size());
    for (size_t i = 0; i < cands.size(); ++i) {
      boxes[i] = cands[i].box;
      scores[i] = cands[i].score;
    }
    for (int k : nms(boxes, scores, nms_iou))
      dets.push_back(Detection{scene.scene_id, static_cast<int>(c) + 1,
                               cands[k].box, cands[k].score});
  }
  return dets;
}

}  // namespace

SceneDetections detect(const HeadParams& params, const Scene& scene,
                       const DetectOpts& opts) {
  const uint32_t K = params.dims.num_classes;
  const uint32_t D = params.dims.feature_dim;
  SceneDetections result;
  std::vector<std::vector<Candidate>> per_class(K);

  HeadOutput out;
  for (size_t i = 0; i < scene.proposals.size(); ++i) {
    forward(params, std::span<const float>(scene.feature(i, D), D), out);
    for (uint32_t c = 1; c <= K; ++c) {
      Candidate cand;
      if (make_candidate(out, params, scene.proposals[i], static_cast<int>(c),
                         scene, opts, cand, result.degenerate_count))
        per_class[c - 1].push_back(cand);
    }
  }
  result.detections = suppress_per_class(per_class, scene, opts.nms_iou);
  return result;
}

SceneDetections detect_iterative(const HeadParams& params, const Scene& scene,
                                 const FeatureSynth& synth,
                                 const DetectOpts& opts) {
  const uint32_t K = params.dims.num_classes;
  const uint32_t D = params.dims.feature_dim;
  SceneDetections result;

  // Round 1: same candidates detect() would produce, pre-NMS.
  std::vector<std::vector<Candidate>> pool(K);
  HeadOutput out;
  for (size_t i = 0; i < scene.proposals.size(); ++i) {
    forward(params, std::span<const float>(scene.feature(i, D), D), out);
    for (uint32_t c = 1; c <= K; ++c) {
      Candidate cand;
      if (make_candidate(out, params, scene.proposals[i], static_cast<int>(c),
                         scene, opts, cand, result.degenerate_count))
        pool[c - 1].push_back(cand);
    }
  }

  // Round 2: rescore and relocalize the high-scoring round-1 boxes; the
  // final pool is the union of both rounds.
  std::vector<float> feat(D);
  for (uint32_t c = 1; c <= K; ++c) {
    auto& cands = pool[c - 1];
    const size_t n_round1 = cands.size();
    for (size_t i = 0; i < n_round1; ++i) {
      if (cands[i].score < opts.rescore_thresh) continue;
      synth.featurize(cands[i].box, feat.data());
      forward(params, feat, out);
      Candidate cand;
      if (make_candidate(out, params, cands[i].box, static_cast<int>(c), scene,
                         opts, cand, result.degenerate_count))
        cands.push_back(cand);
    }
  }

  // NMS on the union, then weighted voting among overlapping pool boxes.
  for (uint32_t c = 1; c <= K; ++c) {
    const auto& cands = pool[c - 1];
    if (cands.empty()) continue;
    std::vector<BBox> boxes(cands.size());
    std::vector<double> scores(cands.size());
    for (size_t i = 0; i < cands.size(); ++i) {
      boxes[i] = cands[i].box;
      scores[i] = cands[i].score;
    }
    for (int k : nms(boxes, scores, opts.nms_iou)) {
      double wsum = 0.0, x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;
      double member_max = 0.0;
      for (size_t j = 0; j < cands.size(); ++j) {
        if (iou(boxes[j], boxes[static_cast<size_t>(k)]) < opts.vote_iou)
          continue;
        const double w = scores[j];
        wsum += w;
        x1 += w * boxes[j].x1;
        y1 += w * boxes[j].y1;
        x2 += w * boxes[j].x2;
        y2 += w * boxes[j].y2;
        member_max = std::max(member_max, scores[j]);
      }
      // empty or zero-weight voting set keeps the kept box untouched
      BBox voted = boxes[static_cast<size_t>(k)];
      double voted_score = scores[static_cast<size_t>(k)];
      if (wsum > 0.0) {
        voted = BBox{x1 / wsum, y1 / wsum, x2 / wsum, y2 / wsum};
        voted_score = member_max;
      }
      result.detections.push_back(
          Detection{scene.scene_id, static_cast<int>(c), voted, voted_score});
    }
  }
  return result;
}

EvalReport voc_ap(const std::vector<Detection>& detections,
                  const std::vector<Scene>& scenes, uint32_t num_classes,
                  double iou_thresh) {
  std::unordered_map<uint64_t, const Scene*> by_id;
  for (const Scene& s : scenes) by_id[s.scene_id] = &s;

  EvalReport report;
  report.ap.assign(num_classes, std::nan(""));
  report.gt_count.assign(num_classes, 0);
  report.det_count.assign(num_classes, 0);

  for (const Scene& s : scenes)
    for (const GtObject& o : s.objects) {
      if (o.class_id < 1 || o.class_id > static_cast<int>(num_classes))
        throw std::invalid_argument("voc_ap: gt class out of range");
      ++report.gt_count[static_cast<size_t>(o.class_id) - 1];
    }

  double ap_sum = 0.0;
  for (uint32_t c = 1; c <= num_classes; ++c) {
    std::vector<size_t> order;
    for (size_t i = 0; i < detections.size(); ++i)
      if (detections[i].class_id == static_cast<int>(c)) order.push_back(i);
    report.det_count[c - 1] = order.size();

    const uint64_t npos = report.gt_count[c - 1];
    if (npos == 0) continue;  // AP undefined, excluded from the mean

    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (detections[a].score != detections[b].score)
        return detections[a].score > detections[b].score;
      return detections[a].scene_id < detections[b].scene_id;
    });

    // Greedy matching against unmatched gt of the same class.
    std::unordered_map<uint64_t, std::vector<bool>> used;
    std::vector<bool> is_tp(order.size(), false);
    for (size_t rank = 0; rank < order.size(); ++rank) {
      const Detection& det = detections[order[rank]];
      auto it = by_id.find(det.scene_id);
      if (it == by_id.end())
        throw std::invalid_argument("voc_ap: detection references unknown scene " +
                                    std::to_string(det.scene_id));
      const Scene& s = *it->second;
      auto& flags = used[det.scene_id];
      flags.resize(s.objects.size(), false);

      double best_iou = 0.0;
      int best_gt = -1;
      for (size_t g = 0; g < s.objects.size(); ++g) {
        if (flags[g] || s.objects[g].class_id != static_cast<int>(c)) continue;
        const double v = iou(det.box, s.objects[g].box);
        if (v > best_iou) {  // equal IoU keeps the lower gt index
          best_iou = v;
          best_gt = static_cast<int>(g);
        }
      }
      if (best_gt >= 0 && best_iou >= iou_thresh) {
        is_tp[rank] = true;
        flags[static_cast<size_t>(best_gt)] = true;
      }
    }

    // Precision envelope over the recall steps (all-point interpolation).
    double ap = 0.0;
    if (!order.empty()) {
      std::vector<double> prec(order.size()), rec(order.size());
      uint64_t tp = 0;
      for (size_t i = 0; i < order.size(); ++i) {
        if (is_tp[i]) ++tp;
        prec[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        rec[i] = static_cast<double>(tp) / static_cast<double>(npos);
      }
      for (size_t i = order.size() - 1; i-- > 0;)
        prec[i] = std::max(prec[i], prec[i + 1]);
      double prev_rec = 0.0;
      for (size_t i = 0; i < order.size(); ++i) {
        ap += (rec[i] - prev_rec) * prec[i];
        prev_rec = rec[i];
      }
    }
    report.ap[c - 1] = ap;
    ap_sum += ap;
    ++report.classes_with_gt;
  }

  report.map = report.classes_with_gt > 0
                   ? ap_sum / static_cast<double>(report.classes_with_gt)
                   : 0.0;
  return report;
}

void write_detections_csv(const std::vector<Detection>& dets,
                          const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "scene_id,class_id,x1,y1,x2,y2,score\n";
  char buf[256];
  for (const Detection& d : dets) {
    std::snprintf(buf, sizeof(buf),
                  "%llu,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<unsigned long long>(d.scene_id), d.class_id,
                  d.box.x1, d.box.y1, d.box.x2, d.box.y2, d.score);
    out << buf;
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

std::vector<Detection> read_detections_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  std::string line;
  if (!std::getline(in, line))
    throw ParseError(path + ": empty detections file");
  std::vector<Detection> dets;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Detection d;
    unsigned long long sid = 0;
    if (std::sscanf(line.c_str(), "%llu,%d,%lg,%lg,%lg,%lg,%lg", &sid,
                    &d.class_id, &d.box.x1, &d.box.y1, &d.box.x2, &d.box.y2,
                    &d.score) != 7)
      throw ParseError(path + ": malformed detection at line " +
                       std::to_string(lineno));
    d.scene_id = sid;
    dets.push_back(d);
  }
  return dets;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "class_id,ap,gt_count,det_count\n";
  char buf[128];
  for (size_t c = 0; c < report.ap.size(); ++c) {
    if (std::isnan(report.ap[c]))
      std::snprintf(buf, sizeof(buf), "%zu,,%llu,%llu\n", c + 1,
                    static_cast<unsigned long long>(report.gt_count[c]),
                    static_cast<unsigned long long>(report.det_count[c]));
    else
      std::snprintf(buf, sizeof(buf), "%zu,%.9g,%llu,%llu\n", c + 1,
                    report.ap[c],
                    static_cast<unsigned long long>(report.gt_count[c]),
                    static_cast<unsigned long long>(report.det_count[c]));
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "all,%.9g,,\n", report.map);
  out << buf;
  if (!out) throw std::runtime_error(path + ": write failed");
}

std::string format_report(const EvalReport& report) {
  std::ostringstream os;
  char buf[128];
  for (size_t c = 0; c < report.ap.size(); ++c) {
    if (std::isnan(report.ap[c]))
      std::snprintf(buf, sizeof(buf),
                    "class %2zu: AP     -    (no gt, %llu detections)\n", c + 1,
                    static_cast<unsigned long long>(report.det_count[c]));
    else
      std::snprintf(buf, sizeof(buf),
                    "class %2zu: AP %8.4f (%llu gt, %llu detections)\n", c + 1,
                    report.ap[c],
                    static_cast<unsigned long long>(report.gt_count[c]),
                    static_cast<unsigned long long>(report.det_count[c]));
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "mAP: %.4f over %u classes\n", report.map,
                report.classes_with_gt);
  os << buf;
  return os.str();
}

}  // namespace hardmine
