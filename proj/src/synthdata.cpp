#include "hardmine/synthdata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "hardmine/errors.hpp"
#include "hardmine/rng.hpp"

namespace hardmine {

namespace {

// All generated coordinates pass through float32 so that the on-disk
// payload round-trips bit-exactly.
double snap32(double v) { return static_cast<double>(static_cast<float>(v)); }

BBox snap32(const BBox& b) {
  return BBox{snap32(b.x1), snap32(b.y1), snap32(b.x2), snap32(b.y2)};
}

// Shape of the synthetic feature space. Frozen after calibrating the
// default dataset: fg imbalance band, hard-negative supply, probe accuracy.
constexpr double kPosAmplitude = 0.06;
constexpr double kPosFreqScale = 2.0;
constexpr double kCorruption = 1.0;
constexpr double kDistractorGain = 1.5;
constexpr double kJitterPoolFraction = 0.10;
constexpr double kJitterSpreadLo = 0.6;
constexpr double kJitterSpreadHi = 3.0;

uint64_t box_hash(const BBox& b) {
  auto f = [](double v) {
    return static_cast<uint64_t>(
        std::bit_cast<uint32_t>(static_cast<float>(v)));
  };
  return mix_seed({f(b.x1), f(b.y1), f(b.x2), f(b.y2)});
}

// Spatial affinity of a query box to an object for the distractor term: a
// ring beside the object, scaled by size similarity and damped by overlap.
// Peak corruption lands on boxes that sit next to the object at near-zero
// IoU, i.e. regions a bg_lo > 0 heuristic never trains on.
double proximity(const BBox& b, const BBox& o) {
  const double dcx = (b.cx() - o.cx()) / o.width();
  const double dcy = (b.cy() - o.cy()) / o.height();
  const double dist = std::sqrt(dcx * dcx + dcy * dcy);
  const double r = (dist - 0.9) / 0.35;
  const double ring = std::exp(-r * r);
  const double size = std::exp(-std::fabs(std::log(b.width() / o.width())) -
                               std::fabs(std::log(b.height() / o.height())));
  return ring * size * (1.0 - iou(b, o));
}

void normalize(std::vector<double>& v) {
  double n2 = 0;
  for (double x : v) n2 += x * x;
  const double n = std::sqrt(n2);
  if (n > 0)
    for (double& x : v) x /= n;
}

}  // namespace

void validate(const DatasetConfig& cfg) {
  if (cfg.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (cfg.feature_dim < 8) throw ConfigError("feature_dim must be >= 8");
  if (cfg.proposals_per_scene < 32)
    throw ConfigError("proposals_per_scene must be >= 32");
  if (cfg.num_scenes < 1) throw ConfigError("num_scenes must be >= 1");
  if (cfg.objects_min < 1 || cfg.objects_max < cfg.objects_min)
    throw ConfigError("objects_per_scene range invalid");
  if (!(cfg.distractor_rate >= 0.0 && cfg.distractor_rate <= 1.0))
    throw ConfigError("distractor_rate must be in [0,1]");
  if (!(cfg.jitter_scale > 0.0 && std::isfinite(cfg.jitter_scale)))
    throw ConfigError("jitter_scale must be positive");
  if (!(cfg.noise_sigma >= 0.0 && std::isfinite(cfg.noise_sigma)))
    throw ConfigError("noise_sigma must be nonnegative");
  if (!(cfg.scene_width > 0 && cfg.scene_height > 0))
    throw ConfigError("scene extent must be positive");
  if (!(cfg.obj_size_min > 0 && cfg.obj_size_max >= cfg.obj_size_min))
    throw ConfigError("object size range invalid");
  if (cfg.obj_size_min >= std::min(cfg.scene_width, cfg.scene_height))
    throw ConfigError("objects do not fit the scene extent");
}

FeatureSynth::FeatureSynth(const DatasetConfig& cfg, uint64_t scene_id,
                           const std::vector<GtObject>& objects)
    : dim_(cfg.feature_dim),
      scene_w_(snap32(cfg.scene_width)),
      scene_h_(snap32(cfg.scene_height)),
      noise_sigma_(cfg.noise_sigma),
      seed_(cfg.seed),
      scene_id_(scene_id),
      objects_(objects) {
  prototypes_.resize(cfg.num_classes);
  for (uint32_t c = 1; c <= cfg.num_classes; ++c) {
    SplitMix64 r(mix_seed({seed_, stream_tag::kPrototype, c}));
    std::vector<double> v(dim_);
    for (auto& x : v) x = r.normal();
    normalize(v);
    prototypes_[c - 1] = std::move(v);
  }

  SplitMix64 rp(mix_seed({seed_, stream_tag::kPosEnc}));
  pos_freq_.resize(static_cast<size_t>(dim_) * 4);
  pos_phase_.resize(dim_);
  for (uint32_t j = 0; j < dim_; ++j) {
    for (int k = 0; k < 4; ++k) pos_freq_[j * 4 + k] = kPosFreqScale * rp.normal();
    pos_phase_[j] = rp.uniform(0.0, 6.283185307179586);
  }

  // One corrupted prototype per ordered class pair, fixed for the whole
  // dataset: hard negatives look the same everywhere, so a model that
  // trains on them actually benefits at test time. The corruption component
  // is orthogonalized against every prototype; it correlates with the
  // target class strongly enough to fool a coarse model, while a trained
  // one can discount it without touching real foreground features.
  std::vector<std::vector<double>> pair_dirs(
      static_cast<size_t>(cfg.num_classes) * cfg.num_classes);
  for (uint32_t c = 1; c <= cfg.num_classes; ++c)
    for (uint32_t other = 1; other <= cfg.num_classes; ++other) {
      if (c == other) continue;
      SplitMix64 rp2(mix_seed({seed_, stream_tag::kDistractor, c, other}));
      std::vector<double> u(dim_);
      for (auto& x : u) x = rp2.normal();
      for (const auto& proto : prototypes_) {
        double d = 0;
        for (uint32_t j = 0; j < dim_; ++j) d += u[j] * proto[j];
        for (uint32_t j = 0; j < dim_; ++j) u[j] -= d * proto[j];
      }
      normalize(u);
      std::vector<double> dir = prototypes_[other - 1];
      for (uint32_t d = 0; d < dim_; ++d) dir[d] += kCorruption * u[d];
      normalize(dir);
      pair_dirs[(c - 1) * cfg.num_classes + (other - 1)] = std::move(dir);
    }

  // Which objects carry a distractor (and toward which class) is derived by
  // hashing, never by consuming the scene stream, so a file-loaded scene
  // reconstructs the same state.
  for (size_t i = 0; i < objects_.size(); ++i) {
    SplitMix64 rd(mix_seed({seed_, stream_tag::kDistractor, scene_id_, i}));
    if (rd.next_double() >= cfg.distractor_rate) continue;
    int other = 1 + static_cast<int>(rd.next_below(cfg.num_classes - 1));
    if (other >= objects_[i].class_id) ++other;
    distractors_.push_back(Distractor{
        static_cast<int>(i), objects_[i].hardness,
        pair_dirs[static_cast<size_t>(objects_[i].class_id - 1) * cfg.num_classes +
                  (other - 1)]});
  }
}

const std::vector<double>& FeatureSynth::prototype(int class_id) const {
  return prototypes_.at(class_id - 1);
}

void FeatureSynth::positional_encoding(const BBox& box, double* out) const {
  const double nx = box.cx() / scene_w_;
  const double ny = box.cy() / scene_h_;
  const double lw = std::log(box.width() / scene_w_);
  const double lh = std::log(box.height() / scene_h_);
  for (uint32_t j = 0; j < dim_; ++j) {
    const double* f = &pos_freq_[j * 4];
    out[j] = kPosAmplitude *
             std::sin(f[0] * nx + f[1] * ny + f[2] * lw + f[3] * lh + pos_phase_[j]);
  }
}

void FeatureSynth::featurize(const BBox& box_in, float* out) const {
  const BBox box = snap32(box_in);
  std::vector<double> acc(dim_);
  positional_encoding(box, acc.data());

  for (const auto& o : objects_) {
    const double v = iou(box, o.box);
    if (v <= 0.0) continue;
    // Appearance kicks in fully once the box covers the object at the fg
    // threshold; partial views carry a damped signal. The step at 0.5
    // keeps the labels cleanly separable in feature space while leaving
    // the near-miss band proto-correlated (those are the hard negatives).
    double coeff;
    if (v >= 0.5) {
      coeff = v;
    } else {
      const double t = std::clamp((v - 0.15) / 0.35, 0.0, 1.0);
      coeff = 0.6 * v * t * t * (3.0 - 2.0 * t);
    }
    if (coeff <= 0.0) continue;
    const auto& p = prototypes_[o.class_id - 1];
    for (uint32_t d = 0; d < dim_; ++d) acc[d] += coeff * p[d];
  }

  for (const auto& dt : distractors_) {
    const double p = proximity(box, objects_[dt.object_index].box);
    if (p <= 1e-9) continue;
    const double w = kDistractorGain * dt.strength * p;
    for (uint32_t d = 0; d < dim_; ++d) acc[d] += w * dt.direction[d];
  }

  if (noise_sigma_ > 0.0) {
    SplitMix64 rn(mix_seed({seed_, stream_tag::kNoise, scene_id_, box_hash(box)}));
    for (uint32_t d = 0; d < dim_; ++d) acc[d] += noise_sigma_ * rn.normal();
  }

  for (uint32_t d = 0; d < dim_; ++d) out[d] = static_cast<float>(acc[d]);
}

std::vector<float> FeatureSynth::featurize(const BBox& box) const {
  std::vector<float> out(dim_);
  featurize(box, out.data());
  return out;
}

Scene generate_scene(const DatasetConfig& cfg, uint64_t scene_id) {
  validate(cfg);
  SplitMix64 rng(mix_seed({cfg.seed, stream_tag::kScene, scene_id}));

  Scene scene;
  scene.scene_id = scene_id;
  scene.width = snap32(cfg.scene_width);
  scene.height = snap32(cfg.scene_height);

  const uint32_t n_obj =
      cfg.objects_min +
      static_cast<uint32_t>(rng.next_below(cfg.objects_max - cfg.objects_min + 1));
  for (uint32_t i = 0; i < n_obj; ++i) {
    GtObject o;
    o.class_id = 1 + static_cast<int>(rng.next_below(cfg.num_classes));
    const double w =
        std::min(rng.uniform(cfg.obj_size_min, cfg.obj_size_max), scene.width);
    const double h =
        std::min(rng.uniform(cfg.obj_size_min, cfg.obj_size_max), scene.height);
    const double cx = rng.uniform(0.5 * w, scene.width - 0.5 * w);
    const double cy = rng.uniform(0.5 * h, scene.height - 0.5 * h);
    o.box = snap32(BBox{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
    o.hardness = snap32(rng.next_double());
    scene.objects.push_back(o);
  }

  const uint32_t total = cfg.proposals_per_scene;
  const uint32_t n_jitter = std::max<uint32_t>(
      1, static_cast<uint32_t>(std::llround(kJitterPoolFraction * total)));

  // fg pool and near misses: jittered copies of objects. The jitter
  // magnitude is spread out so some copies stay above IoU 0.5 and others
  // scatter into the background interval.
  for (uint32_t i = 0; i < n_jitter && scene.proposals.size() < total; ++i) {
    const GtObject& o =
        scene.objects[rng.next_below(scene.objects.size())];
    BBox prop = o.box;
    for (int attempt = 0; attempt < 8; ++attempt) {
      const double m =
          cfg.jitter_scale * rng.uniform(kJitterSpreadLo, kJitterSpreadHi);
      const double cx = o.box.cx() + rng.uniform(-m, m) * o.box.width();
      const double cy = o.box.cy() + rng.uniform(-m, m) * o.box.height();
      const double w = o.box.width() * std::exp(rng.uniform(-m, m));
      const double h = o.box.height() * std::exp(rng.uniform(-m, m));
      const BBox cand = clip_to_extent(
          BBox{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h},
          scene.width, scene.height);
      if (!is_degenerate(cand, 1e-3)) {
        prop = cand;
        break;
      }
    }
    scene.proposals.push_back(snap32(prop));
  }

  // bg pool: uniform random boxes over the scene.
  while (scene.proposals.size() < total) {
    const double w = std::min(
        rng.uniform(0.6 * cfg.obj_size_min, 1.2 * cfg.obj_size_max), scene.width);
    const double h = std::min(
        rng.uniform(0.6 * cfg.obj_size_min, 1.2 * cfg.obj_size_max), scene.height);
    const double cx = rng.uniform(0.5 * w, scene.width - 0.5 * w);
    const double cy = rng.uniform(0.5 * h, scene.height - 0.5 * h);
    scene.proposals.push_back(
        snap32(BBox{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h}));
  }

  const FeatureSynth synth(cfg, scene_id, scene.objects);
  scene.features.resize(static_cast<size_t>(total) * cfg.feature_dim);
  for (uint32_t i = 0; i < total; ++i)
    synth.featurize(scene.proposals[i], &scene.features[i * cfg.feature_dim]);

  return scene;
}

Dataset generate_split(const DatasetConfig& cfg, uint64_t first_scene_id,
                       uint32_t count) {
  validate(cfg);
  Dataset ds;
  ds.config = cfg;
  ds.first_scene_id = first_scene_id;
  ds.scenes.reserve(count);
  for (uint32_t i = 0; i < count; ++i)
    ds.scenes.push_back(generate_scene(cfg, first_scene_id + i));
  return ds;
}

}  // namespace hardmine
