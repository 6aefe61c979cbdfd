#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hardmine/geometry.hpp"

namespace hardmine {

// One annotated object. hardness scales how strongly this object's
// distractor (if active) corrupts nearby features.
struct GtObject {
  int class_id = 1;  // in [1, K]; 0 is reserved for background
  BBox box;
  double hardness = 0.0;

  bool operator==(const GtObject&) const = default;
};

// One synthetic "image": ground truth, proposal RoIs and their features.
// features is row-major, proposals.size() x feature_dim.
struct Scene {
  uint64_t scene_id = 0;
  double width = 0.0, height = 0.0;
  std::vector<GtObject> objects;
  std::vector<BBox> proposals;
  std::vector<float> features;

  const float* feature(size_t roi, size_t dim) const {
    return features.data() + roi * dim;
  }

  bool operator==(const Scene&) const = default;
};

struct DatasetConfig {
  uint64_t seed = 1;
  uint32_t num_scenes = 500;  // train split; test split ids follow directly
  uint32_t test_scenes = 100;
  uint32_t num_classes = 5;  // K
  uint32_t feature_dim = 32;  // D
  uint32_t proposals_per_scene = 200;
  uint32_t objects_min = 1, objects_max = 4;
  double distractor_rate = 0.3;
  double jitter_scale = 0.35;
  double noise_sigma = 0.08;
  double scene_width = 256.0, scene_height = 256.0;
  double obj_size_min = 24.0, obj_size_max = 96.0;

  bool operator==(const DatasetConfig&) const = default;
};

// Throws ConfigError when an invariant is violated.
void validate(const DatasetConfig& cfg);

// Deterministic per-RoI feature synthesizer for one scene. Rebuilt from
// (config, scene) alone, so file-loaded scenes can featurize arbitrary
// query boxes (used by iterative box regression).
//
// feature(box) = sum_o iou(box, o.box) * prototype(o.class)
//              + positional encoding of (cx, cy, w, h)
//              + sum over active distractors of
//                  hardness_o * proximity(box, o) * corrupted prototype of a
//                  different class
//              + iid noise of scale noise_sigma, hashed from the box coords.
class FeatureSynth {
 public:
  FeatureSynth(const DatasetConfig& cfg, uint64_t scene_id,
               const std::vector<GtObject>& objects);

  void featurize(const BBox& box, float* out) const;
  std::vector<float> featurize(const BBox& box) const;

  // Unit-norm class prototype, for probes and tests.
  const std::vector<double>& prototype(int class_id) const;

  void positional_encoding(const BBox& box, double* out) const;

 private:
  struct Distractor {
    int object_index;
    double strength;  // hardness of the carrying object
    std::vector<double> direction;
  };

  uint32_t dim_;
  double scene_w_, scene_h_;
  double noise_sigma_;
  uint64_t seed_, scene_id_;
  std::vector<GtObject> objects_;
  std::vector<std::vector<double>> prototypes_;  // [K], unit norm
  std::vector<double> pos_freq_;                 // D x 4
  std::vector<double> pos_phase_;                // D
  std::vector<Distractor> distractors_;
};

// Pure function of (cfg.seed, scene_id). Proposals mix per-object jittered
// copies (the fg pool plus near misses) with uniform random boxes so that
// the fraction of proposals at max-IoU >= 0.5 lands around a few percent.
Scene generate_scene(const DatasetConfig& cfg, uint64_t scene_id);

struct Dataset {
  DatasetConfig config;
  uint64_t first_scene_id = 0;
  std::vector<Scene> scenes;

  bool operator==(const Dataset&) const = default;
};

Dataset generate_split(const DatasetConfig& cfg, uint64_t first_scene_id,
                       uint32_t count);

// Binary container: header (format version, rng name, full config, id range)
// followed by per-scene records; numeric payloads little-endian float32.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace hardmine
