#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "hardmine/binio.hpp"
#include "hardmine/errors.hpp"
#include "hardmine/rng.hpp"
#include "hardmine/synthdata.hpp"

using namespace hardmine;

namespace {

double dot(const std::vector<float>& f, const std::vector<double>& p) {
  double s = 0;
  for (size_t i = 0; i < p.size(); ++i) s += f[i] * p[i];
  return s;
}

double max_iou_with_objects(const BBox& b, const std::vector<GtObject>& objs) {
  double best = 0;
  for (const auto& o : objs) best = std::max(best, iou(b, o.box));
  return best;
}

}  // namespace

TEST_CASE("config validation") {
  DatasetConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  SUBCASE("K < 2") {
    cfg.num_classes = 1;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
  }
  SUBCASE("D < 8") {
    cfg.feature_dim = 4;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
  }
  SUBCASE("too few proposals") {
    cfg.proposals_per_scene = 8;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
  }
  SUBCASE("bad distractor rate") {
    cfg.distractor_rate = 1.5;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
  }
  SUBCASE("bad object range") {
    cfg.objects_min = 3;
    cfg.objects_max = 2;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
  }
}

TEST_CASE("scene generation is a pure function of (seed, scene_id)") {
  DatasetConfig cfg;
  cfg.num_scenes = 4;
  const Scene a = generate_scene(cfg, 17);
  const Scene b = generate_scene(cfg, 17);
  CHECK(a == b);
  const Scene c = generate_scene(cfg, 18);
  CHECK(a.proposals != c.proposals);
}

TEST_CASE("scene structure invariants") {
  DatasetConfig cfg;
  for (uint64_t sid = 0; sid < 20; ++sid) {
    const Scene s = generate_scene(cfg, sid);
    CHECK(s.objects.size() >= cfg.objects_min);
    CHECK(s.objects.size() <= cfg.objects_max);
    CHECK(s.proposals.size() == cfg.proposals_per_scene);
    CHECK(s.features.size() == cfg.proposals_per_scene * cfg.feature_dim);
    for (const auto& o : s.objects) {
      CHECK(o.class_id >= 1);
      CHECK(o.class_id <= static_cast<int>(cfg.num_classes));
      CHECK(o.box.valid());
      CHECK(o.box.x1 >= 0);
      CHECK(o.box.x2 <= s.width);
      CHECK(o.box.y1 >= 0);
      CHECK(o.box.y2 <= s.height);
    }
    for (const auto& p : s.proposals) {
      CHECK(p.valid());
      CHECK(p.x1 >= 0);
      CHECK(p.x2 <= s.width);
      CHECK(p.y1 >= 0);
      CHECK(p.y2 <= s.height);
    }
    for (float f : s.features) CHECK(std::isfinite(f));
  }
}

TEST_CASE("objects_per_scene range (1,1) gives exactly one object") {
  DatasetConfig cfg;
  cfg.objects_min = cfg.objects_max = 1;
  for (uint64_t sid = 0; sid < 10; ++sid)
    CHECK(generate_scene(cfg, sid).objects.size() == 1);
}

TEST_CASE("default config fg fraction lands in the 1-5 percent band") {
  DatasetConfig cfg;  // defaults
  uint64_t fg = 0, total = 0;
  uint64_t scenes_in_loose_band = 0;
  const int n_scenes = 100;
  for (uint64_t sid = 0; sid < n_scenes; ++sid) {
    const Scene s = generate_scene(cfg, sid);
    uint64_t scene_fg = 0;
    for (const auto& p : s.proposals)
      if (max_iou_with_objects(p, s.objects) >= 0.5) ++scene_fg;
    fg += scene_fg;
    total += s.proposals.size();
    const double frac =
        static_cast<double>(scene_fg) / static_cast<double>(s.proposals.size());
    if (frac >= 0.005 && frac <= 0.10) ++scenes_in_loose_band;
  }
  const double frac = static_cast<double>(fg) / static_cast<double>(total);
  INFO("fg fraction = ", frac);
  CHECK(frac >= 0.01);
  CHECK(frac <= 0.05);
  // most individual scenes stay near the band too
  CHECK(scenes_in_loose_band >= 90);
}

TEST_CASE("featurize: disjoint box with no noise/distractors is pure posenc") {
  DatasetConfig cfg;
  cfg.noise_sigma = 0.0;
  cfg.distractor_rate = 0.0;
  const Scene s = generate_scene(cfg, 3);
  const FeatureSynth synth(cfg, 3, s.objects);

  // a box far from every object
  BBox probe{0.5, 0.5, 6.5, 6.5};
  bool disjoint = false;
  for (double x = 0.5; x < s.width - 8 && !disjoint; x += 7) {
    for (double y = 0.5; y < s.height - 8; y += 7) {
      const BBox cand{x, y, x + 6, y + 6};
      if (max_iou_with_objects(cand, s.objects) == 0.0) {
        probe = cand;
        disjoint = true;
        break;
      }
    }
  }
  REQUIRE(disjoint);

  const auto feat = synth.featurize(probe);
  std::vector<double> pos(cfg.feature_dim);
  synth.positional_encoding(probe, pos.data());
  for (uint32_t d = 0; d < cfg.feature_dim; ++d)
    CHECK(feat[d] == doctest::Approx(pos[d]).epsilon(1e-6));
}

TEST_CASE("featurize: the object's own box carries its prototype at coefficient 1") {
  DatasetConfig cfg;
  cfg.noise_sigma = 0.0;
  cfg.distractor_rate = 0.0;
  cfg.objects_min = cfg.objects_max = 1;
  const Scene s = generate_scene(cfg, 5);
  const FeatureSynth synth(cfg, 5, s.objects);
  const GtObject& o = s.objects[0];

  const auto feat = synth.featurize(o.box);
  std::vector<double> pos(cfg.feature_dim);
  synth.positional_encoding(o.box, pos.data());
  const auto& proto = synth.prototype(o.class_id);
  for (uint32_t d = 0; d < cfg.feature_dim; ++d)
    CHECK(feat[d] - pos[d] == doctest::Approx(proto[d]).epsilon(1e-5));
}

TEST_CASE("hard negatives exist: bg correlation above the median fg correlation") {
  DatasetConfig cfg;  // defaults: distractor_rate > 0
  REQUIRE(cfg.distractor_rate > 0.0);
  std::vector<double> fg_corr;
  std::vector<double> bg_best_corr;
  const int n_scenes = 100;
  for (uint64_t sid = 0; sid < n_scenes; ++sid) {
    const Scene s = generate_scene(cfg, sid);
    const FeatureSynth synth(cfg, sid, s.objects);
    for (size_t i = 0; i < s.proposals.size(); ++i) {
      std::vector<float> f(s.feature(i, cfg.feature_dim),
                           s.feature(i, cfg.feature_dim) + cfg.feature_dim);
      double best_iou = 0;
      int best_cls = 0;
      for (const auto& o : s.objects) {
        const double v = iou(s.proposals[i], o.box);
        if (v > best_iou) {
          best_iou = v;
          best_cls = o.class_id;
        }
      }
      if (best_iou >= 0.5) {
        fg_corr.push_back(dot(f, synth.prototype(best_cls)));
      } else {
        double best = -1e30;
        for (uint32_t c = 1; c <= cfg.num_classes; ++c)
          best = std::max(best, dot(f, synth.prototype(static_cast<int>(c))));
        bg_best_corr.push_back(best);
      }
    }
  }
  REQUIRE(!fg_corr.empty());
  std::sort(fg_corr.begin(), fg_corr.end());
  const double median_fg = fg_corr[fg_corr.size() / 2];
  const auto hard = static_cast<uint64_t>(
      std::count_if(bg_best_corr.begin(), bg_best_corr.end(),
                    [&](double v) { return v > median_fg; }));
  INFO("median fg corr = ", median_fg, ", hard bg count = ", hard);
  // at least 1 per 10 scenes
  CHECK(hard >= n_scenes / 10);
}

TEST_CASE("a linear probe separates fg from bg above 80 percent") {
  DatasetConfig cfg;  // defaults
  std::vector<std::vector<float>> fg_feats, bg_feats;
  SplitMix64 pick(99);
  for (uint64_t sid = 200; fg_feats.size() < 1200; ++sid) {
    const Scene s = generate_scene(cfg, sid);
    for (size_t i = 0; i < s.proposals.size(); ++i) {
      const bool fg = max_iou_with_objects(s.proposals[i], s.objects) >= 0.5;
      if (!fg && pick.next_double() > 0.04) continue;  // balance the classes
      auto& bucket = fg ? fg_feats : bg_feats;
      bucket.emplace_back(s.feature(i, cfg.feature_dim),
                          s.feature(i, cfg.feature_dim) + cfg.feature_dim);
    }
  }
  const size_t n_each = std::min(fg_feats.size(), bg_feats.size());
  std::vector<std::vector<float>> feats;
  std::vector<int> labels;
  for (size_t i = 0; i < n_each; ++i) {  // interleave for an even split
    feats.push_back(fg_feats[i]);
    labels.push_back(1);
    feats.push_back(bg_feats[i]);
    labels.push_back(0);
  }
  const size_t n_train = 1000;
  REQUIRE(feats.size() >= n_train + 500);

  // logistic regression by plain gradient descent
  const uint32_t d = cfg.feature_dim;
  std::vector<double> w(d + 1, 0.0);
  for (int epoch = 0; epoch < 600; ++epoch) {
    std::vector<double> grad(d + 1, 0.0);
    for (size_t i = 0; i < n_train; ++i) {
      double z = w[d];
      for (uint32_t j = 0; j < d; ++j) z += w[j] * feats[i][j];
      const double pred = 1.0 / (1.0 + std::exp(-z));
      const double err = pred - labels[i];
      for (uint32_t j = 0; j < d; ++j) grad[j] += err * feats[i][j];
      grad[d] += err;
    }
    for (uint32_t j = 0; j <= d; ++j) w[j] -= 1.0 / n_train * grad[j];
  }

  uint64_t correct = 0, held = 0;
  for (size_t i = n_train; i < feats.size(); ++i) {
    double z = w[d];
    for (uint32_t j = 0; j < d; ++j) z += w[j] * feats[i][j];
    if ((z > 0) == (labels[i] == 1)) ++correct;
    ++held;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(held);
  INFO("probe held-out accuracy = ", acc, " over ", held);
  CHECK(acc > 0.80);
}

TEST_CASE("dataset file round trip is bit exact") {
  namespace fsys = std::filesystem;
  const auto dir = fsys::temp_directory_path() / "hm_synthdata_test";
  fsys::create_directories(dir);
  const std::string path = (dir / "tiny.train").string();

  DatasetConfig cfg;
  cfg.num_scenes = 10;
  cfg.proposals_per_scene = 40;
  const Dataset ds = generate_split(cfg, 0, 10);
  write_dataset(ds, path);
  const Dataset back = read_dataset(path);
  CHECK(back == ds);

  // write(read(file)) reproduces the bytes
  const std::string path2 = (dir / "tiny2.train").string();
  write_dataset(back, path2);
  CHECK(binio::read_file(path) == binio::read_file(path2));

  SUBCASE("regenerating from the embedded config reproduces the contents") {
    const Dataset regen = generate_split(back.config, back.first_scene_id,
                                         static_cast<uint32_t>(back.scenes.size()));
    CHECK(regen == back);
  }

  SUBCASE("truncated file raises a parse error with a record location") {
    const std::string full = binio::read_file(path);
    const std::string cut_path = (dir / "cut.train").string();
    binio::write_file(cut_path, full.substr(0, full.size() / 2));
    try {
      read_dataset(cut_path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("scene record") != std::string::npos);
    }
  }

  SUBCASE("bad magic raises a parse error") {
    const std::string junk_path = (dir / "junk.train").string();
    binio::write_file(junk_path, "XXXXnotadataset");
    CHECK_THROWS_AS(read_dataset(junk_path), ParseError);
  }

  SUBCASE("version mismatch raises a version error") {
    std::string full = binio::read_file(path);
    full[4] = 99;  // bump the little-endian version field
    const std::string v_path = (dir / "badver.train").string();
    binio::write_file(v_path, full);
    CHECK_THROWS_AS(read_dataset(v_path), VersionError);
  }

  fsys::remove_all(dir);
}
