// hardmine: experiment driver for the synthetic detection training testbed.
// Subcommands: gen, train, eval, ablate. Everything an invocation produces
// is a pure function of (config file, flags, seed, input files), timestamps
// in the manifest aside.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "hardmine/detecteval.hpp"
#include "hardmine/errors.hpp"
#include "hardmine/run_config.hpp"
#include "hardmine/synthdata.hpp"
#include "hardmine/trainer.hpp"

namespace fs = std::filesystem;
using hardmine::ConfigError;
using hardmine::KvConfig;

namespace {

constexpr const char* kVersion = "0.1.0";

// Exit code contract: 0 success, 2 config error, 3 training abort,
// 4 eval error; 1 for anything else.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitTrainAbort = 3;
constexpr int kExitEval = 4;
constexpr int kExitOther = 1;

class EvalError : public std::runtime_error {
 public:
  explicit EvalError(const std::string& what) : std::runtime_error(what) {}
};

// One writer per output directory.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f)
      throw std::runtime_error("output directory is locked by another run: " +
                               path_.string());
    std::fclose(f);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

std::string utc_now() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    uint64_t seed, const KvConfig& cfg,
                    const nlohmann::ordered_json& artifacts) {
  const std::string canonical = cfg.canonical();
  char hash[32];
  std::snprintf(hash, sizeof(hash), "fnv1a64:%016llx",
                static_cast<unsigned long long>(hardmine::fnv1a64(canonical)));
  nlohmann::ordered_json m;
  m["tool"] = "hardmine";
  m["version"] = kVersion;
  m["command"] = command;
  m["seed"] = seed;
  m["config_hash"] = hash;
  m["effective_config"] = canonical;
  m["artifacts"] = artifacts;
  m["created_utc"] = utc_now();
  std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
  out << m.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write manifest");
}

hardmine::DatasetConfig dataset_config_from(const KvConfig& kv) {
  hardmine::DatasetConfig c;
  c.seed = std::stoull(kv.require("seed"));
  c.num_scenes = static_cast<uint32_t>(std::stoul(kv.require("num_scenes")));
  c.num_classes = static_cast<uint32_t>(std::stoul(kv.require("classes")));
  c.feature_dim = static_cast<uint32_t>(std::stoul(kv.require("feature_dim")));
  c.proposals_per_scene =
      static_cast<uint32_t>(std::stoul(kv.require("proposals_per_scene")));
  c.test_scenes = kv.get_u32("test_scenes", c.num_scenes / 5);
  c.objects_min = kv.get_u32("objects_min", c.objects_min);
  c.objects_max = kv.get_u32("objects_max", c.objects_max);
  c.distractor_rate = kv.get_double("distractor_rate", c.distractor_rate);
  c.jitter_scale = kv.get_double("jitter_scale", c.jitter_scale);
  c.noise_sigma = kv.get_double("noise_sigma", c.noise_sigma);
  c.scene_width = kv.get_double("scene_width", c.scene_width);
  c.scene_height = kv.get_double("scene_height", c.scene_height);
  c.obj_size_min = kv.get_double("obj_size_min", c.obj_size_min);
  c.obj_size_max = kv.get_double("obj_size_max", c.obj_size_max);
  return c;
}

hardmine::TrainConfig train_config_from(const KvConfig& kv) {
  hardmine::TrainConfig t;
  t.sampler.strategy =
      hardmine::strategy_from_name(kv.get_string("strategy", "heuristic"));
  t.sampler.batch_size = kv.get_u32("batch_size", t.sampler.batch_size);
  t.sampler.images_per_batch =
      kv.get_u32("images_per_batch", t.sampler.images_per_batch);
  t.sampler.fg_fraction = kv.get_double("fg_fraction", t.sampler.fg_fraction);
  t.sampler.bg_lo = kv.get_double("bg_lo", t.sampler.bg_lo);
  t.sampler.fg_thresh = kv.get_double("fg_thresh", t.sampler.fg_thresh);
  t.sampler.nms_dedup_iou =
      kv.get_double("nms_dedup_iou", t.sampler.nms_dedup_iou);
  t.lr_initial = kv.get_double("lr", t.lr_initial);
  t.lr_decay_factor = kv.get_double("lr_decay_factor", t.lr_decay_factor);
  t.lr_decay_every = kv.get_u32("lr_decay_every", t.lr_decay_every);
  t.total_iters = kv.get_u32("total_iters", t.total_iters);
  t.snapshot_every = kv.get_u32("snapshot_every", t.snapshot_every);
  t.momentum = kv.get_double("momentum", t.momentum);
  t.hidden_dim = kv.get_u32("hidden_dim", t.hidden_dim);
  t.lambda = kv.get_double("lambda", t.lambda);
  t.class_agnostic_loc = kv.get_bool("class_agnostic_loc", false);
  t.joint_selection = kv.get_bool("joint_selection", false);
  t.normalize_deltas = kv.get_bool("normalize_deltas", false);
  t.seed = kv.get_u64("seed", 1);
  t.sampler.seed = t.seed;
  return t;
}

hardmine::DetectOpts detect_opts_from(const KvConfig& kv) {
  hardmine::DetectOpts d;
  d.score_thresh = kv.get_double("score_thresh", d.score_thresh);
  d.nms_iou = kv.get_double("nms_iou", d.nms_iou);
  d.rescore_thresh = kv.get_double("rescore_thresh", d.rescore_thresh);
  d.vote_iou = kv.get_double("vote_iou", d.vote_iou);
  return d;
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  uint64_t seed = 0;
  bool seed_set = false;
};

KvConfig load_config(const CommonArgs& args, bool required) {
  KvConfig kv;
  if (!args.config_path.empty())
    kv = KvConfig::parse_file(args.config_path);
  else if (required)
    throw ConfigError("--config is required for this command");
  if (args.seed_set) kv.set("seed", std::to_string(args.seed));
  return kv;
}

int cmd_gen(const CommonArgs& args, const std::string& name) {
  KvConfig kv = load_config(args, true);
  const hardmine::DatasetConfig cfg = dataset_config_from(kv);
  hardmine::validate(cfg);

  const fs::path out(args.out_dir);
  DirLock lock(out);

  // Disjoint scene_id ranges: train ids [0, num_scenes), test follows.
  const hardmine::Dataset train =
      hardmine::generate_split(cfg, 0, cfg.num_scenes);
  const hardmine::Dataset test =
      hardmine::generate_split(cfg, cfg.num_scenes, cfg.test_scenes);

  const fs::path train_path = out / (name + ".train");
  const fs::path test_path = out / (name + ".test");
  hardmine::write_dataset(train, train_path.string());
  hardmine::write_dataset(test, test_path.string());

  nlohmann::ordered_json artifacts;
  artifacts["train"] = train_path.string();
  artifacts["test"] = test_path.string();
  write_manifest(out, "gen", cfg.seed, kv, artifacts);
  std::cout << "wrote " << train_path.string() << " (" << train.scenes.size()
            << " scenes), " << test_path.string() << " (" << test.scenes.size()
            << " scenes)\n";
  return kExitOk;
}

struct TrainFlags {
  std::string strategy;
  int64_t n = -1, b = -1, iters = -1;
  double lr = -1.0, bg_lo = -1.0;
  bool joint = false;
};

int cmd_train(const CommonArgs& args, const std::string& dataset_path,
              const TrainFlags& flags) {
  KvConfig kv = load_config(args, false);
  // Command-line flags override file keys.
  if (!flags.strategy.empty()) kv.set("strategy", flags.strategy);
  if (flags.n >= 0) kv.set("images_per_batch", std::to_string(flags.n));
  if (flags.b >= 0) kv.set("batch_size", std::to_string(flags.b));
  if (flags.iters >= 0) kv.set("total_iters", std::to_string(flags.iters));
  if (flags.lr >= 0) kv.set("lr", std::to_string(flags.lr));
  if (flags.bg_lo >= 0) kv.set("bg_lo", std::to_string(flags.bg_lo));
  if (flags.joint) kv.set("joint_selection", "true");

  const hardmine::Dataset data = hardmine::read_dataset(dataset_path);

  const fs::path out(args.out_dir);
  DirLock lock(out);

  hardmine::TrainConfig cfg = train_config_from(kv);
  cfg.snapshot_dir = (out / "snapshots").string();
  hardmine::validate(cfg, data.config);

  hardmine::TrainResult result;
  try {
    result = hardmine::train(cfg, data);
  } catch (const hardmine::TrainAbort& e) {
    const fs::path diag = out / "abort.txt";
    std::ofstream d(diag);
    d << e.what() << "\n";
    std::cerr << "training aborted: " << e.what() << "\ndiagnostic: " << diag
              << "\n";
    return kExitTrainAbort;
  }

  const fs::path log_path = out / "train_log.csv";
  const fs::path timing_path = out / "timing.csv";
  hardmine::write_train_log_csv(result.records, log_path.string());
  hardmine::write_timing_csv(result.records, timing_path.string());

  nlohmann::ordered_json artifacts;
  artifacts["dataset"] = dataset_path;
  artifacts["train_log"] = log_path.string();
  artifacts["timing"] = timing_path.string();
  artifacts["snapshots"] = result.snapshot_paths;
  write_manifest(out, "train", cfg.seed, kv, artifacts);

  const hardmine::MeanLoss final_loss =
      hardmine::eval_mean_loss(result.params, data);
  std::printf("trained %u iterations (%s); final mean loss over all RoIs: "
              "%.6f (cls %.6f, loc %.6f)\n",
              cfg.total_iters, hardmine::strategy_name(cfg.sampler.strategy),
              final_loss.total, final_loss.cls, final_loss.loc);
  return kExitOk;
}

int cmd_eval(const CommonArgs& args, const std::string& snapshot_path,
             const std::string& dataset_path, bool iterative,
             double score_thresh, double nms_iou) {
  KvConfig kv = load_config(args, false);
  if (score_thresh >= 0) kv.set("score_thresh", std::to_string(score_thresh));
  if (nms_iou >= 0) kv.set("nms_iou", std::to_string(nms_iou));
  if (iterative) kv.set("iterative_bbox", "true");
  const hardmine::DetectOpts opts = detect_opts_from(kv);
  const bool use_iterative = kv.get_bool("iterative_bbox", false);

  const hardmine::Dataset data = hardmine::read_dataset(dataset_path);
  const hardmine::Snapshot snap = hardmine::read_snapshot(snapshot_path);
  if (snap.params.dims.feature_dim != data.config.feature_dim ||
      snap.params.dims.num_classes != data.config.num_classes)
    throw EvalError("snapshot dims (D=" +
                    std::to_string(snap.params.dims.feature_dim) +
                    ", K=" + std::to_string(snap.params.dims.num_classes) +
                    ") do not match dataset (D=" +
                    std::to_string(data.config.feature_dim) +
                    ", K=" + std::to_string(data.config.num_classes) + ")");

  const fs::path out(args.out_dir);
  DirLock lock(out);

  std::vector<hardmine::Detection> all;
  uint64_t degenerate = 0;
  for (const hardmine::Scene& scene : data.scenes) {
    hardmine::SceneDetections d;
    if (use_iterative) {
      const hardmine::FeatureSynth synth(data.config, scene.scene_id,
                                         scene.objects);
      d = hardmine::detect_iterative(snap.params, scene, synth, opts);
    } else {
      d = hardmine::detect(snap.params, scene, opts);
    }
    degenerate += d.degenerate_count;
    all.insert(all.end(), d.detections.begin(), d.detections.end());
  }

  const hardmine::EvalReport report =
      hardmine::voc_ap(all, data.scenes, data.config.num_classes);

  const fs::path det_path = out / "detections.csv";
  const fs::path report_path = out / "report.csv";
  hardmine::write_detections_csv(all, det_path.string());
  hardmine::write_report_csv(report, report_path.string());

  nlohmann::ordered_json artifacts;
  artifacts["snapshot"] = snapshot_path;
  artifacts["dataset"] = dataset_path;
  artifacts["detections"] = det_path.string();
  artifacts["report"] = report_path.string();
  write_manifest(out, "eval", kv.get_u64("seed", 0), kv, artifacts);

  std::cout << hardmine::format_report(report);
  std::cout << all.size() << " detections, " << degenerate
            << " degenerate boxes discarded\n";
  return kExitOk;
}

int cmd_ablate(const CommonArgs& args, const std::string& train_path,
               const std::string& test_path, int64_t seeds_flag,
               int64_t iters_flag) {
  KvConfig kv = load_config(args, false);
  if (iters_flag >= 0) kv.set("ablate_iters", std::to_string(iters_flag));
  if (seeds_flag >= 0) kv.set("ablate_seeds", std::to_string(seeds_flag));

  const hardmine::Dataset train = hardmine::read_dataset(train_path);
  const hardmine::Dataset test = hardmine::read_dataset(test_path);

  const fs::path out(args.out_dir);
  DirLock lock(out);

  hardmine::TrainConfig base = train_config_from(kv);
  base.total_iters = kv.get_u32("ablate_iters", base.total_iters);
  base.snapshot_dir.clear();

  hardmine::AblationOptions opts;
  opts.detect = detect_opts_from(kv);
  opts.allrois_lr_multiplier =
      kv.get_double("allrois_lr_multiplier", opts.allrois_lr_multiplier);
  opts.allrois_batch = kv.get_u32("allrois_batch", opts.allrois_batch);
  opts.max_parallel = kv.get_u32("ablate_parallel", 0);
  const uint32_t n_seeds = kv.get_u32("ablate_seeds", 3);
  const uint64_t seed0 = kv.get_u64("seed", 1);
  opts.seeds.clear();
  for (uint32_t i = 0; i < n_seeds; ++i) opts.seeds.push_back(seed0 + i);

  const auto rows = hardmine::run_ablation_suite(base, train, test, opts);
  const fs::path csv_path = out / "ablation.csv";
  hardmine::write_ablation_csv(rows, csv_path.string());

  nlohmann::ordered_json artifacts;
  artifacts["train"] = train_path;
  artifacts["test"] = test_path;
  artifacts["results"] = csv_path.string();
  write_manifest(out, "ablate", seed0, kv, artifacts);

  for (const auto& r : rows)
    std::printf("%-20s seed %llu: mAP %.4f, mean loss %.4f, %.2f ms/iter\n",
                r.variant.c_str(), static_cast<unsigned long long>(r.seed),
                r.final_map, r.final_mean_loss, r.mean_iter_time_ms);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hardmine: synthetic detection testbed for mini-batch "
               "sampling strategies (heuristic, all-RoI, online hard example "
               "mining)"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonArgs common;
  app.add_option("--config", common.config_path, "flat key=value config file")
      ->expected(1);
  app.add_option("--out", common.out_dir, "output directory")->expected(1);
  auto* seed_opt =
      app.add_option("--seed", common.seed, "override the config seed");
  app.fallthrough();

  auto* gen = app.add_subcommand("gen", "generate a dataset (train+test)");
  std::string gen_name = "dataset";
  gen->add_option("--name", gen_name, "dataset file stem");

  auto* train = app.add_subcommand("train", "train a detector head");
  std::string train_dataset;
  TrainFlags tf;
  train->add_option("--dataset", train_dataset, "dataset .train file")
      ->required();
  train->add_option("--strategy", tf.strategy,
                    "sampling strategy: heuristic | ohem | all");
  train->add_option("--n", tf.n, "images per mini-batch (N)");
  train->add_option("--b", tf.b, "RoIs per mini-batch (B)");
  train->add_option("--iters", tf.iters, "total SGD iterations");
  train->add_option("--lr", tf.lr, "initial learning rate");
  train->add_option("--bg-lo", tf.bg_lo, "background lower IoU bound");
  train->add_flag("--joint-selection", tf.joint,
                  "ohem: rank hard examples jointly across the N images");

  auto* eval = app.add_subcommand("eval", "evaluate a snapshot (mAP)");
  std::string eval_snapshot, eval_dataset;
  bool eval_iterative = false;
  double eval_score_thresh = -1.0, eval_nms_iou = -1.0;
  eval->add_option("--snapshot", eval_snapshot, "parameter snapshot file")
      ->required();
  eval->add_option("--dataset", eval_dataset, "dataset split file")->required();
  eval->add_flag("--iterative-bbox", eval_iterative,
                 "two-round localization with weighted box voting");
  eval->add_option("--score-thresh", eval_score_thresh, "detection score cutoff");
  eval->add_option("--nms-iou", eval_nms_iou, "per-class NMS IoU threshold");

  auto* ablate = app.add_subcommand("ablate", "run the six-variant suite");
  std::string ablate_train, ablate_test;
  int64_t ablate_seeds = -1, ablate_iters = -1;
  ablate->add_option("--dataset", ablate_train, "dataset .train file")
      ->required();
  ablate->add_option("--test", ablate_test, "dataset .test file")->required();
  ablate->add_option("--seeds", ablate_seeds, "number of seeds");
  ablate->add_option("--iters", ablate_iters, "iterations per run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return kExitConfig;
  }
  common.seed_set = seed_opt->count() > 0;

  try {
    if (common.out_dir.empty())
      throw ConfigError("--out is required");
    if (gen->parsed()) return cmd_gen(common, gen_name);
    if (train->parsed()) return cmd_train(common, train_dataset, tf);
    if (eval->parsed())
      return cmd_eval(common, eval_snapshot, eval_dataset, eval_iterative,
                      eval_score_thresh, eval_nms_iou);
    if (ablate->parsed())
      return cmd_ablate(common, ablate_train, ablate_test, ablate_seeds,
                        ablate_iters);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const EvalError& e) {
    std::cerr << "eval error: " << e.what() << "\n";
    return kExitEval;
  } catch (const hardmine::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
