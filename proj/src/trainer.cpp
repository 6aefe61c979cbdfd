#include "hardmine/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "hardmine/errors.hpp"

namespace hardmine {

namespace {

constexpr double kEvalFgThresh = 0.5;

struct LabelCache {
  const Dataset& data;
  double fg_thresh, bg_lo;
  std::vector<std::vector<LabeledRoI>> labels;
  std::vector<bool> filled;

  LabelCache(const Dataset& d, double fg, double bg)
      : data(d), fg_thresh(fg), bg_lo(bg),
        labels(d.scenes.size()), filled(d.scenes.size(), false) {}

  const std::vector<LabeledRoI>& get(uint32_t idx) {
    if (!filled[idx]) {
      labels[idx] = label_rois(data.scenes[idx].proposals,
                               data.scenes[idx].objects, fg_thresh, bg_lo);
      filled[idx] = true;
    }
    return labels[idx];
  }
};

const BoxDelta* effective_target(const HeadParams& params,
                                 const LabeledRoI& roi, BoxDelta& storage) {
  if (!roi.target) return nullptr;
  storage = params.delta_stats.identity() ? *roi.target
                                          : params.delta_stats.apply(*roi.target);
  return &storage;
}

DeltaStats compute_delta_stats(const Dataset& data, double fg_thresh,
                               double bg_lo) {
  double sum[4] = {0, 0, 0, 0}, sq[4] = {0, 0, 0, 0};
  uint64_t n = 0;
  for (const Scene& s : data.scenes) {
    for (const LabeledRoI& roi :
         label_rois(s.proposals, s.objects, fg_thresh, bg_lo)) {
      if (!roi.target) continue;
      const double v[4] = {roi.target->dx, roi.target->dy, roi.target->dw,
                           roi.target->dh};
      for (int i = 0; i < 4; ++i) {
        sum[i] += v[i];
        sq[i] += v[i] * v[i];
      }
      ++n;
    }
  }
  DeltaStats stats;
  if (n == 0) return stats;
  for (int i = 0; i < 4; ++i) {
    stats.mean[i] = sum[i] / static_cast<double>(n);
    const double var = sq[i] / static_cast<double>(n) - stats.mean[i] * stats.mean[i];
    stats.stddev[i] = std::sqrt(std::max(var, 1e-12));
  }
  return stats;
}

[[noreturn]] void abort_non_finite(uint32_t iter, uint64_t scene_id,
                                   const LabeledRoI& roi, const RoILoss& loss) {
  std::ostringstream os;
  os << "non-finite loss at iteration " << iter << ", scene " << scene_id
     << ", roi " << roi.roi_index << ": label=" << roi.label
     << " max_iou=" << roi.max_iou << " cls=" << loss.cls << " loc=" << loss.loc
     << " box=(" << roi.box.x1 << "," << roi.box.y1 << "," << roi.box.x2 << ","
     << roi.box.y2 << ")";
  throw TrainAbort(os.str());
}

struct TrainerState {
  HeadParams params;
  SgdState momentum;
};

TrainResult run_loop(const TrainConfig& cfg, const Dataset& data,
                     TrainerState state, uint32_t start_iter) {
  const uint32_t N = cfg.sampler.images_per_batch;
  const uint32_t quota = cfg.sampler.quota();
  const uint32_t D = data.config.feature_dim;

  LabelCache cache(data, cfg.sampler.fg_thresh, cfg.sampler.bg_lo);

  TrainResult result;
  result.records.reserve(cfg.total_iters - start_iter);

  if (!cfg.snapshot_dir.empty())
    std::filesystem::create_directories(cfg.snapshot_dir);

  HeadGradients acc;
  acc.reset(state.params.dims);
  HeadOutput scratch;

  for (uint32_t t = start_iter; t < cfg.total_iters; ++t) {
    const auto t0 = std::chrono::steady_clock::now();

    IterationRecord rec;
    rec.iter = t;
    rec.lr = lr_at(cfg, t);

    SplitMix64 draw(scene_draw_rng(cfg.seed, t));
    rec.drawn_scenes.resize(N);
    for (uint32_t i = 0; i < N; ++i)
      rec.drawn_scenes[i] = static_cast<uint32_t>(
          draw.next_below(data.scenes.size()));

    // Phase A (selection). For ohem this is the readonly pass: losses of
    // every non-excluded RoI under the current, frozen parameters. The
    // heuristic and all strategies need only labels, so no forward runs.
    struct ImagePlan {
      uint32_t scene_idx = 0;
      std::vector<uint32_t> selected;            // roi indices
      std::vector<uint32_t> candidates;          // ohem: non-excluded rois
      std::vector<double> candidate_losses;      // ohem: phase-A losses
    };
    std::vector<ImagePlan> plans(N);

    for (uint32_t i = 0; i < N; ++i) {
      ImagePlan& plan = plans[i];
      plan.scene_idx = rec.drawn_scenes[i];
      const Scene& scene = data.scenes[plan.scene_idx];
      const auto& labeled = cache.get(plan.scene_idx);

      std::vector<uint32_t> usable;
      for (const auto& roi : labeled)
        if (!roi.excluded) usable.push_back(roi.roi_index);
      if (usable.empty()) continue;  // nothing this scene can contribute

      switch (cfg.sampler.strategy) {
        case Strategy::kHeuristic: {
          SplitMix64 rng(sampling_rng(cfg.sampler.seed, t, i));
          plan.selected = heuristic_sample(labeled, quota, cfg.sampler.fg_fraction, rng);
          break;
        }
        case Strategy::kAll: {
          SplitMix64 rng(sampling_rng(cfg.sampler.seed, t, i));
          plan.selected = all_sample(labeled, quota, rng);
          break;
        }
        case Strategy::kOhem: {
          plan.candidates = std::move(usable);
          plan.candidate_losses.resize(plan.candidates.size());
          std::vector<BBox> boxes(plan.candidates.size());
          for (size_t j = 0; j < plan.candidates.size(); ++j) {
            const LabeledRoI& roi = labeled[plan.candidates[j]];
            boxes[j] = roi.box;
            forward(state.params,
                    std::span<const float>(scene.feature(roi.roi_index, D), D),
                    scratch);
            BoxDelta tstore;
            const RoILoss l = roi_loss(scratch, state.params.dims, roi.label,
                                       effective_target(state.params, roi, tstore),
                                       state.params.lambda);
            if (!std::isfinite(l.total)) abort_non_finite(t, scene.scene_id, roi, l);
            plan.candidate_losses[j] = l.total;
          }
          rec.forward_roi_count += plan.candidates.size();
          if (!cfg.joint_selection) {
            for (uint32_t local : ohem_select(plan.candidate_losses, boxes,
                                              quota, cfg.sampler.nms_dedup_iou))
              plan.selected.push_back(plan.candidates[local]);
          }
          break;
        }
      }
    }

    if (cfg.sampler.strategy == Strategy::kOhem && cfg.joint_selection) {
      // Dedup within each image, then rank all survivors jointly and take
      // the top B across the whole mini-batch.
      struct Pooled {
        double loss;
        uint32_t image, roi;
      };
      std::vector<Pooled> pooled;
      for (uint32_t i = 0; i < N; ++i) {
        ImagePlan& plan = plans[i];
        if (plan.candidates.empty()) continue;
        std::vector<BBox> boxes(plan.candidates.size());
        const auto& labeled = cache.get(plan.scene_idx);
        for (size_t j = 0; j < plan.candidates.size(); ++j)
          boxes[j] = labeled[plan.candidates[j]].box;
        for (uint32_t local : ohem_select(plan.candidate_losses, boxes,
                                          static_cast<uint32_t>(plan.candidates.size()),
                                          cfg.sampler.nms_dedup_iou))
          pooled.push_back(Pooled{plan.candidate_losses[local], i,
                                  plan.candidates[local]});
      }
      std::stable_sort(pooled.begin(), pooled.end(),
                       [](const Pooled& a, const Pooled& b) {
                         if (a.loss != b.loss) return a.loss > b.loss;
                         if (a.image != b.image) return a.image < b.image;
                         return a.roi < b.roi;
                       });
      const size_t take = std::min<size_t>(cfg.sampler.batch_size, pooled.size());
      for (size_t j = 0; j < take; ++j)
        plans[pooled[j].image].selected.push_back(pooled[j].roi);
    }

    // Phase B: forward+backward only the selected RoIs, accumulating
    // gradients across the N single-scene passes.
    acc.reset(state.params.dims);
    double sum_total = 0.0, sum_cls = 0.0, sum_loc = 0.0;
    uint64_t n_sel = 0;
    for (uint32_t i = 0; i < N; ++i) {
      const ImagePlan& plan = plans[i];
      if (plan.selected.empty()) continue;
      const Scene& scene = data.scenes[plan.scene_idx];
      const auto& labeled = cache.get(plan.scene_idx);
      for (uint32_t roi_idx : plan.selected) {
        const LabeledRoI& roi = labeled[roi_idx];
        BoxDelta tstore;
        const RoILoss l = backward(
            state.params,
            std::span<const float>(scene.feature(roi.roi_index, D), D),
            roi.label, effective_target(state.params, roi, tstore), acc, scratch);
        if (!std::isfinite(l.total)) abort_non_finite(t, scene.scene_id, roi, l);
        sum_total += l.total;
        sum_cls += l.cls;
        sum_loc += l.loc;
      }
      rec.backward_roi_count += plan.selected.size();
      if (cfg.sampler.strategy != Strategy::kOhem)
        rec.forward_roi_count += plan.selected.size();
      n_sel += plan.selected.size();
    }

    rec.selected_count = static_cast<uint32_t>(n_sel);
    if (n_sel == 0) {
      rec.skipped_update = true;
    } else {
      const double inv = 1.0 / static_cast<double>(n_sel);
      rec.mean_selected_loss = sum_total * inv;
      rec.mean_selected_cls = sum_cls * inv;
      rec.mean_selected_loc = sum_loc * inv;
      acc.scale(inv);  // mean over the selected mini-batch
      sgd_step(state.params, acc, rec.lr, cfg.momentum, state.momentum);
    }

    if (cfg.snapshot_every > 0 &&
        ((t + 1) % cfg.snapshot_every == 0 || t + 1 == cfg.total_iters)) {
      // Live state drops to float32 at every snapshot boundary so a resumed
      // run continues bit-identically whether or not files are written.
      quantize_to_snapshot(state.params);
      quantize_to_snapshot(state.momentum);
      if (!cfg.snapshot_dir.empty()) {
        const std::string path =
            cfg.snapshot_dir + "/snap_" + std::to_string(t + 1);
        write_snapshot(Snapshot{state.params, t + 1, true, state.momentum}, path);
        result.snapshot_paths.push_back(path);
      }
    }

    rec.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    result.records.push_back(std::move(rec));
  }

  result.params = std::move(state.params);
  result.momentum = std::move(state.momentum);
  return result;
}

}  // namespace

void validate(const TrainConfig& cfg, const DatasetConfig& data_cfg) {
  validate(cfg.sampler);
  if (cfg.total_iters < 1) throw ConfigError("total_iters must be >= 1");
  if (!(cfg.lr_initial > 0)) throw ConfigError("lr must be positive");
  if (!(cfg.lr_decay_factor > 0 && cfg.lr_decay_factor <= 1))
    throw ConfigError("lr_decay_factor must be in (0,1]");
  if (cfg.lr_decay_every < 1) throw ConfigError("lr_decay_every must be >= 1");
  if (cfg.hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  if (!(cfg.lambda > 0)) throw ConfigError("lambda must be positive");
  if (!(cfg.momentum >= 0 && cfg.momentum < 1))
    throw ConfigError("momentum must be in [0,1)");
  if (data_cfg.num_classes < 2) throw ConfigError("dataset has no classes");
}

double lr_at(const TrainConfig& cfg, uint32_t iter) {
  const uint32_t steps = iter / cfg.lr_decay_every;
  return cfg.lr_initial * std::pow(cfg.lr_decay_factor, steps);
}

SplitMix64 scene_draw_rng(uint64_t seed, uint32_t iter) {
  return SplitMix64(mix_seed({seed, stream_tag::kSceneDraw, iter}));
}

SplitMix64 sampling_rng(uint64_t seed, uint32_t iter, uint32_t image) {
  return SplitMix64(mix_seed({seed, stream_tag::kSampling, iter, image}));
}

TrainResult train(const TrainConfig& cfg, const Dataset& data) {
  validate(cfg, data.config);
  if (data.scenes.empty()) throw ConfigError("train: dataset has no scenes");

  HeadDims dims;
  dims.feature_dim = data.config.feature_dim;
  dims.hidden_dim = cfg.hidden_dim;
  dims.num_classes = data.config.num_classes;
  dims.class_agnostic_loc = cfg.class_agnostic_loc;

  TrainerState state;
  state.params =
      init_params(dims, cfg.lambda, mix_seed({cfg.seed, stream_tag::kHeadInit}));
  if (cfg.normalize_deltas)
    state.params.delta_stats =
        compute_delta_stats(data, cfg.sampler.fg_thresh, cfg.sampler.bg_lo);
  state.momentum.reset(dims);
  return run_loop(cfg, data, std::move(state), 0);
}

TrainResult resume_train(const TrainConfig& cfg, const Dataset& data,
                         const std::string& snapshot_path) {
  validate(cfg, data.config);
  Snapshot snap = read_snapshot(snapshot_path);
  if (snap.params.dims.feature_dim != data.config.feature_dim ||
      snap.params.dims.num_classes != data.config.num_classes)
    throw ConfigError("resume_train: snapshot does not match dataset dims");
  if (snap.iteration >= cfg.total_iters)
    throw ConfigError("resume_train: snapshot is already past total_iters");

  TrainerState state;
  state.params = std::move(snap.params);
  if (snap.has_momentum)
    state.momentum = std::move(snap.momentum);
  else
    state.momentum.reset(state.params.dims);
  return run_loop(cfg, data, std::move(state),
                  static_cast<uint32_t>(snap.iteration));
}

MeanLoss eval_mean_loss(const HeadParams& params, const Dataset& split) {
  MeanLoss m;
  HeadOutput scratch;
  const uint32_t D = params.dims.feature_dim;
  for (const Scene& scene : split.scenes) {
    // bg_lo = 0 here by definition: every region counts, independent of
    // whatever sampler configuration trained the parameters.
    const auto labeled =
        label_rois(scene.proposals, scene.objects, kEvalFgThresh, 0.0);
    for (const LabeledRoI& roi : labeled) {
      forward(params, std::span<const float>(scene.feature(roi.roi_index, D), D),
              scratch);
      BoxDelta tstore;
      const RoILoss l = roi_loss(scratch, params.dims, roi.label,
                                 effective_target(params, roi, tstore),
                                 params.lambda);
      m.total += l.total;
      m.cls += l.cls;
      m.loc += l.loc;
      ++m.roi_count;
    }
  }
  if (m.roi_count > 0) {
    const double inv = 1.0 / static_cast<double>(m.roi_count);
    m.total *= inv;
    m.cls *= inv;
    m.loc *= inv;
  }
  return m;
}

void write_train_log_csv(const std::vector<IterationRecord>& records,
                         const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "iter,lr,selected_count,mean_selected_loss,forward_roi_count,"
         "backward_roi_count\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%u,%.9g,%u,%.9g,%llu,%llu\n", r.iter, r.lr,
                  r.selected_count, r.mean_selected_loss,
                  static_cast<unsigned long long>(r.forward_roi_count),
                  static_cast<unsigned long long>(r.backward_roi_count));
    out << buf;
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

void write_timing_csv(const std::vector<IterationRecord>& records,
                      const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "iter,wall_time_ms\n";
  char buf[128];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%u,%.3f\n", r.iter, r.wall_time_ms);
    out << buf;
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

EvalReport evaluate_detector(const HeadParams& params, const Dataset& split,
                             const DetectOpts& opts, bool iterative) {
  std::vector<Detection> all;
  for (const Scene& scene : split.scenes) {
    SceneDetections d;
    if (iterative) {
      const FeatureSynth synth(split.config, scene.scene_id, scene.objects);
      d = detect_iterative(params, scene, synth, opts);
    } else {
      d = detect(params, scene, opts);
    }
    all.insert(all.end(), d.detections.begin(), d.detections.end());
  }
  return voc_ap(all, split.scenes, split.config.num_classes);
}

std::vector<AblationVariant> ablation_variants(const TrainConfig& base,
                                               const AblationOptions& opts) {
  std::vector<AblationVariant> vs;
  auto push = [&vs](std::string name, TrainConfig cfg) {
    vs.push_back(AblationVariant{std::move(name), std::move(cfg)});
  };

  TrainConfig heur01 = base;
  heur01.sampler.strategy = Strategy::kHeuristic;
  heur01.sampler.bg_lo = 0.1;
  push("heuristic_bglo_0.1", heur01);

  TrainConfig heur0 = heur01;
  heur0.sampler.bg_lo = 0.0;
  push("heuristic_bglo_0", heur0);

  TrainConfig heur_n1 = heur01;
  heur_n1.sampler.images_per_batch = 1;
  push("heuristic_n1", heur_n1);

  TrainConfig allrois = base;
  allrois.sampler.strategy = Strategy::kAll;
  allrois.sampler.bg_lo = 0.0;
  allrois.sampler.batch_size = opts.allrois_batch;
  allrois.lr_initial = base.lr_initial * opts.allrois_lr_multiplier;
  push("allrois_highlr", allrois);

  TrainConfig ohem1 = base;
  ohem1.sampler.strategy = Strategy::kOhem;
  ohem1.sampler.bg_lo = 0.0;
  ohem1.sampler.images_per_batch = 1;
  push("ohem_n1", ohem1);

  TrainConfig ohem2 = ohem1;
  ohem2.sampler.images_per_batch = 2;
  push("ohem_n2", ohem2);

  return vs;
}

std::vector<AblationRow> run_ablation_suite(const TrainConfig& base,
                                            const Dataset& train_split,
                                            const Dataset& test_split,
                                            const AblationOptions& opts) {
  const auto variants = ablation_variants(base, opts);

  struct Job {
    AblationVariant variant;
    uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& v : variants)
    for (uint64_t seed : opts.seeds) {
      Job j{v, seed};
      j.variant.config.seed = seed;
      j.variant.config.sampler.seed = seed;
      j.variant.config.snapshot_dir.clear();  // rows carry metrics only
      jobs.push_back(std::move(j));
    }

  auto run_job = [&](const Job& j) {
    const TrainResult r = train(j.variant.config, train_split);
    AblationRow row;
    row.variant = j.variant.name;
    row.seed = j.seed;
    row.final_map = evaluate_detector(r.params, test_split, opts.detect).map;
    row.final_mean_loss = eval_mean_loss(r.params, train_split).total;
    double wall = 0;
    for (const auto& rec : r.records) wall += rec.wall_time_ms;
    row.mean_iter_time_ms =
        r.records.empty() ? 0.0 : wall / static_cast<double>(r.records.size());
    return row;
  };

  // Runs are independent and internally deterministic, so they can execute
  // in parallel threads without affecting results.
  const uint32_t hw = std::max(1u, std::thread::hardware_concurrency());
  const uint32_t width =
      opts.max_parallel > 0 ? std::min(opts.max_parallel, hw) : hw;

  std::vector<AblationRow> rows(jobs.size());
  std::atomic<size_t> next{0};
  std::vector<std::thread> workers;
  for (uint32_t w = 0; w < std::min<size_t>(width, jobs.size()); ++w) {
    workers.emplace_back([&]() {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= jobs.size()) return;
        rows[i] = run_job(jobs[i]);
      }
    });
  }
  for (auto& w : workers) w.join();
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "variant,seed,final_map,final_mean_loss,mean_iter_time_ms\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%llu,%.9g,%.9g,%.3f\n",
                  r.variant.c_str(), static_cast<unsigned long long>(r.seed),
                  r.final_map, r.final_mean_loss, r.mean_iter_time_ms);
    out << buf;
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace hardmine
