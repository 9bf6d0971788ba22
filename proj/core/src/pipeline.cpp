// Copyright 2026 the blidar authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "blidar/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "blidar/error.hpp"
#include "blidar/proposals.hpp"
#include "blidar/rng.hpp"
#include "blidar/uncertainty.hpp"

namespace blidar::pipeline {

namespace {

// Stream offsets for deriving independent per-purpose seeds from the run seed.
constexpr std::uint64_t kStreamTrainScenes = 0;
constexpr std::uint64_t kStreamTestScenes = 1'000'000;
constexpr std::uint64_t kStreamNetInit = 2'000'000;
constexpr std::uint64_t kStreamTraining = 2'000'001;
constexpr std::uint64_t kStreamDetect = 3'000'000;

constexpr double kVehicleMinLength = 3.6, kVehicleMaxLength = 4.9;
constexpr double kVehicleMinWidth = 1.6, kVehicleMaxWidth = 1.9;
constexpr double kVehicleMinHeight = 1.4, kVehicleMaxHeight = 1.8;
constexpr double kPlacementMargin = 3.0;  // keep centers this far inside the crop
constexpr int kPlacementAttempts = 64;

std::string scene_name(const char* split, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d", split, index);
  return buf;
}

// Interleaved deterministic marking: scene i is "noisy" when the running
// count of marked scenes crosses another integer at i.
bool noisy_scene(int index, double fraction) {
  const double before = fraction * index;
  const double after = fraction * (index + 1);
  return std::floor(after) > std::floor(before);
}

bool box_inside_region(const Box3D& box, const pointcloud::CropRegion& region) {
  for (const auto& c : box.corners()) {
    if (!region.contains(c)) return false;
  }
  return true;
}

// Overlap check with a small safety gap so adjacent vehicles never share a
// footprint edge.
bool placement_clear(const Box3D& candidate, const std::vector<pointcloud::VehicleSpec>& placed) {
  Box3D inflated = candidate;
  inflated.length += 0.5;
  inflated.width += 0.5;
  for (const auto& v : placed) {
    if (iou_bev(inflated, v.box) > 0.0) return false;
  }
  return true;
}

pointcloud::SceneSpec make_scene(const RunConfig& cfg, const std::string& scene_id,
                                 std::uint64_t seed, double noise_sigma) {
  const auto& sc = cfg.synth;
  Rng rng(seed);
  pointcloud::SceneSpec spec;
  spec.scene_id = scene_id;
  spec.rng_seed = Rng::derive(seed, 7);
  spec.noise_sigma = noise_sigma;
  spec.ground_density = sc.ground_density;

  const int n_vehicles =
      sc.min_vehicles + static_cast<int>(rng.index(sc.max_vehicles - sc.min_vehicles + 1));
  for (int v = 0; v < n_vehicles; ++v) {
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      double d, bearing;
      if (!spec.vehicles.empty() && rng.uniform() < sc.occlusion_pair_prob) {
        // Place behind an existing vehicle on the same ray from the sensor,
        // which manufactures the occlusion cases the evaluation studies.
        const auto& base = spec.vehicles[rng.index(spec.vehicles.size())].box;
        bearing = std::atan2(base.center.y, base.center.x);
        d = std::hypot(base.center.x, base.center.y) + rng.uniform(7.0, 15.0);
      } else {
        d = rng.uniform(sc.distance_min, sc.distance_max);
        const double y_lim = std::min(1.0, (spec.region.y_max - kPlacementMargin) / d);
        const double x_lim = std::min(1.0, (spec.region.x_min + kPlacementMargin) / d);
        const double phi_max = std::min(std::asin(y_lim), std::acos(x_lim));
        bearing = rng.uniform(-phi_max, phi_max);
      }
      Box3D box;
      box.length = rng.uniform(kVehicleMinLength, kVehicleMaxLength);
      box.width = rng.uniform(kVehicleMinWidth, kVehicleMaxWidth);
      box.height = rng.uniform(kVehicleMinHeight, kVehicleMaxHeight);
      box.yaw = wrap_angle(rng.uniform(-M_PI, M_PI));
      box.center = {d * std::cos(bearing), d * std::sin(bearing),
                    pointcloud::kGroundPlaneZ + 0.5 * box.height};
      const double density = rng.uniform(sc.density_min, sc.density_max);
      if (!box_inside_region(box, spec.region)) continue;
      if (std::hypot(box.center.x, box.center.y) < sc.distance_min) continue;
      if (!placement_clear(box, spec.vehicles)) continue;
      spec.vehicles.push_back({box, density});
      break;
    }
  }
  return spec;
}

dataset::SceneGt gt_of(const pointcloud::SceneSpec& spec) {
  dataset::SceneGt gt;
  gt.scene_id = spec.scene_id;
  gt.noise_sigma = spec.noise_sigma;
  for (const auto& v : spec.vehicles) gt.boxes.push_back(v.box);
  return gt;
}

std::vector<double> to_feature(const proposals::RoiFeature& feat) { return feat.values; }

struct LoadedSplit {
  std::vector<pointcloud::PointCloud> clouds;
  std::vector<dataset::SceneGt> gts;
};

LoadedSplit load_split(const std::filesystem::path& data_dir, const std::string& split) {
  const dataset::Manifest manifest = dataset::read_manifest(data_dir / "manifest.json");
  const auto& ids = split == "train" ? manifest.train_ids : manifest.test_ids;
  if (split != "train" && split != "test")
    throw config_error("unknown split '" + split + "' (expected train or test)");
  const auto gt_all =
      dataset::read_gt_jsonl(data_dir / (split == "train" ? "gt_train.jsonl" : "gt_test.jsonl"));
  std::map<std::string, const dataset::SceneGt*> by_id;
  for (const auto& g : gt_all) by_id[g.scene_id] = &g;

  LoadedSplit out;
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw data_error("manifest scene missing from ground truth: " + id);
    out.gts.push_back(*it->second);
    out.clouds.push_back(pointcloud::load_points(dataset::scene_points_path(data_dir, manifest, id)));
  }
  return out;
}

std::string csv_num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_digest(const eval::EvalSummary& summary,
                  const std::vector<eval::MatchedDetection>& matched, const std::string& mode,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write digest: " + path.string());

  out << "# Detection run digest\n\n";
  out << "Mode: `" << mode << "`\n\n";
  out << "The benchmark compares four network variants: Non-Bayesian (baseline), "
         "Epistemic, Aleatoric, and Epistemic+Aleatoric. This digest covers a single "
         "run of the mode above; run the other modes to fill in the comparison.\n\n";

  out << "## Detection performance\n\n";
  out << "| IoU threshold | precision | recall | F1 |\n|---|---|---|---|\n";
  for (const auto& row : summary.f1) {
    out << "| " << csv_num(row.threshold) << " | " << csv_num(row.precision) << " | "
        << csv_num(row.recall) << " | " << csv_num(row.f1) << " |\n";
  }
  out << "\nDetections: " << summary.n_detections
      << ", ground-truth vehicles: " << summary.n_ground_truth << "\n\n";

  // Low/high-accuracy uncertainty means for the directional checks.
  double lo_se = 0, lo_mi = 0, lo_tv = 0, hi_se = 0, hi_mi = 0, hi_tv = 0;
  long lo_n = 0, hi_n = 0;
  for (const auto& m : matched) {
    if (m.iou < 0.3) {
      lo_se += m.report.se;
      lo_mi += m.report.mi;
      lo_tv += m.report.epistemic_tv_total;
      ++lo_n;
    } else if (m.iou > 0.7) {
      hi_se += m.report.se;
      hi_mi += m.report.mi;
      hi_tv += m.report.epistemic_tv_total;
      ++hi_n;
    }
  }

  out << "## Directional checks\n\n";
  const auto verdict = [](bool ok) { return ok ? "pass" : "FAIL"; };
  if (lo_n > 0 && hi_n > 0) {
    lo_se /= lo_n; lo_mi /= lo_n; lo_tv /= lo_n;
    hi_se /= hi_n; hi_mi /= hi_n; hi_tv /= hi_n;
    out << "- Classification uncertainty falls with accuracy: SE " << csv_num(lo_se)
        << " (IoU<0.3) vs " << csv_num(hi_se) << " (IoU>0.7): " << verdict(hi_se < lo_se)
        << "; MI " << csv_num(lo_mi) << " vs " << csv_num(hi_mi) << ": "
        << verdict(hi_mi < lo_mi) << "\n";
    out << "- Spatial epistemic uncertainty falls with accuracy: TV " << csv_num(lo_tv)
        << " vs " << csv_num(hi_tv) << ": " << verdict(hi_tv < lo_tv) << "\n";
  } else {
    out << "- Uncertainty vs accuracy: n/a (need detections in both the IoU<0.3 and "
           "IoU>0.7 ranges)\n";
  }
  if (summary.pcc_aleatoric.all) {
    out << "- Observation noise grows with distance: PCC(distance, sigma2 all) = "
        << csv_num(*summary.pcc_aleatoric.all) << " (expect > 0.3): "
        << verdict(*summary.pcc_aleatoric.all > 0.3) << "\n";
  } else {
    out << "- Observation noise vs distance: n/a (no aleatoric variances in this run)\n";
  }
  if (summary.pcc_epistemic.all) {
    out << "- Model uncertainty shows no distance trend: |PCC(distance, TV all)| = "
        << csv_num(std::abs(*summary.pcc_epistemic.all)) << " (expect < 0.2): "
        << verdict(std::abs(*summary.pcc_epistemic.all) < 0.2) << "\n";
  } else {
    out << "- Model uncertainty vs distance: n/a\n";
  }
  if (summary.occluded_gt_facing_fraction) {
    out << "- Occluded corners carry more observation noise than facing corners: fraction = "
        << csv_num(*summary.occluded_gt_facing_fraction) << " (expect >= 0.7): "
        << verdict(*summary.occluded_gt_facing_fraction >= 0.7) << "\n";
  } else {
    out << "- Occluded vs facing corners: n/a (no aleatoric true positives)\n";
  }
}

}  // namespace

SyntheticScenes make_scene_specs(const RunConfig& cfg) {
  cfg.validate();
  SyntheticScenes out;
  for (int i = 0; i < cfg.synth.train_scenes; ++i) {
    const double sigma = noisy_scene(i, cfg.synth.noisy_fraction) ? cfg.synth.noisy_sigma
                                                                  : cfg.synth.noise_sigma;
    auto spec = make_scene(cfg, scene_name("train", i),
                           Rng::derive(cfg.seed, kStreamTrainScenes + static_cast<std::uint64_t>(i)),
                           sigma);
    out.train_gt.push_back(gt_of(spec));
    out.train_specs.push_back(std::move(spec));
  }
  for (int i = 0; i < cfg.synth.test_scenes; ++i) {
    auto spec = make_scene(cfg, scene_name("test", i),
                           Rng::derive(cfg.seed, kStreamTestScenes + static_cast<std::uint64_t>(i)),
                           cfg.synth.noise_sigma);
    out.test_gt.push_back(gt_of(spec));
    out.test_specs.push_back(std::move(spec));
  }
  return out;
}

void cmd_synth(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  const SyntheticScenes scenes = make_scene_specs(cfg);
  std::filesystem::create_directories(out_dir / "points");

  dataset::Manifest manifest;
  manifest.seed = cfg.seed;
  const auto emit = [&](const std::vector<pointcloud::SceneSpec>& specs,
                        std::vector<std::string>& ids) {
    for (const auto& spec : specs) {
      const pointcloud::PointCloud cloud = pointcloud::simulate_scan(spec);
      pointcloud::save_points(cloud, out_dir / "points" / (spec.scene_id + ".blpc"));
      ids.push_back(spec.scene_id);
    }
  };
  emit(scenes.train_specs, manifest.train_ids);
  emit(scenes.test_specs, manifest.test_ids);

  dataset::write_gt_jsonl(scenes.train_gt, out_dir / "gt_train.jsonl");
  dataset::write_gt_jsonl(scenes.test_gt, out_dir / "gt_test.jsonl");
  dataset::write_manifest(manifest, out_dir / "manifest.json");
}

TrainingSet build_training_set(const RunConfig& cfg,
                               const std::vector<pointcloud::PointCloud>& clouds,
                               const std::vector<dataset::SceneGt>& gts) {
  if (clouds.size() != gts.size())
    throw data_error("build_training_set: cloud/ground-truth count mismatch");
  const auto anchors = proposals::generate_anchors(cfg.bev, cfg.proposals.stride);

  TrainingSet out;
  out.feature_dim = cfg.feature_dim();
  for (std::size_t s = 0; s < clouds.size(); ++s) {
    const bev::BevGrid grid = bev::encode(clouds[s], cfg.bev);
    const auto targets = proposals::match_targets(anchors, gts[s].boxes, cfg.proposals.pos_iou,
                                                  cfg.proposals.neg_iou);
    for (const auto& t : targets) {
      if (t.label != proposals::MatchLabel::vehicle) continue;
      nnet::Sample sample;
      sample.feature =
          to_feature(proposals::pool_roi(grid, anchors[t.anchor_index], cfg.proposals.pool_bins));
      sample.label = 1;
      sample.target = *t.offsets;
      out.samples.push_back(std::move(sample));
    }
    for (const std::size_t idx : proposals::propose_indices(grid, anchors, cfg.proposals.top_k,
                                                            cfg.proposals.min_density)) {
      if (targets[idx].label != proposals::MatchLabel::background) continue;
      nnet::Sample sample;
      sample.feature =
          to_feature(proposals::pool_roi(grid, anchors[idx], cfg.proposals.pool_bins));
      sample.label = 0;
      out.samples.push_back(std::move(sample));
    }
  }
  return out;
}

TrainResult train_model(const TrainingSet& training, const RunConfig& cfg) {
  cfg.train.validate();
  if (training.samples.empty()) throw data_error("train: empty training set");

  Rng init_rng(Rng::derive(cfg.seed, kStreamNetInit));
  TrainResult result;
  result.net = nnet::make_network(training.feature_dim, cfg.hidden_sizes(), cfg.aleatoric_head(),
                                  init_rng);
  result.adam = nnet::make_adam_state(result.net);
  result.best_net = result.net;

  std::vector<std::size_t> pos_pool, neg_pool;
  for (std::size_t i = 0; i < training.samples.size(); ++i) {
    (training.samples[i].label == 1 ? pos_pool : neg_pool).push_back(i);
  }
  if (pos_pool.empty() && neg_pool.empty()) throw data_error("train: no usable samples");

  Rng rng(Rng::derive(cfg.seed, kStreamTraining));
  const int total_steps = cfg.train.steps_main + cfg.train.steps_fine;
  nnet::Network last_good = result.net;
  nnet::AdamState last_good_adam = result.adam;

  double best_avg = std::numeric_limits<double>::infinity();
  double window_sum = 0.0;
  constexpr int kWindow = 25;
  std::vector<double> window;

  for (int step = 0; step < total_steps; ++step) {
    const double lr = step < cfg.train.steps_main ? cfg.train.lr_main : cfg.train.lr_fine;

    // Half-positive batches keep the vehicle class visible despite the
    // background-heavy pool.
    std::vector<const nnet::Sample*> batch;
    batch.reserve(static_cast<std::size_t>(cfg.train.batch_size));
    for (int b = 0; b < cfg.train.batch_size; ++b) {
      const bool want_pos = b < cfg.train.batch_size / 2;
      const auto& pool = (want_pos && !pos_pool.empty()) || neg_pool.empty() ? pos_pool : neg_pool;
      batch.push_back(&training.samples[pool[rng.index(pool.size())]]);
    }

    TrainLogRow row;
    row.step = step;
    row.lr = lr;
    try {
      const nnet::LossBreakdown loss =
          nnet::backward_and_step(result.net, batch, cfg.train, result.adam, lr, rng);
      row.total = loss.total;
      row.cls = loss.cls;
      row.reg = loss.reg;
      row.decay = loss.decay;
    } catch (const numeric_error& e) {
      result.net = last_good;
      result.adam = last_good_adam;
      result.diverged = true;
      result.divergence = "step " + std::to_string(step) + ": " + e.what();
      return result;
    }
    result.log.push_back(row);
    last_good = result.net;
    last_good_adam = result.adam;

    window.push_back(row.total);
    window_sum += row.total;
    if (window.size() > kWindow) {
      window_sum -= window[window.size() - kWindow - 1];
    }
    if (window.size() >= kWindow) {
      const double avg = window_sum / kWindow;
      if (avg < best_avg) {
        best_avg = avg;
        result.best_net = result.net;
        result.best_step = step;
      }
    }
  }
  if (result.log.empty()) result.best_net = result.net;
  return result;
}

void write_train_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write training log: " + path.string());
  out << "step,lr,total,cls,reg,decay\n";
  for (const auto& row : log) {
    out << row.step << ',' << csv_num(row.lr) << ',' << csv_num(row.total) << ','
        << csv_num(row.cls) << ',' << csv_num(row.reg) << ',' << csv_num(row.decay) << '\n';
  }
}

void cmd_train(const RunConfig& cfg, const std::filesystem::path& data_dir,
               const std::filesystem::path& out_dir) {
  const LoadedSplit split = load_split(data_dir, "train");
  const TrainingSet training = build_training_set(cfg, split.clouds, split.gts);
  const TrainResult result = train_model(training, cfg);

  std::filesystem::create_directories(out_dir);
  write_train_log(result.log, out_dir / "train_log.csv");
  nnet::save_model(result.net, out_dir / "model.blnn", &result.adam);
  nnet::save_model(result.best_net, out_dir / "model_best.blnn");
  if (result.diverged)
    throw numeric_error("training diverged (" + result.divergence +
                        "); last good checkpoint written to " +
                        (out_dir / "model.blnn").string());
}

std::vector<eval::SceneDetections> detect_clouds(const nnet::Network& net, const RunConfig& cfg,
                                                 const std::vector<pointcloud::PointCloud>& clouds) {
  const auto anchors = proposals::generate_anchors(cfg.bev, cfg.proposals.stride);
  const int n_passes = cfg.inference_passes();
  const double dropout = cfg.inference_dropout();

  std::vector<eval::SceneDetections> out;
  for (std::size_t s = 0; s < clouds.size(); ++s) {
    eval::SceneDetections scene;
    scene.scene_id = clouds[s].scene_id;
    Rng rng(Rng::derive(cfg.seed, kStreamDetect + static_cast<std::uint64_t>(s)));
    const bev::BevGrid grid = bev::encode(clouds[s], cfg.bev);
    std::vector<uncertainty::UncertaintyReport> reports;
    for (const auto& anchor :
         proposals::propose(grid, anchors, cfg.proposals.top_k, cfg.proposals.min_density)) {
      const auto feature = to_feature(proposals::pool_roi(grid, anchor, cfg.proposals.pool_bins));
      const auto samples = uncertainty::mc_sample(net, feature, anchor, n_passes, dropout, rng);
      reports.push_back(uncertainty::build_report(samples, scene.scene_id));
    }
    scene.reports = eval::nms(reports, cfg.detect.nms_iou);
    out.push_back(std::move(scene));
  }
  return out;
}

void cmd_detect(const RunConfig& cfg, const std::filesystem::path& model_path,
                const std::filesystem::path& data_dir, const std::string& split,
                const std::filesystem::path& out_path,
                const std::filesystem::path& proposals_dump) {
  const nnet::LoadedModel model = nnet::load_model(model_path);
  if (model.net.aleatoric_head != cfg.aleatoric_head())
    throw config_error("model heads do not match mode '" + to_string(cfg.mode) +
                       "': " + (model.net.aleatoric_head ? "model has" : "model lacks") +
                       " a log-variance head");
  if (model.net.input_dim != cfg.feature_dim())
    throw config_error("model input width " + std::to_string(model.net.input_dim) +
                       " does not match configured feature width " +
                       std::to_string(cfg.feature_dim()));

  const LoadedSplit data = load_split(data_dir, split);
  const auto scenes = detect_clouds(model.net, cfg, data.clouds);

  uncertainty::ReportHeader header;
  header.mode = to_string(cfg.mode);
  header.n_passes = cfg.inference_passes();
  header.dropout = cfg.inference_dropout();
  header.seed = cfg.seed;
  std::vector<uncertainty::UncertaintyReport> all;
  for (const auto& s : scenes)
    all.insert(all.end(), s.reports.begin(), s.reports.end());
  uncertainty::write_reports_jsonl(header, all, out_path);

  if (!proposals_dump.empty()) {
    // Raw interchange records. The fitted box plays the anchor role and the
    // offsets carry the fit residual, so decoding the record through its own
    // anchor reproduces the exact mean corners.
    std::vector<proposals::DetectionRecord> records;
    for (const auto& r : all) {
      proposals::DetectionRecord rec;
      rec.scene_id = r.scene_id;
      rec.anchor_box = r.box;
      rec.score = r.veh_prob;
      const double diagonal = std::sqrt(r.box.length * r.box.length + r.box.width * r.box.width +
                                        r.box.height * r.box.height);
      const auto fit_corners = r.box.corners();
      for (int k = 0; k < 8; ++k) {
        const std::size_t i = static_cast<std::size_t>(k);
        rec.offsets[i] = (r.mean_box[i] - fit_corners[i].x) / diagonal;
        rec.offsets[8 + i] = (r.mean_box[8 + i] - fit_corners[i].y) / diagonal;
        rec.offsets[16 + i] = (r.mean_box[16 + i] - fit_corners[i].z) / diagonal;
      }
      if (r.aleatoric) {
        std::array<double, 24> lv{};
        for (int d = 0; d < 24; ++d)
          lv[static_cast<std::size_t>(d)] =
              std::log(r.aleatoric->sigma2[static_cast<std::size_t>(d)]);
        rec.log_vars = lv;
      }
      records.push_back(std::move(rec));
    }
    proposals::write_detections_jsonl(records, proposals_dump);
  }
}

void cmd_analyze(const std::filesystem::path& reports_path,
                 const std::filesystem::path& gt_path, const std::filesystem::path& out_dir) {
  const uncertainty::ReportFile file = uncertainty::read_reports_jsonl(reports_path);
  const auto gt_scenes = dataset::read_gt_jsonl(gt_path);

  std::vector<eval::SceneGroundTruth> gts;
  for (const auto& g : gt_scenes) gts.push_back({g.scene_id, g.boxes});

  std::map<std::string, std::size_t> scene_index;
  std::vector<eval::SceneDetections> detections;
  for (const auto& r : file.reports) {
    const auto [it, inserted] = scene_index.try_emplace(r.scene_id, detections.size());
    if (inserted) detections.push_back({r.scene_id, {}});
    detections[it->second].reports.push_back(r);
  }

  const eval::EvalSummary summary = eval::summarize(detections, gts);

  // The matched set feeding the plots mirrors summarize's gating.
  std::vector<eval::SceneDetections> gated;
  for (const auto& scene : detections) {
    eval::SceneDetections g;
    g.scene_id = scene.scene_id;
    for (const auto& r : scene.reports)
      if (r.detected) g.reports.push_back(r);
    g.reports = eval::nms(g.reports);
    gated.push_back(std::move(g));
  }
  const auto matched = eval::match_detections(gated, gts);

  std::filesystem::create_directories(out_dir);
  eval::write_summary_csv(summary, out_dir / "summary.csv");
  eval::write_plots(summary, matched, out_dir);
  write_digest(summary, matched, file.header.mode, out_dir / "digest.md");
}

}  // namespace blidar::pipeline
