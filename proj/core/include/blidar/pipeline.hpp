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

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "blidar/config.hpp"
#include "blidar/dataset.hpp"
#include "blidar/eval.hpp"
#include "blidar/nnet.hpp"
#include "blidar/pointcloud.hpp"

namespace blidar::pipeline {

/// Scene specs for both splits, a pure function of the config (and so of the
/// seed). Ground-truth records mirror the specs.
struct SyntheticScenes {
  std::vector<pointcloud::SceneSpec> train_specs;
  std::vector<pointcloud::SceneSpec> test_specs;
  std::vector<dataset::SceneGt> train_gt;
  std::vector<dataset::SceneGt> test_gt;
};

SyntheticScenes make_scene_specs(const RunConfig& cfg);

/// Writes points/<scene>.blpc for both splits plus gt_train.jsonl,
/// gt_test.jsonl and manifest.json under out_dir.
void cmd_synth(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct TrainingSet {
  std::vector<nnet::Sample> samples;
  int feature_dim = 0;
};

/// Pools ROI features for training: every positive-labeled anchor plus the
/// background-labeled anchors among the density proposals, so negatives
/// follow the distribution the detector sees at test time.
TrainingSet build_training_set(const RunConfig& cfg,
                               const std::vector<pointcloud::PointCloud>& clouds,
                               const std::vector<dataset::SceneGt>& gts);

struct TrainLogRow {
  int step = 0;
  double lr = 0.0;
  double total = 0.0, cls = 0.0, reg = 0.0, decay = 0.0;
};

struct TrainResult {
  nnet::Network net;        // final parameters (last good step when diverged)
  nnet::AdamState adam;
  nnet::Network best_net;   // lowest smoothed training loss
  int best_step = 0;
  std::vector<TrainLogRow> log;
  bool diverged = false;
  std::string divergence;
};

/// Two-phase Adam training (steps_main at lr, then steps_fine at lr_fine)
/// with half-positive batches. Deterministic per cfg.seed.
TrainResult train_model(const TrainingSet& training, const RunConfig& cfg);

void write_train_log(const std::vector<TrainLogRow>& log, const std::filesystem::path& path);

/// Loads the dataset under data_dir, trains per cfg.mode and writes
/// model.blnn, model_best.blnn and train_log.csv into out_dir. Divergence
/// still writes the last good checkpoint, then throws numeric_error.
void cmd_train(const RunConfig& cfg, const std::filesystem::path& data_dir,
               const std::filesystem::path& out_dir);

/// Proposal -> MC sampling -> suppression for in-memory clouds. One report
/// per surviving proposal, including sub-gate ones (detected = false).
std::vector<eval::SceneDetections> detect_clouds(const nnet::Network& net, const RunConfig& cfg,
                                                 const std::vector<pointcloud::PointCloud>& clouds);

/// Dataset-level detection: loads the chosen split ("test" or "train"),
/// runs detect_clouds and writes the reports JSONL (and optionally the raw
/// proposal interchange). The model's heads must match cfg.mode.
void cmd_detect(const RunConfig& cfg, const std::filesystem::path& model_path,
                const std::filesystem::path& data_dir, const std::string& split,
                const std::filesystem::path& out_path,
                const std::filesystem::path& proposals_dump = {});

/// Reads reports + ground truth, emits summary.csv, SVG plots and digest.md
/// into out_dir.
void cmd_analyze(const std::filesystem::path& reports_path,
                 const std::filesystem::path& gt_path, const std::filesystem::path& out_dir);

}  // namespace blidar::pipeline
