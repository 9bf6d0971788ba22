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

#include <cstdint>
#include <filesystem>
#include <string>

#include "blidar/bev.hpp"
#include "blidar/nnet.hpp"

namespace blidar {

/// The four network variants. The mode decides which heads and losses are
/// active and how inference runs:
///   non_bayesian          deterministic inference, smooth-L1 loss
///   epistemic             MC-dropout inference, smooth-L1 loss
///   aleatoric             deterministic inference, attenuated loss + lambda head
///   epistemic_aleatoric   MC-dropout inference, attenuated loss + lambda head
/// Dropout regularizes training in every mode; the modes differ in the loss
/// and in how test-time passes are drawn.
enum class Mode { non_bayesian, epistemic, aleatoric, epistemic_aleatoric };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& name);  // throws config_error

/// Synthetic benchmark generator settings. The noisy_* fields mark a
/// fraction of the training scenes with heavier point jitter, which is what
/// the attenuated loss is meant to absorb.
struct SynthConfig {
  int train_scenes = 200;
  int test_scenes = 50;
  int min_vehicles = 2;
  int max_vehicles = 6;
  double noise_sigma = 0.05;    // m, base jitter
  double noisy_fraction = 0.2;  // fraction of train scenes with noisy_sigma
  double noisy_sigma = 0.3;     // m
  double ground_density = 0.0;  // clutter points per m^2, 0 = off
  double distance_min = 8.0;    // m, vehicle center distance range
  double distance_max = 90.0;
  double density_min = 40.0;  // points/m^2 at 10 m
  double density_max = 80.0;
  double occlusion_pair_prob = 0.35;  // chance to place a vehicle behind another
};

struct ProposalConfig {
  int stride = 8;        // anchor lattice stride, cells
  int pool_bins = 8;     // G
  int top_k = 64;        // proposals per scene
  double min_density = 0.5;
  double pos_iou = 0.5;
  double neg_iou = 0.35;
};

struct DetectConfig {
  int n_passes = 40;    // MC-dropout passes in epistemic modes
  double nms_iou = 0.5;
};

struct RunConfig {
  Mode mode = Mode::epistemic;
  std::uint64_t seed = 1;
  SynthConfig synth;
  bev::BevConfig bev;
  ProposalConfig proposals;
  nnet::TrainConfig train;
  int hidden_width = 64;
  int hidden_layers = 3;
  DetectConfig detect;

  bool mc_inference() const {
    return mode == Mode::epistemic || mode == Mode::epistemic_aleatoric;
  }
  bool aleatoric_head() const {
    return mode == Mode::aleatoric || mode == Mode::epistemic_aleatoric;
  }
  int inference_passes() const { return mc_inference() ? detect.n_passes : 1; }
  double inference_dropout() const { return mc_inference() ? train.dropout_p : 0.0; }
  int feature_dim() const {
    return proposals.pool_bins * proposals.pool_bins * bev.channels();
  }
  std::vector<int> hidden_sizes() const {
    return std::vector<int>(static_cast<std::size_t>(hidden_layers), hidden_width);
  }

  void validate() const;  // throws config_error
};

/// Flat `key = value` file with [section] headers; # and ; start comments.
/// Unknown sections or keys are config errors. Values override the defaults
/// already present in `cfg`.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

RunConfig load_config(const std::filesystem::path& path);

}  // namespace blidar
