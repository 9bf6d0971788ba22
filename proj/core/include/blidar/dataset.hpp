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
#include <vector>

#include "blidar/box3d.hpp"

namespace blidar::dataset {

/// Ground truth for one scene: one JSONL line per scene.
struct SceneGt {
  std::string scene_id;
  double noise_sigma = 0.0;
  std::vector<Box3D> boxes;
};

void write_gt_jsonl(const std::vector<SceneGt>& scenes, const std::filesystem::path& path);
std::vector<SceneGt> read_gt_jsonl(const std::filesystem::path& path);

/// Dataset manifest: scene ids per split and the master seed, stored as
/// manifest.json next to the points/ directory and gt files.
struct Manifest {
  std::uint64_t seed = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::string points_dir = "points";
};

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

/// Path of one scene's point file inside a dataset rooted at `root`.
std::filesystem::path scene_points_path(const std::filesystem::path& root,
                                        const Manifest& manifest, const std::string& scene_id);

}  // namespace blidar::dataset
