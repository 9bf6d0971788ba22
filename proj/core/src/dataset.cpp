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

#include "blidar/dataset.hpp"

#include <fstream>

#include "blidar/error.hpp"
#include "json.hpp"

namespace blidar::dataset {

namespace {

using json = nlohmann::ordered_json;

}  // namespace

void write_gt_jsonl(const std::vector<SceneGt>& scenes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write ground truth file: " + path.string());
  for (const auto& scene : scenes) {
    json boxes = json::array();
    for (const auto& b : scene.boxes) {
      boxes.push_back(json{{"center", {b.center.x, b.center.y, b.center.z}},
                           {"size", {b.length, b.width, b.height}},
                           {"yaw", b.yaw}});
    }
    const json j{{"scene_id", scene.scene_id},
                 {"noise_sigma", scene.noise_sigma},
                 {"boxes", boxes}};
    out << j.dump() << '\n';
  }
}

std::vector<SceneGt> read_gt_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open ground truth file: " + path.string());
  std::vector<SceneGt> scenes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw data_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    SceneGt scene;
    scene.scene_id = j.at("scene_id").get<std::string>();
    scene.noise_sigma = j.value("noise_sigma", 0.0);
    for (const auto& bj : j.at("boxes")) {
      Box3D b;
      b.center = {bj.at("center").at(0).get<double>(), bj.at("center").at(1).get<double>(),
                  bj.at("center").at(2).get<double>()};
      b.length = bj.at("size").at(0).get<double>();
      b.width = bj.at("size").at(1).get<double>();
      b.height = bj.at("size").at(2).get<double>();
      b.yaw = bj.at("yaw").get<double>();
      scene.boxes.push_back(b);
    }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write manifest: " + path.string());
  const json j{{"seed", manifest.seed},
               {"train", manifest.train_ids},
               {"test", manifest.test_ids},
               {"points_dir", manifest.points_dir},
               {"format", "blpc-v1"}};
  out << j.dump(2) << '\n';
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open manifest: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw data_error(path.string() + ": " + e.what());
  }
  Manifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.train_ids = j.at("train").get<std::vector<std::string>>();
  m.test_ids = j.at("test").get<std::vector<std::string>>();
  m.points_dir = j.value("points_dir", "points");
  return m;
}

std::filesystem::path scene_points_path(const std::filesystem::path& root,
                                        const Manifest& manifest, const std::string& scene_id) {
  return root / manifest.points_dir / (scene_id + ".blpc");
}

}  // namespace blidar::dataset
