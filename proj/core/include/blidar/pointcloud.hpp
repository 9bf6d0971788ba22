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

namespace blidar::pointcloud {

/// One Lidar return. Stored in 32-bit floats, matching the on-disk record,
/// so that save/load round-trips are lossless.
struct Point {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;
  float intensity = 0.0f;  // unitless, in [0, 1]
};

struct PointCloud {
  std::string scene_id;
  std::vector<Point> points;
};

/// Axis-aligned sensing region; defaults match the BEV crop.
struct CropRegion {
  double x_min = 0.0, x_max = 100.0;
  double y_min = -30.0, y_max = 30.0;
  double z_min = -3.5, z_max = 0.6;

  bool contains(const Vec3& p) const {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max &&
           p.z >= z_min && p.z <= z_max;
  }
};

struct VehicleSpec {
  Box3D box;
  double base_density = 60.0;  // points per m^2 on a face at 10 m
};

/// Full description of one synthetic scene. The sensor sits at the origin.
struct SceneSpec {
  std::string scene_id;
  std::vector<VehicleSpec> vehicles;
  std::uint64_t rng_seed = 0;
  double noise_sigma = 0.0;     // Gaussian jitter along the face normal, m
  double ground_density = 0.0;  // clutter points per m^2 at z = -1.73; 0 = off
  CropRegion region;
};

/// z of the optional ground-clutter plane.
inline constexpr double kGroundPlaneZ = -1.73;

/// Samples a Lidar scan of the scene. Points land on box faces that are
/// visible from the origin; faces shadowed by another vehicle lose the
/// occluded returns. Expected per-face count is
///   base_density * face_area * (10 / face_centroid_distance)^2,
/// drawn Poisson, stratified over the face. Deterministic per rng_seed.
///
/// Throws data_error for invalid specs, including ground-truth boxes that
/// overlap in bird's-eye view.
PointCloud simulate_scan(const SceneSpec& spec);

/// Binary "BLPC" v1 format, or CSV with header `x,y,z,intensity`; the loader
/// sniffs the magic bytes. Validation failures name the offending record.
PointCloud load_points(const std::filesystem::path& path);

/// Writes the binary BLPC format.
void save_points(const PointCloud& cloud, const std::filesystem::path& path);

}  // namespace blidar::pointcloud
