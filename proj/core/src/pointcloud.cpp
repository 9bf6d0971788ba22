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

#include "blidar/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "blidar/error.hpp"
#include "blidar/rng.hpp"
#include "binary_io.hpp"

namespace blidar::pointcloud {

namespace {

constexpr char kMagic[4] = {'B', 'L', 'P', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr double kReferenceDistance = 10.0;  // density is specified at 10 m

// One rectangular box face: origin corner plus two edge vectors.
struct Face {
  Vec3 origin;
  Vec3 u;
  Vec3 v;
  Vec3 normal;  // outward unit normal
  double area;
};

std::array<Face, 6> box_faces(const Box3D& box) {
  const auto c = box.corners();
  // Corner order: 0 FL, 1 RL, 2 RR, 3 FR bottom; 4..7 top.
  const auto make = [&](int o, int eu, int ev, Vec3 n) {
    Face f;
    f.origin = c[o];
    f.u = c[eu] - c[o];
    f.v = c[ev] - c[o];
    f.normal = n;
    f.area = f.u.norm() * f.v.norm();
    return f;
  };
  const double cy = std::cos(box.yaw);
  const double sy = std::sin(box.yaw);
  const Vec3 fwd{cy, sy, 0.0};
  const Vec3 left{-sy, cy, 0.0};
  return {
      make(3, 0, 7, fwd),                       // front (+x local)
      make(1, 2, 5, {-fwd.x, -fwd.y, 0.0}),     // rear
      make(0, 1, 4, left),                      // left (+y local)
      make(2, 3, 6, {-left.x, -left.y, 0.0}),   // right
      make(4, 5, 7, {0.0, 0.0, 1.0}),           // top
      make(1, 0, 2, {0.0, 0.0, -1.0}),          // bottom
  };
}

Vec3 face_centroid(const Face& f) {
  return f.origin + 0.5 * f.u + 0.5 * f.v;
}

bool face_visible_from_origin(const Face& f) {
  const Vec3 to_sensor = Vec3{0, 0, 0} - face_centroid(f);
  return dot(f.normal, to_sensor) > 0.0;
}

void validate(const SceneSpec& spec) {
  if (spec.noise_sigma < 0.0) throw data_error("scene spec: noise_sigma must be >= 0");
  if (spec.ground_density < 0.0) throw data_error("scene spec: ground_density must be >= 0");
  for (std::size_t i = 0; i < spec.vehicles.size(); ++i) {
    const auto& v = spec.vehicles[i];
    if (!(v.base_density > 0.0))
      throw data_error("scene spec: vehicle " + std::to_string(i) + " has non-positive density");
    if (!(v.box.length > 0.0 && v.box.width > 0.0 && v.box.height > 0.0))
      throw data_error("scene spec: vehicle " + std::to_string(i) + " has non-positive size");
    for (const auto& corner : v.box.corners()) {
      if (!spec.region.contains(corner))
        throw data_error("scene spec: vehicle " + std::to_string(i) +
                         " lies outside the crop region");
    }
  }
  for (std::size_t i = 0; i < spec.vehicles.size(); ++i) {
    for (std::size_t j = i + 1; j < spec.vehicles.size(); ++j) {
      if (iou_bev(spec.vehicles[i].box, spec.vehicles[j].box) > 0.0)
        throw data_error("scene spec: ground-truth boxes " + std::to_string(i) + " and " +
                         std::to_string(j) + " overlap in bird's-eye view");
    }
  }
}

bool occluded_by_other(const Vec3& p, const std::vector<VehicleSpec>& vehicles,
                       std::size_t self) {
  for (std::size_t k = 0; k < vehicles.size(); ++k) {
    if (k == self) continue;
    if (segment_intersects_box({0, 0, 0}, p, vehicles[k].box)) return true;
  }
  return false;
}

// Samples `count` stratified points on the face: the face is split into a
// grid of at least `count` cells, the cells are shuffled, and one uniform
// point is drawn in each of the first `count` cells.
void sample_face(const Face& face, long count, const SceneSpec& spec, std::size_t self,
                 Rng& rng, std::vector<Point>& out) {
  if (count <= 0) return;
  const double lu = face.u.norm();
  const double lv = face.v.norm();
  const double aspect = (lv > 0.0) ? lu / lv : 1.0;
  long gu = std::max<long>(1, std::lround(std::sqrt(static_cast<double>(count) * aspect)));
  long gv = (count + gu - 1) / gu;
  std::vector<long> cells(static_cast<std::size_t>(gu * gv));
  std::iota(cells.begin(), cells.end(), 0L);
  rng.shuffle(cells);

  const double sigma = spec.noise_sigma;
  for (long n = 0; n < count; ++n) {
    const long cell = cells[static_cast<std::size_t>(n)];
    const double fu = (static_cast<double>(cell % gu) + rng.uniform()) / static_cast<double>(gu);
    const double fv = (static_cast<double>(cell / gu) + rng.uniform()) / static_cast<double>(gv);
    const Vec3 surface = face.origin + fu * face.u + fv * face.v;
    const double jitter = std::clamp(rng.normal() * sigma, -6.0 * sigma, 6.0 * sigma);
    const double intensity = rng.uniform(0.3, 0.9);
    if (occluded_by_other(surface, spec.vehicles, self)) continue;
    const Vec3 p = surface + jitter * face.normal;
    out.push_back({static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z),
                   static_cast<float>(intensity)});
  }
}

void sample_ground(const SceneSpec& spec, Rng& rng, std::vector<Point>& out) {
  if (spec.ground_density <= 0.0) return;
  const auto& r = spec.region;
  const double area = (r.x_max - r.x_min) * (r.y_max - r.y_min);
  const long count = rng.poisson(spec.ground_density * area);
  const double sigma = spec.noise_sigma;
  for (long n = 0; n < count; ++n) {
    const double x = rng.uniform(r.x_min, r.x_max);
    const double y = rng.uniform(r.y_min, r.y_max);
    const double jitter = std::clamp(rng.normal() * sigma, -6.0 * sigma, 6.0 * sigma);
    const double intensity = rng.uniform(0.0, 0.2);
    out.push_back({static_cast<float>(x), static_cast<float>(y),
                   static_cast<float>(kGroundPlaneZ + jitter), static_cast<float>(intensity)});
  }
}

void check_record(float x, float y, float z, float intensity, std::size_t index) {
  const auto bad = [&](const char* what) {
    throw data_error("point record " + std::to_string(index) + ": " + what);
  };
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) bad("non-finite coordinate");
  if (!std::isfinite(intensity) || intensity < 0.0f || intensity > 1.0f)
    bad("intensity outside [0, 1]");
}

PointCloud load_csv(std::ifstream& in, const std::filesystem::path& path) {
  PointCloud cloud;
  cloud.scene_id = path.stem().string();
  std::string line;
  if (!std::getline(in, line)) return cloud;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,y,z,intensity")
    throw data_error(path.string() + ": expected CSV header 'x,y,z,intensity'");
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    float vals[4];
    char comma = ',';
    for (int k = 0; k < 4; ++k) {
      if (k > 0 && (!(ls >> comma) || comma != ','))
        throw data_error("point record " + std::to_string(index) + ": malformed CSV line");
      if (!(ls >> vals[k]))
        throw data_error("point record " + std::to_string(index) + ": malformed CSV line");
    }
    check_record(vals[0], vals[1], vals[2], vals[3], index);
    cloud.points.push_back({vals[0], vals[1], vals[2], vals[3]});
    ++index;
  }
  return cloud;
}

}  // namespace

PointCloud simulate_scan(const SceneSpec& spec) {
  validate(spec);
  PointCloud cloud;
  cloud.scene_id = spec.scene_id;
  Rng rng(spec.rng_seed);
  for (std::size_t i = 0; i < spec.vehicles.size(); ++i) {
    const auto& vehicle = spec.vehicles[i];
    for (const Face& face : box_faces(vehicle.box)) {
      if (!face_visible_from_origin(face)) continue;
      const double d = face_centroid(face).norm();
      const double mean =
          vehicle.base_density * face.area * (kReferenceDistance / d) * (kReferenceDistance / d);
      const long count = rng.poisson(mean);
      sample_face(face, count, spec, i, rng, cloud.points);
    }
  }
  sample_ground(spec, rng, cloud.points);
  return cloud;
}

PointCloud load_points(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open point file: " + path.string());

  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  if (in.gcount() == 0) {
    // Zero-byte file reads as an empty cloud.
    PointCloud cloud;
    cloud.scene_id = path.stem().string();
    return cloud;
  }
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    in.clear();
    in.seekg(0);
    return load_csv(in, path);
  }

  std::uint32_t version = 0;
  if (!detail::read_u32le(in, version)) throw data_error(path.string() + ": truncated header");
  if (version != kVersion)
    throw data_error(path.string() + ": unsupported BLPC version " + std::to_string(version));
  std::uint64_t count = 0;
  if (!detail::read_u64le(in, count)) throw data_error(path.string() + ": truncated header");

  PointCloud cloud;
  cloud.scene_id = path.stem().string();
  cloud.points.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    float vals[4];
    for (float& v : vals) {
      if (!detail::read_f32le(in, v))
        throw data_error("point record " + std::to_string(i) + ": malformed record length");
    }
    check_record(vals[0], vals[1], vals[2], vals[3], i);
    cloud.points.push_back({vals[0], vals[1], vals[2], vals[3]});
  }
  if (in.peek() != EOF)
    throw data_error(path.string() + ": trailing bytes after " + std::to_string(count) +
                     " records");
  return cloud;
}

void save_points(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write point file: " + path.string());
  out.write(kMagic, 4);
  detail::write_u32le(out, kVersion);
  detail::write_u64le(out, cloud.points.size());
  for (const Point& p : cloud.points) {
    detail::write_f32le(out, p.x);
    detail::write_f32le(out, p.y);
    detail::write_f32le(out, p.z);
    detail::write_f32le(out, p.intensity);
  }
  if (!out) throw data_error("write failed: " + path.string());
}

}  // namespace blidar::pointcloud
