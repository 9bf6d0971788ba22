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

#include "blidar/bev.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "blidar/error.hpp"

namespace blidar::bev {

namespace {

int span_cells(double lo, double hi, double res) {
  return static_cast<int>(std::llround((hi - lo) / res));
}

}  // namespace

int BevConfig::rows() const { return span_cells(x_min, x_max, resolution); }
int BevConfig::cols() const { return span_cells(y_min, y_max, resolution); }

void BevConfig::validate() const {
  if (!(resolution > 0.0)) throw config_error("bev: resolution must be positive");
  if (!(x_max > x_min) || !(y_max > y_min) || !(z_max > z_min))
    throw config_error("bev: degenerate crop range");
  if (num_slices < 1) throw config_error("bev: num_slices must be >= 1");
  const auto divides = [&](double lo, double hi) {
    const double cells = (hi - lo) / resolution;
    return std::abs(cells - std::round(cells)) < 1e-9 && std::round(cells) >= 1.0;
  };
  if (!divides(x_min, x_max) || !divides(y_min, y_max))
    throw config_error("bev: crop range is not a whole number of cells");
}

BevGrid encode(const pointcloud::PointCloud& cloud, const BevConfig& cfg) {
  cfg.validate();
  BevGrid grid;
  grid.cfg = cfg;
  grid.rows = cfg.rows();
  grid.cols = cfg.cols();
  grid.data.assign(static_cast<std::size_t>(cfg.channels()) * grid.rows * grid.cols, 0.0f);

  const std::size_t ncells = static_cast<std::size_t>(grid.rows) * grid.cols;
  const int m = cfg.num_slices;
  const double thickness = cfg.slice_thickness();

  std::vector<std::uint32_t> counts(ncells, 0);
  std::vector<float> best_z(ncells, -std::numeric_limits<float>::infinity());
  std::vector<float> best_intensity(ncells, 0.0f);
  // Height channels accumulate max z per (cell, slice) directly in the grid,
  // kept as raw z until the normalization pass.
  std::vector<bool> slice_hit(ncells * static_cast<std::size_t>(m), false);

  for (const auto& p : cloud.points) {
    if (p.x < cfg.x_min || p.x >= cfg.x_max || p.y < cfg.y_min || p.y >= cfg.y_max ||
        p.z < cfg.z_min || p.z >= cfg.z_max)
      continue;
    const int r = static_cast<int>(std::floor((p.x - cfg.x_min) / cfg.resolution));
    const int c = static_cast<int>(std::floor((p.y - cfg.y_min) / cfg.resolution));
    if (r < 0 || r >= grid.rows || c < 0 || c >= grid.cols) continue;
    const std::size_t cell = static_cast<std::size_t>(r) * grid.cols + c;

    int s = static_cast<int>(std::floor((p.z - cfg.z_min) / thickness));
    s = std::clamp(s, 0, m - 1);
    const std::size_t hit = cell * m + s;
    float& hz = grid.at(s, r, c);
    if (!slice_hit[hit] || p.z > hz) {
      hz = p.z;
      slice_hit[hit] = true;
    }

    counts[cell] += 1;
    if (p.z > best_z[cell] || (p.z == best_z[cell] && p.intensity > best_intensity[cell])) {
      best_z[cell] = p.z;
      best_intensity[cell] = p.intensity;
    }
  }

  const double inv_log64 = 1.0 / std::log(64.0);
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const std::size_t cell = static_cast<std::size_t>(r) * grid.cols + c;
      for (int s = 0; s < m; ++s) {
        float& hz = grid.at(s, r, c);
        if (slice_hit[cell * m + s]) {
          const double floor_z = cfg.z_min + s * thickness;
          hz = static_cast<float>(std::clamp((hz - floor_z) / thickness, 0.0, 1.0));
        }
      }
      if (counts[cell] > 0) {
        grid.at(m, r, c) = best_intensity[cell];
        grid.at(m + 1, r, c) = static_cast<float>(
            std::min(1.0, std::log(static_cast<double>(counts[cell]) + 1.0) * inv_log64));
      }
    }
  }
  return grid;
}

std::pair<int, int> cell_of(double x, double y, const BevConfig& cfg) {
  if (x < cfg.x_min || x >= cfg.x_max || y < cfg.y_min || y >= cfg.y_max)
    throw std::out_of_range("cell_of: point outside the crop region");
  const int r = static_cast<int>(std::floor((x - cfg.x_min) / cfg.resolution));
  const int c = static_cast<int>(std::floor((y - cfg.y_min) / cfg.resolution));
  return {std::min(r, cfg.rows() - 1), std::min(c, cfg.cols() - 1)};
}

std::pair<double, double> cell_center(int row, int col, const BevConfig& cfg) {
  if (row < 0 || row >= cfg.rows() || col < 0 || col >= cfg.cols())
    throw std::out_of_range("cell_center: index outside the grid");
  return {cfg.x_min + (row + 0.5) * cfg.resolution, cfg.y_min + (col + 0.5) * cfg.resolution};
}

void dump_csv(const BevGrid& grid, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (int ch = 0; ch < grid.channels(); ++ch) {
    char name[32];
    std::snprintf(name, sizeof(name), "channel%02d.csv", ch);
    std::ofstream out(dir / name, std::ios::trunc);
    if (!out) throw data_error("cannot write grid dump: " + (dir / name).string());
    for (int r = 0; r < grid.rows; ++r) {
      for (int c = 0; c < grid.cols; ++c) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.9g", grid.at(ch, r, c));
        out << buf << (c + 1 < grid.cols ? "," : "");
      }
      out << '\n';
    }
  }
  std::ofstream hdr(dir / "header.txt", std::ios::trunc);
  if (!hdr) throw data_error("cannot write grid dump header");
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "x_range=[%g,%g]\ny_range=[%g,%g]\nz_range=[%g,%g]\n"
                "resolution=%g\nnum_slices=%d\nrows=%d\ncols=%d\n",
                grid.cfg.x_min, grid.cfg.x_max, grid.cfg.y_min, grid.cfg.y_max, grid.cfg.z_min,
                grid.cfg.z_max, grid.cfg.resolution, grid.cfg.num_slices, grid.rows, grid.cols);
  hdr << buf;
}

}  // namespace blidar::bev
