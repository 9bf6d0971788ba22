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
#include <utility>
#include <vector>

#include "blidar/pointcloud.hpp"

namespace blidar::bev {

/// Bird's-eye-view discretization parameters. Rows index x (forward),
/// columns index y (left). Cells are half-open: a coordinate exactly at the
/// upper range edge falls outside the grid.
struct BevConfig {
  double x_min = 0.0, x_max = 100.0;
  double y_min = -30.0, y_max = 30.0;
  double z_min = -3.5, z_max = 0.6;
  double resolution = 0.1;  // m per cell
  int num_slices = 4;       // M height slices; slice 0 is the lowest

  int rows() const;
  int cols() const;
  int channels() const { return num_slices + 2; }
  double slice_thickness() const { return (z_max - z_min) / num_slices; }

  /// Throws config_error unless ranges are non-degenerate and divide evenly
  /// by the resolution.
  void validate() const;
};

/// (M+2)-channel feature grid: M per-slice height maps, then the intensity
/// map, then the density map. Planes are stored channel-major, row-major.
struct BevGrid {
  BevConfig cfg;
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  float at(int channel, int row, int col) const {
    return data[(static_cast<std::size_t>(channel) * rows + row) * cols + col];
  }
  float& at(int channel, int row, int col) {
    return data[(static_cast<std::size_t>(channel) * rows + row) * cols + col];
  }
  int channels() const { return cfg.channels(); }
};

/// Rasterizes the cloud. Per cell: height channel s is the max point z in
/// slice s, normalized to [0, 1] within the slice (0 when empty); the
/// intensity channel carries the intensity of the highest point in the cell
/// (ties broken toward the larger intensity, keeping the result independent
/// of point order); the density channel is min(1, ln(n+1)/ln 64).
BevGrid encode(const pointcloud::PointCloud& cloud, const BevConfig& cfg);

/// Maps a point to its (row, col) cell; throws std::out_of_range outside the
/// crop. Inverse of cell_center on every cell.
std::pair<int, int> cell_of(double x, double y, const BevConfig& cfg);

/// Center coordinates of a cell; throws std::out_of_range for bad indices.
std::pair<double, double> cell_center(int row, int col, const BevConfig& cfg);

/// Golden-test dump: one row-major CSV per channel (channel00.csv, ...) plus
/// a header.txt listing the config fields.
void dump_csv(const BevGrid& grid, const std::filesystem::path& dir);

}  // namespace blidar::bev
