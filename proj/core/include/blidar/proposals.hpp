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

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "blidar/bev.hpp"
#include "blidar/box3d.hpp"

namespace blidar::proposals {

/// Anchors share a fixed vertical extent chosen to enclose ordinary
/// vehicles with margin.
inline constexpr double kAnchorZCenter = -1.0;
inline constexpr double kAnchorHeight = 2.5;

/// Anchor footprint areas in cells^2 (sides of 16, 32 and 48 cells) and the
/// width:length aspect ratios 1:1, 1:2 and 2:1.
inline constexpr std::array<double, 3> kAnchorScalesCells = {16.0, 32.0, 48.0};
inline constexpr std::array<double, 3> kAnchorAspects = {1.0, 2.0, 0.5};

struct Anchor {
  Box3D box;
  double diagonal = 0.0;  // sqrt(l^2 + w^2 + h^2)
};

/// 24 diagonal-normalized corner offsets, laid out [x0..x7; y0..y7; z0..z7]
/// in the Box3D corner order.
using CornerOffsets = std::array<double, 24>;

/// Pooled G x G x channels feature over an anchor footprint, flattened
/// channel-major.
struct RoiFeature {
  std::vector<double> values;
  int bins = 0;
  int channels = 0;
};

/// Nine anchors (3 scales x 3 aspects) per lattice position. The lattice
/// visits cells (stride/2 + i*stride) on both axes; anchors sit at the cell
/// center with yaw 0.
std::vector<Anchor> generate_anchors(const bev::BevConfig& cfg, int stride);

Anchor make_anchor(double cx, double cy, double length, double width);

/// v = (corners(gt) - corners(anchor)) / anchor.diagonal
CornerOffsets encode_box(const Box3D& gt, const Anchor& anchor);

struct DecodedBox {
  std::array<Vec3, 8> corners;
  Box3D fitted;
};

/// corners = anchor.diagonal * v + corners(anchor); the fitted box is the
/// least-squares oriented box over the decoded corners (center from the
/// corner mean, yaw from the principal axis of the bottom face, extents
/// along the fitted axes). Throws numeric_error when all corners coincide.
DecodedBox decode_box(const CornerOffsets& v, const Anchor& anchor);

/// The fitting step of decode_box, exposed for reuse on mean boxes. The
/// fitted yaw is reported in (-pi/2, pi/2]; a box and its 180-degree twin
/// decode identically.
Box3D fit_box_to_corners(const std::array<Vec3, 8>& corners);

/// Mean-pools the grid over the axis-aligned bounding rectangle of the
/// anchor footprint, split into bins x bins. Area outside the grid
/// contributes zeros; throws data_error when the footprint misses the grid
/// entirely.
RoiFeature pool_roi(const bev::BevGrid& grid, const Anchor& anchor, int bins);

/// Scores every anchor by the summed density-channel mass under its
/// footprint and returns up to top_k anchors with score >= min_density,
/// best first, ties broken by anchor order.
std::vector<Anchor> propose(const bev::BevGrid& grid, const std::vector<Anchor>& anchors,
                            int top_k, double min_density);

/// Index form of propose, for callers that need to join the selection back
/// to per-anchor labels.
std::vector<std::size_t> propose_indices(const bev::BevGrid& grid,
                                         const std::vector<Anchor>& anchors, int top_k,
                                         double min_density);

enum class MatchLabel { background, vehicle, ignored };

struct Target {
  std::size_t anchor_index = 0;
  MatchLabel label = MatchLabel::background;
  int gt_index = -1;
  std::optional<CornerOffsets> offsets;  // present for positives
};

/// Faster-RCNN style assignment on BEV IoU: >= pos_iou is a vehicle (with
/// offsets to the best ground truth), < neg_iou is background, in between is
/// ignored. Every ground truth additionally claims its best-IoU anchor.
std::vector<Target> match_targets(const std::vector<Anchor>& anchors,
                                  const std::vector<Box3D>& gts, double pos_iou = 0.5,
                                  double neg_iou = 0.35);

/// JSON Lines interchange for raw per-proposal outputs.
struct DetectionRecord {
  std::string scene_id;
  Box3D anchor_box;
  double score = 0.0;
  CornerOffsets offsets{};
  std::optional<std::array<double, 24>> log_vars;
};

void write_detections_jsonl(const std::vector<DetectionRecord>& records,
                            const std::filesystem::path& path);
std::vector<DetectionRecord> read_detections_jsonl(const std::filesystem::path& path);

}  // namespace blidar::proposals
