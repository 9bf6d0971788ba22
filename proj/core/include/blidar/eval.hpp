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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blidar/box3d.hpp"
#include "blidar/uncertainty.hpp"

namespace blidar::eval {

// Oriented-box IoU comes from the shared geometry kernel.
using blidar::iou_3d;
using blidar::iou_bev;

inline const std::vector<double> kDefaultIouThresholds = {0.1, 0.2, 0.3, 0.4,
                                                          0.5, 0.6, 0.7, 0.8};

struct SceneDetections {
  std::string scene_id;
  std::vector<uncertainty::UncertaintyReport> reports;
};

struct SceneGroundTruth {
  std::string scene_id;
  std::vector<Box3D> boxes;
};

struct MatchedDetection {
  uncertainty::UncertaintyReport report;
  Box3D box;
  std::optional<Box3D> best_gt;
  double iou = 0.0;       // 0 when best_gt is absent
  double distance = 0.0;  // BEV distance from the sensor to the box center
};

/// Greedy non-maximum suppression on the fitted boxes: descending veh_prob,
/// suppress at BEV IoU >= iou_thresh, ties kept in input order.
std::vector<uncertainty::UncertaintyReport> nms(
    const std::vector<uncertainty::UncertaintyReport>& detections, double iou_thresh = 0.5);

/// Pairs every detection with its best-IoU ground truth in the same scene.
std::vector<MatchedDetection> match_detections(const std::vector<SceneDetections>& detections,
                                               const std::vector<SceneGroundTruth>& gts);

struct F1Row {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long tp = 0, fp = 0, fn = 0;
};

/// Greedy one-to-one matching per scene: detections in descending score,
/// each claims its best unclaimed ground truth with IoU >= threshold.
/// Callers pass detections that already passed the 0.5 probability gate.
std::vector<F1Row> f1_table(const std::vector<SceneDetections>& detections,
                            const std::vector<SceneGroundTruth>& gts,
                            const std::vector<double>& thresholds = kDefaultIouThresholds);

struct BinStats {
  double lo = 0.0, hi = 0.0;
  long count = 0;
  double se = 0.0, mi = 0.0;
  double tv_total = 0.0, tv_x = 0.0, tv_y = 0.0, tv_z = 0.0;
  std::optional<double> sigma2_x, sigma2_y, sigma2_z, sigma2_total;
};

/// Mean uncertainty per IoU bin. Bins are half-open except the last, which
/// also takes IoU exactly at the upper edge. Empty bins are omitted.
std::vector<BinStats> bin_uncertainty_by_iou(const std::vector<MatchedDetection>& matched,
                                             const std::vector<double>& bin_edges);

std::vector<double> default_iou_bin_edges();  // eight equal bins over [0, 1]

/// Sample Pearson correlation. Throws numeric_error when either series has
/// zero variance or fewer than two entries.
double pearson(std::span<const double> xs, std::span<const double> ys);

struct CornerOcclusionStats {
  double fraction = 0.0;  // detections with occluded sum strictly above facing sum
  std::vector<std::pair<double, double>> pairs;  // (facing, occluded) per detection
};

/// Throws numeric_error when no detection carries aleatoric variances.
CornerOcclusionStats corner_occlusion_stats(const std::vector<MatchedDetection>& matched);

struct PccRow {
  std::optional<double> x, y, z, all;  // nullopt renders as "n/a"
};

struct EvalSummary {
  long n_detections = 0;
  long n_ground_truth = 0;
  std::vector<F1Row> f1;
  std::vector<BinStats> iou_bins;
  PccRow pcc_epistemic;  // total variance vs distance
  PccRow pcc_aleatoric;  // sigma^2 axis sums vs distance
  std::optional<double> occluded_gt_facing_fraction;  // over true positives
};

/// IoU threshold used to call a detection a true positive in the corner
/// occlusion statistics.
inline constexpr double kTruePositiveIou = 0.5;

/// Gates detections at veh_prob > 0.5, suppresses duplicates, then composes
/// the metrics above. Throws data_error listing any detection scene_id with
/// no ground-truth scene.
EvalSummary summarize(const std::vector<SceneDetections>& detections,
                      const std::vector<SceneGroundTruth>& gts);

void write_summary_csv(const EvalSummary& summary, const std::filesystem::path& path);

/// Emits f1_vs_iou.svg, uncertainty_vs_iou.svg and uncertainty_vs_distance.svg.
void write_plots(const EvalSummary& summary, const std::vector<MatchedDetection>& matched,
                 const std::filesystem::path& dir);

}  // namespace blidar::eval
