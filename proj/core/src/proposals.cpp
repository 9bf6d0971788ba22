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

#include "blidar/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "blidar/error.hpp"
#include "json.hpp"

namespace blidar::proposals {

namespace {

using json = nlohmann::ordered_json;

struct CellRect {
  int r0, r1, c0, c1;  // half-open, possibly outside the grid
};

CellRect footprint_cells(const Box3D& box, const bev::BevConfig& cfg) {
  const auto fp = box.footprint();
  double x_lo = fp[0].x, x_hi = fp[0].x, y_lo = fp[0].y, y_hi = fp[0].y;
  for (const auto& p : fp) {
    x_lo = std::min(x_lo, p.x);
    x_hi = std::max(x_hi, p.x);
    y_lo = std::min(y_lo, p.y);
    y_hi = std::max(y_hi, p.y);
  }
  CellRect rect;
  rect.r0 = static_cast<int>(std::floor((x_lo - cfg.x_min) / cfg.resolution));
  rect.r1 = static_cast<int>(std::ceil((x_hi - cfg.x_min) / cfg.resolution));
  rect.c0 = static_cast<int>(std::floor((y_lo - cfg.y_min) / cfg.resolution));
  rect.c1 = static_cast<int>(std::ceil((y_hi - cfg.y_min) / cfg.resolution));
  if (rect.r1 <= rect.r0) rect.r1 = rect.r0 + 1;
  if (rect.c1 <= rect.c0) rect.c1 = rect.c0 + 1;
  return rect;
}

json box_to_json(const Box3D& b) {
  return json{{"center", {b.center.x, b.center.y, b.center.z}},
              {"size", {b.length, b.width, b.height}},
              {"yaw", b.yaw}};
}

Box3D box_from_json(const json& j) {
  Box3D b;
  b.center = {j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>(),
              j.at("center").at(2).get<double>()};
  b.length = j.at("size").at(0).get<double>();
  b.width = j.at("size").at(1).get<double>();
  b.height = j.at("size").at(2).get<double>();
  b.yaw = j.at("yaw").get<double>();
  return b;
}

}  // namespace

Anchor make_anchor(double cx, double cy, double length, double width) {
  Anchor a;
  a.box.center = {cx, cy, kAnchorZCenter};
  a.box.length = length;
  a.box.width = width;
  a.box.height = kAnchorHeight;
  a.box.yaw = 0.0;
  a.diagonal = std::sqrt(length * length + width * width + kAnchorHeight * kAnchorHeight);
  return a;
}

std::vector<Anchor> generate_anchors(const bev::BevConfig& cfg, int stride) {
  cfg.validate();
  if (stride < 1) throw config_error("anchors: stride must be >= 1");
  std::vector<Anchor> anchors;
  const int rows = cfg.rows();
  const int cols = cfg.cols();
  for (int r = stride / 2; r < rows; r += stride) {
    for (int c = stride / 2; c < cols; c += stride) {
      const auto [cx, cy] = bev::cell_center(r, c, cfg);
      for (const double side : kAnchorScalesCells) {
        const double area = side * side;  // cells^2
        for (const double rho : kAnchorAspects) {
          // width:length = 1:rho at equal area.
          const double w = std::sqrt(area / rho) * cfg.resolution;
          const double l = std::sqrt(area * rho) * cfg.resolution;
          anchors.push_back(make_anchor(cx, cy, l, w));
        }
      }
    }
  }
  return anchors;
}

CornerOffsets encode_box(const Box3D& gt, const Anchor& anchor) {
  if (!(anchor.diagonal > 0.0)) throw numeric_error("encode_box: anchor diagonal must be > 0");
  const auto gc = gt.corners();
  const auto ac = anchor.box.corners();
  CornerOffsets v{};
  const double inv = 1.0 / anchor.diagonal;
  for (int i = 0; i < 8; ++i) {
    v[i] = (gc[i].x - ac[i].x) * inv;
    v[8 + i] = (gc[i].y - ac[i].y) * inv;
    v[16 + i] = (gc[i].z - ac[i].z) * inv;
  }
  return v;
}

Box3D fit_box_to_corners(const std::array<Vec3, 8>& corners) {
  Vec3 mean{0, 0, 0};
  for (const auto& c : corners) mean = mean + c;
  mean = (1.0 / 8.0) * mean;

  double spread = 0.0;
  for (const auto& c : corners) spread = std::max(spread, (c - mean).norm());
  if (spread < 1e-9) throw numeric_error("box fit: degenerate corner set (all coincident)");

  // Principal axis of the bottom four corners in the BEV plane.
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < 4; ++i) {
    mx += corners[i].x;
    my += corners[i].y;
  }
  mx *= 0.25;
  my *= 0.25;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double dx = corners[i].x - mx;
    const double dy = corners[i].y - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  // Angle of the dominant eigenvector of [[sxx,sxy],[sxy,syy]]; lands in
  // (-pi/2, pi/2], which is all a symmetric box can determine.
  double yaw = 0.5 * std::atan2(2.0 * sxy, sxx - syy);

  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  double lo_l = 0.0, hi_l = 0.0, lo_w = 0.0, hi_w = 0.0, lo_z = 0.0, hi_z = 0.0;
  for (int i = 0; i < 8; ++i) {
    const double dx = corners[i].x - mean.x;
    const double dy = corners[i].y - mean.y;
    const double along = c * dx + s * dy;
    const double across = -s * dx + c * dy;
    const double dz = corners[i].z - mean.z;
    if (i == 0) {
      lo_l = hi_l = along;
      lo_w = hi_w = across;
      lo_z = hi_z = dz;
    } else {
      lo_l = std::min(lo_l, along);
      hi_l = std::max(hi_l, along);
      lo_w = std::min(lo_w, across);
      hi_w = std::max(hi_w, across);
      lo_z = std::min(lo_z, dz);
      hi_z = std::max(hi_z, dz);
    }
  }
  Box3D fitted;
  fitted.center = mean;
  fitted.length = std::max(hi_l - lo_l, 1e-9);
  fitted.width = std::max(hi_w - lo_w, 1e-9);
  fitted.height = std::max(hi_z - lo_z, 1e-9);
  fitted.yaw = yaw;
  return fitted;
}

DecodedBox decode_box(const CornerOffsets& v, const Anchor& anchor) {
  const auto ac = anchor.box.corners();
  DecodedBox out;
  for (int i = 0; i < 8; ++i) {
    out.corners[i] = {ac[i].x + anchor.diagonal * v[i], ac[i].y + anchor.diagonal * v[8 + i],
                      ac[i].z + anchor.diagonal * v[16 + i]};
  }
  out.fitted = fit_box_to_corners(out.corners);
  return out;
}

RoiFeature pool_roi(const bev::BevGrid& grid, const Anchor& anchor, int bins) {
  if (bins < 1) throw config_error("pool_roi: bins must be >= 1");
  const auto& cfg = grid.cfg;
  const CellRect rect = footprint_cells(anchor.box, cfg);
  if (rect.r1 <= 0 || rect.r0 >= grid.rows || rect.c1 <= 0 || rect.c0 >= grid.cols)
    throw data_error("pool_roi: anchor footprint lies outside the grid");

  RoiFeature feat;
  feat.bins = bins;
  feat.channels = grid.channels();
  feat.values.assign(static_cast<std::size_t>(bins) * bins * feat.channels, 0.0);

  const int height = rect.r1 - rect.r0;
  const int width = rect.c1 - rect.c0;
  for (int ch = 0; ch < feat.channels; ++ch) {
    for (int bi = 0; bi < bins; ++bi) {
      const int br0 = rect.r0 + static_cast<int>(static_cast<long long>(bi) * height / bins);
      const int br1 = rect.r0 + static_cast<int>(static_cast<long long>(bi + 1) * height / bins);
      for (int bj = 0; bj < bins; ++bj) {
        const int bc0 = rect.c0 + static_cast<int>(static_cast<long long>(bj) * width / bins);
        const int bc1 = rect.c0 + static_cast<int>(static_cast<long long>(bj + 1) * width / bins);
        const long long total = static_cast<long long>(br1 - br0) * (bc1 - bc0);
        if (total <= 0) continue;
        double sum = 0.0;
        const int rr0 = std::max(br0, 0), rr1 = std::min(br1, grid.rows);
        const int cc0 = std::max(bc0, 0), cc1 = std::min(bc1, grid.cols);
        for (int r = rr0; r < rr1; ++r)
          for (int c = cc0; c < cc1; ++c) sum += grid.at(ch, r, c);
        feat.values[(static_cast<std::size_t>(ch) * bins + bi) * bins + bj] =
            sum / static_cast<double>(total);
      }
    }
  }
  return feat;
}

std::vector<Anchor> propose(const bev::BevGrid& grid, const std::vector<Anchor>& anchors,
                            int top_k, double min_density) {
  const auto order = propose_indices(grid, anchors, top_k, min_density);
  std::vector<Anchor> out;
  out.reserve(order.size());
  for (const std::size_t i : order) out.push_back(anchors[i]);
  return out;
}

std::vector<std::size_t> propose_indices(const bev::BevGrid& grid,
                                         const std::vector<Anchor>& anchors, int top_k,
                                         double min_density) {
  if (top_k < 1) throw config_error("propose: top_k must be >= 1");
  const auto& cfg = grid.cfg;
  const int rows = grid.rows;
  const int cols = grid.cols;
  const int density_ch = grid.channels() - 1;

  // Summed-area table over the density channel; sat(r, c) covers [0,r) x [0,c).
  std::vector<double> sat(static_cast<std::size_t>(rows + 1) * (cols + 1), 0.0);
  const auto sat_at = [&](int r, int c) -> double& {
    return sat[static_cast<std::size_t>(r) * (cols + 1) + c];
  };
  for (int r = 0; r < rows; ++r) {
    double row_sum = 0.0;
    for (int c = 0; c < cols; ++c) {
      row_sum += grid.at(density_ch, r, c);
      sat_at(r + 1, c + 1) = sat_at(r, c + 1) + row_sum;
    }
  }

  std::vector<double> scores(anchors.size(), 0.0);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    CellRect rect = footprint_cells(anchors[i].box, cfg);
    rect.r0 = std::clamp(rect.r0, 0, rows);
    rect.r1 = std::clamp(rect.r1, 0, rows);
    rect.c0 = std::clamp(rect.c0, 0, cols);
    rect.c1 = std::clamp(rect.c1, 0, cols);
    if (rect.r1 <= rect.r0 || rect.c1 <= rect.c0) continue;
    scores[i] = sat_at(rect.r1, rect.c1) - sat_at(rect.r0, rect.c1) -
                sat_at(rect.r1, rect.c0) + sat_at(rect.r0, rect.c0);
  }

  std::vector<std::size_t> order;
  order.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (scores[i] >= min_density) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  if (order.size() > static_cast<std::size_t>(top_k)) order.resize(top_k);
  return order;
}

std::vector<Target> match_targets(const std::vector<Anchor>& anchors,
                                  const std::vector<Box3D>& gts, double pos_iou,
                                  double neg_iou) {
  if (!(0.0 <= neg_iou && neg_iou < pos_iou && pos_iou <= 1.0))
    throw config_error("match_targets: need 0 <= neg_iou < pos_iou <= 1");

  std::vector<Target> targets(anchors.size());
  std::vector<double> best_gt_iou(gts.size(), 0.0);
  std::vector<std::size_t> best_gt_anchor(gts.size(), 0);

  for (std::size_t a = 0; a < anchors.size(); ++a) {
    targets[a].anchor_index = a;
    const Box3D& abox = anchors[a].box;
    double best = 0.0;
    int best_g = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      // Cheap reject: footprints can't overlap beyond this center distance.
      const double dx = abox.center.x - gts[g].center.x;
      const double dy = abox.center.y - gts[g].center.y;
      const double reach = 0.5 * (std::hypot(abox.length, abox.width) +
                                  std::hypot(gts[g].length, gts[g].width));
      if (dx * dx + dy * dy > reach * reach) continue;
      const double iou = iou_bev(abox, gts[g]);
      if (iou > best) {
        best = iou;
        best_g = static_cast<int>(g);
      }
      if (iou > best_gt_iou[g]) {
        best_gt_iou[g] = iou;
        best_gt_anchor[g] = a;
      }
    }
    if (best_g >= 0 && best >= pos_iou) {
      targets[a].label = MatchLabel::vehicle;
      targets[a].gt_index = best_g;
      targets[a].offsets = encode_box(gts[best_g], anchors[a]);
    } else if (best < neg_iou) {
      targets[a].label = MatchLabel::background;
    } else {
      targets[a].label = MatchLabel::ignored;
    }
  }

  // Each ground truth claims its best anchor, so no vehicle goes untrained.
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (best_gt_iou[g] <= 0.0) continue;
    Target& t = targets[best_gt_anchor[g]];
    if (t.label != MatchLabel::vehicle) {
      t.label = MatchLabel::vehicle;
      t.gt_index = static_cast<int>(g);
      t.offsets = encode_box(gts[g], anchors[best_gt_anchor[g]]);
    }
  }
  return targets;
}

void write_detections_jsonl(const std::vector<DetectionRecord>& records,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write detections file: " + path.string());
  for (const auto& rec : records) {
    json j{{"scene_id", rec.scene_id},
           {"anchor", box_to_json(rec.anchor_box)},
           {"score", rec.score},
           {"offsets", rec.offsets}};
    if (rec.log_vars) j["log_vars"] = *rec.log_vars;
    out << j.dump() << '\n';
  }
}

std::vector<DetectionRecord> read_detections_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open detections file: " + path.string());
  std::vector<DetectionRecord> records;
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
    DetectionRecord rec;
    rec.scene_id = j.at("scene_id").get<std::string>();
    rec.anchor_box = box_from_json(j.at("anchor"));
    rec.score = j.at("score").get<double>();
    const auto& off = j.at("offsets");
    if (off.size() != 24)
      throw data_error(path.string() + ":" + std::to_string(lineno) + ": offsets must have 24 values");
    for (int i = 0; i < 24; ++i) rec.offsets[static_cast<std::size_t>(i)] = off.at(i).get<double>();
    if (j.contains("log_vars")) {
      const auto& lv = j.at("log_vars");
      if (lv.size() != 24)
        throw data_error(path.string() + ":" + std::to_string(lineno) + ": log_vars must have 24 values");
      std::array<double, 24> vals{};
      for (int i = 0; i < 24; ++i) vals[static_cast<std::size_t>(i)] = lv.at(i).get<double>();
      rec.log_vars = vals;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace blidar::proposals
