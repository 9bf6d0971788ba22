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

#include "blidar/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "blidar/error.hpp"
#include "svg.hpp"

namespace blidar::eval {

namespace {

std::string csv_num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string bin_label(double lo, double hi, bool last) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), last ? "[%.3f;%.3f]" : "[%.3f;%.3f)", lo, hi);
  return buf;
}

// Descending-score order, stable so ties keep input order.
std::vector<std::size_t> score_order(const std::vector<uncertainty::UncertaintyReport>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].veh_prob > dets[b].veh_prob;
  });
  return order;
}

struct SceneCounts {
  long tp = 0, fp = 0, fn = 0;
};

SceneCounts greedy_match_counts(const std::vector<uncertainty::UncertaintyReport>& dets,
                                const std::vector<Box3D>& gts, double threshold) {
  SceneCounts counts;
  std::vector<bool> claimed(gts.size(), false);
  for (const std::size_t di : score_order(dets)) {
    double best = 0.0;
    int best_g = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (claimed[g]) continue;
      const double iou = iou_3d(dets[di].box, gts[g]);
      if (iou >= threshold && iou > best) {
        best = iou;
        best_g = static_cast<int>(g);
      }
    }
    if (best_g >= 0) {
      claimed[static_cast<std::size_t>(best_g)] = true;
      ++counts.tp;
    } else {
      ++counts.fp;
    }
  }
  for (const bool c : claimed)
    if (!c) ++counts.fn;
  return counts;
}

std::map<std::string, const SceneGroundTruth*> gt_index(
    const std::vector<SceneGroundTruth>& gts) {
  std::map<std::string, const SceneGroundTruth*> index;
  for (const auto& g : gts) index[g.scene_id] = &g;
  return index;
}

void check_scene_ids(const std::vector<SceneDetections>& detections,
                     const std::map<std::string, const SceneGroundTruth*>& index) {
  std::vector<std::string> orphans;
  for (const auto& d : detections)
    if (!index.count(d.scene_id)) orphans.push_back(d.scene_id);
  if (!orphans.empty()) {
    std::string msg = "detections reference unknown scenes:";
    for (const auto& id : orphans) msg += " " + id;
    throw data_error(msg);
  }
}

std::optional<double> try_pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  try {
    return pearson(xs, ys);
  } catch (const numeric_error&) {
    return std::nullopt;
  }
}

}  // namespace

std::vector<uncertainty::UncertaintyReport> nms(
    const std::vector<uncertainty::UncertaintyReport>& detections, double iou_thresh) {
  std::vector<uncertainty::UncertaintyReport> kept;
  std::vector<bool> suppressed(detections.size(), false);
  const auto order = score_order(detections);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t di = order[i];
    if (suppressed[di]) continue;
    kept.push_back(detections[di]);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const std::size_t dj = order[j];
      if (suppressed[dj]) continue;
      if (iou_bev(detections[di].box, detections[dj].box) >= iou_thresh) suppressed[dj] = true;
    }
  }
  return kept;
}

std::vector<MatchedDetection> match_detections(const std::vector<SceneDetections>& detections,
                                               const std::vector<SceneGroundTruth>& gts) {
  const auto index = gt_index(gts);
  check_scene_ids(detections, index);
  std::vector<MatchedDetection> matched;
  for (const auto& scene : detections) {
    const auto& boxes = index.at(scene.scene_id)->boxes;
    for (const auto& report : scene.reports) {
      MatchedDetection m;
      m.report = report;
      m.box = report.box;
      m.distance = std::hypot(report.box.center.x, report.box.center.y);
      for (const auto& gt : boxes) {
        const double iou = iou_3d(report.box, gt);
        if (iou > m.iou) {
          m.iou = iou;
          m.best_gt = gt;
        }
      }
      matched.push_back(std::move(m));
    }
  }
  return matched;
}

std::vector<F1Row> f1_table(const std::vector<SceneDetections>& detections,
                            const std::vector<SceneGroundTruth>& gts,
                            const std::vector<double>& thresholds) {
  const auto index = gt_index(gts);
  check_scene_ids(detections, index);
  std::map<std::string, const SceneDetections*> det_index;
  for (const auto& d : detections) det_index[d.scene_id] = &d;

  std::vector<F1Row> rows;
  rows.reserve(thresholds.size());
  static const std::vector<uncertainty::UncertaintyReport> kNoDetections;
  for (const double threshold : thresholds) {
    F1Row row;
    row.threshold = threshold;
    for (const auto& g : gts) {
      const auto it = det_index.find(g.scene_id);
      const auto& dets = it == det_index.end() ? kNoDetections : it->second->reports;
      const SceneCounts c = greedy_match_counts(dets, g.boxes, threshold);
      row.tp += c.tp;
      row.fp += c.fp;
      row.fn += c.fn;
    }
    row.precision = (row.tp + row.fp) > 0
                        ? static_cast<double>(row.tp) / static_cast<double>(row.tp + row.fp)
                        : 0.0;
    row.recall = (row.tp + row.fn) > 0
                     ? static_cast<double>(row.tp) / static_cast<double>(row.tp + row.fn)
                     : 0.0;
    row.f1 = (row.precision + row.recall) > 0.0
                 ? 2.0 * row.precision * row.recall / (row.precision + row.recall)
                 : 0.0;
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> default_iou_bin_edges() {
  std::vector<double> edges;
  for (int i = 0; i <= 8; ++i) edges.push_back(static_cast<double>(i) / 8.0);
  return edges;
}

std::vector<BinStats> bin_uncertainty_by_iou(const std::vector<MatchedDetection>& matched,
                                             const std::vector<double>& bin_edges) {
  if (bin_edges.size() < 2) throw config_error("bin_uncertainty_by_iou: need >= 2 edges");
  for (std::size_t i = 1; i < bin_edges.size(); ++i)
    if (!(bin_edges[i] > bin_edges[i - 1]))
      throw config_error("bin_uncertainty_by_iou: edges must be strictly increasing");

  const std::size_t nbins = bin_edges.size() - 1;
  struct Acc {
    long count = 0;
    double se = 0, mi = 0, tv = 0, tvx = 0, tvy = 0, tvz = 0;
    long alea_count = 0;
    double sx = 0, sy = 0, sz = 0, st = 0;
  };
  std::vector<Acc> acc(nbins);

  for (const auto& m : matched) {
    int bin = -1;
    for (std::size_t b = 0; b < nbins; ++b) {
      const bool last = b + 1 == nbins;
      if (m.iou >= bin_edges[b] && (m.iou < bin_edges[b + 1] || (last && m.iou == bin_edges[b + 1]))) {
        bin = static_cast<int>(b);
        break;
      }
    }
    if (bin < 0) continue;
    Acc& a = acc[static_cast<std::size_t>(bin)];
    a.count += 1;
    a.se += m.report.se;
    a.mi += m.report.mi;
    a.tv += m.report.epistemic_tv_total;
    a.tvx += m.report.tv_x;
    a.tvy += m.report.tv_y;
    a.tvz += m.report.tv_z;
    if (m.report.aleatoric) {
      a.alea_count += 1;
      a.sx += m.report.aleatoric->sum_x;
      a.sy += m.report.aleatoric->sum_y;
      a.sz += m.report.aleatoric->sum_z;
      a.st += m.report.aleatoric->sum_x + m.report.aleatoric->sum_y + m.report.aleatoric->sum_z;
    }
  }

  std::vector<BinStats> out;
  for (std::size_t b = 0; b < nbins; ++b) {
    const Acc& a = acc[b];
    if (a.count == 0) continue;  // empty bins are absent, never zero
    BinStats s;
    s.lo = bin_edges[b];
    s.hi = bin_edges[b + 1];
    s.count = a.count;
    const double inv = 1.0 / static_cast<double>(a.count);
    s.se = a.se * inv;
    s.mi = a.mi * inv;
    s.tv_total = a.tv * inv;
    s.tv_x = a.tvx * inv;
    s.tv_y = a.tvy * inv;
    s.tv_z = a.tvz * inv;
    if (a.alea_count > 0) {
      const double ainv = 1.0 / static_cast<double>(a.alea_count);
      s.sigma2_x = a.sx * ainv;
      s.sigma2_y = a.sy * ainv;
      s.sigma2_z = a.sz * ainv;
      s.sigma2_total = a.st * ainv;
    }
    out.push_back(s);
  }
  return out;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw config_error("pearson: length mismatch");
  if (xs.size() < 2) throw numeric_error("pearson: need at least two samples");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0)
    throw numeric_error("pearson: undefined correlation (zero variance series)");
  return sxy / std::sqrt(sxx * syy);
}

CornerOcclusionStats corner_occlusion_stats(const std::vector<MatchedDetection>& matched) {
  CornerOcclusionStats stats;
  long above = 0;
  for (const auto& m : matched) {
    if (!m.report.aleatoric) continue;
    stats.pairs.emplace_back(m.report.aleatoric->facing_sum, m.report.aleatoric->occluded_sum);
    if (m.report.aleatoric->occluded_sum > m.report.aleatoric->facing_sum) ++above;
  }
  if (stats.pairs.empty())
    throw numeric_error("corner_occlusion_stats: no detections carry aleatoric variances");
  stats.fraction = static_cast<double>(above) / static_cast<double>(stats.pairs.size());
  return stats;
}

EvalSummary summarize(const std::vector<SceneDetections>& detections,
                      const std::vector<SceneGroundTruth>& gts) {
  const auto index = gt_index(gts);
  check_scene_ids(detections, index);

  // Probability gate, then duplicate suppression (idempotent on inputs that
  // were already suppressed at detection time).
  std::vector<SceneDetections> gated;
  for (const auto& scene : detections) {
    SceneDetections g;
    g.scene_id = scene.scene_id;
    for (const auto& r : scene.reports)
      if (r.detected) g.reports.push_back(r);
    g.reports = nms(g.reports);
    gated.push_back(std::move(g));
  }

  EvalSummary summary;
  for (const auto& g : gts) summary.n_ground_truth += static_cast<long>(g.boxes.size());
  for (const auto& d : gated) summary.n_detections += static_cast<long>(d.reports.size());

  summary.f1 = f1_table(gated, gts);
  const auto matched = match_detections(gated, gts);
  summary.iou_bins = bin_uncertainty_by_iou(matched, default_iou_bin_edges());

  std::vector<double> dist, tvx, tvy, tvz, tvall;
  std::vector<double> adist, sx, sy, sz, sall;
  for (const auto& m : matched) {
    dist.push_back(m.distance);
    tvx.push_back(m.report.tv_x);
    tvy.push_back(m.report.tv_y);
    tvz.push_back(m.report.tv_z);
    tvall.push_back(m.report.epistemic_tv_total);
    if (m.report.aleatoric) {
      adist.push_back(m.distance);
      sx.push_back(m.report.aleatoric->sum_x);
      sy.push_back(m.report.aleatoric->sum_y);
      sz.push_back(m.report.aleatoric->sum_z);
      sall.push_back(m.report.aleatoric->sum_x + m.report.aleatoric->sum_y +
                     m.report.aleatoric->sum_z);
    }
  }
  summary.pcc_epistemic.x = try_pearson(dist, tvx);
  summary.pcc_epistemic.y = try_pearson(dist, tvy);
  summary.pcc_epistemic.z = try_pearson(dist, tvz);
  summary.pcc_epistemic.all = try_pearson(dist, tvall);
  summary.pcc_aleatoric.x = try_pearson(adist, sx);
  summary.pcc_aleatoric.y = try_pearson(adist, sy);
  summary.pcc_aleatoric.z = try_pearson(adist, sz);
  summary.pcc_aleatoric.all = try_pearson(adist, sall);

  std::vector<MatchedDetection> true_positives;
  for (const auto& m : matched)
    if (m.iou >= kTruePositiveIou && m.report.aleatoric) true_positives.push_back(m);
  if (!true_positives.empty())
    summary.occluded_gt_facing_fraction = corner_occlusion_stats(true_positives).fraction;

  return summary;
}

void write_summary_csv(const EvalSummary& summary, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write summary: " + path.string());
  out << "metric,key,value\n";
  out << "n_detections,," << summary.n_detections << '\n';
  out << "n_ground_truth,," << summary.n_ground_truth << '\n';
  for (const auto& row : summary.f1) {
    const std::string key = csv_num(row.threshold);
    out << "precision," << key << ',' << csv_num(row.precision) << '\n';
    out << "recall," << key << ',' << csv_num(row.recall) << '\n';
    out << "f1," << key << ',' << csv_num(row.f1) << '\n';
  }
  for (std::size_t i = 0; i < summary.iou_bins.size(); ++i) {
    const auto& b = summary.iou_bins[i];
    const std::string key = bin_label(b.lo, b.hi, b.hi >= 1.0);
    out << "bin_count," << key << ',' << b.count << '\n';
    out << "se_mean," << key << ',' << csv_num(b.se) << '\n';
    out << "mi_mean," << key << ',' << csv_num(b.mi) << '\n';
    out << "tv_total_mean," << key << ',' << csv_num(b.tv_total) << '\n';
    out << "tv_x_mean," << key << ',' << csv_num(b.tv_x) << '\n';
    out << "tv_y_mean," << key << ',' << csv_num(b.tv_y) << '\n';
    out << "tv_z_mean," << key << ',' << csv_num(b.tv_z) << '\n';
    if (b.sigma2_total) {
      out << "sigma2_x_mean," << key << ',' << csv_num(*b.sigma2_x) << '\n';
      out << "sigma2_y_mean," << key << ',' << csv_num(*b.sigma2_y) << '\n';
      out << "sigma2_z_mean," << key << ',' << csv_num(*b.sigma2_z) << '\n';
      out << "sigma2_total_mean," << key << ',' << csv_num(*b.sigma2_total) << '\n';
    }
  }
  const auto pcc_cell = [](const std::optional<double>& v) {
    return v ? csv_num(*v) : std::string("n/a");
  };
  out << "pcc_epistemic,x," << pcc_cell(summary.pcc_epistemic.x) << '\n';
  out << "pcc_epistemic,y," << pcc_cell(summary.pcc_epistemic.y) << '\n';
  out << "pcc_epistemic,z," << pcc_cell(summary.pcc_epistemic.z) << '\n';
  out << "pcc_epistemic,all," << pcc_cell(summary.pcc_epistemic.all) << '\n';
  out << "pcc_aleatoric,x," << pcc_cell(summary.pcc_aleatoric.x) << '\n';
  out << "pcc_aleatoric,y," << pcc_cell(summary.pcc_aleatoric.y) << '\n';
  out << "pcc_aleatoric,z," << pcc_cell(summary.pcc_aleatoric.z) << '\n';
  out << "pcc_aleatoric,all," << pcc_cell(summary.pcc_aleatoric.all) << '\n';
  out << "occluded_gt_facing_fraction,,"
      << (summary.occluded_gt_facing_fraction ? csv_num(*summary.occluded_gt_facing_fraction)
                                              : std::string("n/a"))
      << '\n';
}

void write_plots(const EvalSummary& summary, const std::vector<MatchedDetection>& matched,
                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  svg::Series f1s{"F1", {}, {}};
  for (const auto& row : summary.f1) {
    f1s.xs.push_back(row.threshold);
    f1s.ys.push_back(row.f1);
  }
  svg::write_line_chart(dir / "f1_vs_iou.svg", "Detection F1 vs IoU threshold", "IoU threshold",
                        "F1", {f1s});

  svg::Series se{"SE", {}, {}}, mi{"MI", {}, {}}, tv{"TV", {}, {}}, s2{"sigma2", {}, {}};
  for (const auto& b : summary.iou_bins) {
    const double mid = 0.5 * (b.lo + b.hi);
    se.xs.push_back(mid);
    se.ys.push_back(b.se);
    mi.xs.push_back(mid);
    mi.ys.push_back(b.mi);
    tv.xs.push_back(mid);
    tv.ys.push_back(b.tv_total);
    if (b.sigma2_total) {
      s2.xs.push_back(mid);
      s2.ys.push_back(*b.sigma2_total);
    }
  }
  std::vector<svg::Series> bin_series{se, mi, tv};
  if (!s2.xs.empty()) bin_series.push_back(s2);
  svg::write_line_chart(dir / "uncertainty_vs_iou.svg", "Mean uncertainty per IoU bin",
                        "IoU bin center", "uncertainty", bin_series);

  svg::Series tvd{"epistemic TV", {}, {}}, s2d{"aleatoric sigma2", {}, {}};
  for (const auto& m : matched) {
    tvd.xs.push_back(m.distance);
    tvd.ys.push_back(m.report.epistemic_tv_total);
    if (m.report.aleatoric) {
      s2d.xs.push_back(m.distance);
      s2d.ys.push_back(m.report.aleatoric->sum_x + m.report.aleatoric->sum_y +
                       m.report.aleatoric->sum_z);
    }
  }
  std::vector<svg::Series> dist_series{tvd};
  if (!s2d.xs.empty()) dist_series.push_back(s2d);
  svg::write_scatter_chart(dir / "uncertainty_vs_distance.svg", "Uncertainty vs distance",
                           "distance (m)", "uncertainty", dist_series);
}

}  // namespace blidar::eval
