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

#include "blidar/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "blidar/error.hpp"
#include "json.hpp"

namespace blidar::uncertainty {

namespace {

using json = nlohmann::ordered_json;

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

std::array<double, 24> array24_from_json(const json& j) {
  if (j.size() != 24) throw data_error("reports: expected 24-value array");
  std::array<double, 24> out{};
  for (int i = 0; i < 24; ++i) out[static_cast<std::size_t>(i)] = j.at(i).get<double>();
  return out;
}

}  // namespace

McSamples mc_sample(const nnet::Network& net, std::span<const double> feature,
                    const proposals::Anchor& anchor, int n_passes, double dropout_p, Rng& rng) {
  if (n_passes < 1) throw config_error("mc_sample: need at least one pass");
  McSamples samples;
  samples.scores.reserve(static_cast<std::size_t>(n_passes));
  samples.boxes.reserve(static_cast<std::size_t>(n_passes));
  if (net.aleatoric_head) samples.log_vars.emplace();
  for (int i = 0; i < n_passes; ++i) {
    const nnet::HeadOutput out = nnet::forward(net, feature, nnet::Mode::mc_dropout, dropout_p, rng);
    samples.scores.push_back(out.class_probs[1]);
    const proposals::DecodedBox decoded = proposals::decode_box(out.offsets, anchor);
    std::array<double, 24> corners{};
    for (int k = 0; k < 8; ++k) {
      corners[static_cast<std::size_t>(k)] = decoded.corners[static_cast<std::size_t>(k)].x;
      corners[static_cast<std::size_t>(8 + k)] = decoded.corners[static_cast<std::size_t>(k)].y;
      corners[static_cast<std::size_t>(16 + k)] = decoded.corners[static_cast<std::size_t>(k)].z;
    }
    samples.boxes.push_back(corners);
    if (samples.log_vars) samples.log_vars->push_back(*out.log_vars);
  }
  return samples;
}

double vehicle_prob(const McSamples& samples) {
  if (samples.scores.empty()) throw config_error("vehicle_prob: empty sample set");
  double acc = 0.0;
  for (const double s : samples.scores) acc += s;
  return acc / static_cast<double>(samples.scores.size());
}

double binary_entropy(double p) {
  const double q = std::clamp(p, nnet::kProbClamp, 1.0 - nnet::kProbClamp);
  return -q * std::log(q) - (1.0 - q) * std::log(1.0 - q);
}

double shannon_entropy(const McSamples& samples) { return binary_entropy(vehicle_prob(samples)); }

double mutual_information(const McSamples& samples) {
  const double se = shannon_entropy(samples);
  double mean_h = 0.0;
  for (const double s : samples.scores) mean_h += binary_entropy(s);
  mean_h /= static_cast<double>(samples.scores.size());
  return std::max(0.0, se - mean_h);
}

std::array<double, 24> mean_box(const McSamples& samples) {
  if (samples.boxes.empty()) throw config_error("mean_box: empty sample set");
  std::array<double, 24> mean{};
  for (const auto& b : samples.boxes)
    for (int d = 0; d < 24; ++d) mean[static_cast<std::size_t>(d)] += b[static_cast<std::size_t>(d)];
  const double inv = 1.0 / static_cast<double>(samples.boxes.size());
  for (double& m : mean) m *= inv;
  return mean;
}

TotalVariance epistemic_total_variance(const McSamples& samples) {
  const auto mean = mean_box(samples);
  const double inv = 1.0 / static_cast<double>(samples.boxes.size());
  TotalVariance tv;
  for (int d = 0; d < 24; ++d) {
    double acc = 0.0;
    for (const auto& b : samples.boxes) {
      const double r = b[static_cast<std::size_t>(d)] - mean[static_cast<std::size_t>(d)];
      acc += r * r;
    }
    const double var = acc * inv;
    if (d < 8)
      tv.x += var;
    else if (d < 16)
      tv.y += var;
    else
      tv.z += var;
  }
  tv.total = tv.x + tv.y + tv.z;
  return tv;
}

AleatoricVariance aleatoric_variance(const McSamples& samples) {
  if (!samples.log_vars)
    throw numeric_error("aleatoric_variance: samples carry no log-variances");
  if (samples.log_vars->empty()) throw config_error("aleatoric_variance: empty sample set");

  AleatoricVariance out;
  const double inv = 1.0 / static_cast<double>(samples.log_vars->size());
  for (int d = 0; d < 24; ++d) {
    double mean_lambda = 0.0;
    for (const auto& lv : *samples.log_vars) mean_lambda += lv[static_cast<std::size_t>(d)];
    out.sigma2[static_cast<std::size_t>(d)] = std::exp(mean_lambda * inv);
  }
  for (int k = 0; k < 8; ++k) {
    out.sum_x += out.sigma2[static_cast<std::size_t>(k)];
    out.sum_y += out.sigma2[static_cast<std::size_t>(8 + k)];
    out.sum_z += out.sigma2[static_cast<std::size_t>(16 + k)];
  }

  // Rank the mean-box corners by distance to the sensor origin.
  const auto mean = mean_box(samples);
  std::array<int, 8> order{};
  std::iota(order.begin(), order.end(), 0);
  const auto dist2 = [&](int k) {
    const double x = mean[static_cast<std::size_t>(k)];
    const double y = mean[static_cast<std::size_t>(8 + k)];
    const double z = mean[static_cast<std::size_t>(16 + k)];
    return x * x + y * y + z * z;
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dist2(a) < dist2(b); });
  const auto group_sum = [&](int from) {
    double acc = 0.0;
    for (int i = from; i < from + 4; ++i) {
      const int k = order[static_cast<std::size_t>(i)];
      acc += out.sigma2[static_cast<std::size_t>(k)] + out.sigma2[static_cast<std::size_t>(8 + k)] +
             out.sigma2[static_cast<std::size_t>(16 + k)];
    }
    return acc;
  };
  for (int i = 0; i < 4; ++i) {
    out.facing_corners[static_cast<std::size_t>(i)] = order[static_cast<std::size_t>(i)];
    out.occluded_corners[static_cast<std::size_t>(i)] = order[static_cast<std::size_t>(4 + i)];
  }
  out.facing_sum = group_sum(0);
  out.occluded_sum = group_sum(4);
  return out;
}

UncertaintyReport build_report(const McSamples& samples, const std::string& scene_id) {
  UncertaintyReport r;
  r.scene_id = scene_id;
  r.veh_prob = vehicle_prob(samples);
  r.se = shannon_entropy(samples);
  r.mi = mutual_information(samples);
  r.mean_box = mean_box(samples);
  const TotalVariance tv = epistemic_total_variance(samples);
  r.epistemic_tv_total = tv.total;
  r.tv_x = tv.x;
  r.tv_y = tv.y;
  r.tv_z = tv.z;
  if (samples.log_vars) r.aleatoric = aleatoric_variance(samples);
  r.detected = r.veh_prob > 0.5;
  r.n_passes = samples.n();

  std::array<Vec3, 8> corners;
  for (int k = 0; k < 8; ++k) {
    corners[static_cast<std::size_t>(k)] = {r.mean_box[static_cast<std::size_t>(k)],
                                            r.mean_box[static_cast<std::size_t>(8 + k)],
                                            r.mean_box[static_cast<std::size_t>(16 + k)]};
  }
  r.box = proposals::fit_box_to_corners(corners);
  return r;
}

void write_reports_jsonl(const ReportHeader& header,
                         const std::vector<UncertaintyReport>& reports,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write reports file: " + path.string());
  json h{{"type", "header"},
         {"mode", header.mode},
         {"n_passes", header.n_passes},
         {"dropout", header.dropout},
         {"seed", header.seed}};
  out << h.dump() << '\n';
  for (const auto& r : reports) {
    json j{{"type", "detection"},
           {"scene_id", r.scene_id},
           {"veh_prob", r.veh_prob},
           {"se", r.se},
           {"mi", r.mi},
           {"mean_box", r.mean_box},
           {"epistemic_tv_total", r.epistemic_tv_total},
           {"tv_x", r.tv_x},
           {"tv_y", r.tv_y},
           {"tv_z", r.tv_z},
           {"detected", r.detected},
           {"box", box_to_json(r.box)},
           {"n_passes", r.n_passes}};
    if (r.aleatoric) {
      j["sigma2"] = r.aleatoric->sigma2;
      j["sigma2_x"] = r.aleatoric->sum_x;
      j["sigma2_y"] = r.aleatoric->sum_y;
      j["sigma2_z"] = r.aleatoric->sum_z;
      j["sigma2_facing"] = r.aleatoric->facing_sum;
      j["sigma2_occluded"] = r.aleatoric->occluded_sum;
      j["facing_corners"] = r.aleatoric->facing_corners;
      j["occluded_corners"] = r.aleatoric->occluded_corners;
    }
    out << j.dump() << '\n';
  }
}

ReportFile read_reports_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open reports file: " + path.string());
  ReportFile file;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw data_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const std::string type = j.value("type", "detection");
    if (type == "header") {
      file.header.mode = j.value("mode", "");
      file.header.n_passes = j.value("n_passes", 0);
      file.header.dropout = j.value("dropout", 0.0);
      file.header.seed = j.value("seed", std::uint64_t{0});
      have_header = true;
      continue;
    }
    UncertaintyReport r;
    r.scene_id = j.at("scene_id").get<std::string>();
    r.veh_prob = j.at("veh_prob").get<double>();
    r.se = j.at("se").get<double>();
    r.mi = j.at("mi").get<double>();
    r.mean_box = array24_from_json(j.at("mean_box"));
    r.epistemic_tv_total = j.at("epistemic_tv_total").get<double>();
    r.tv_x = j.at("tv_x").get<double>();
    r.tv_y = j.at("tv_y").get<double>();
    r.tv_z = j.at("tv_z").get<double>();
    r.detected = j.at("detected").get<bool>();
    r.box = box_from_json(j.at("box"));
    r.n_passes = j.at("n_passes").get<int>();
    if (j.contains("sigma2")) {
      AleatoricVariance av;
      av.sigma2 = array24_from_json(j.at("sigma2"));
      av.sum_x = j.at("sigma2_x").get<double>();
      av.sum_y = j.at("sigma2_y").get<double>();
      av.sum_z = j.at("sigma2_z").get<double>();
      av.facing_sum = j.at("sigma2_facing").get<double>();
      av.occluded_sum = j.at("sigma2_occluded").get<double>();
      for (int i = 0; i < 4; ++i) {
        av.facing_corners[static_cast<std::size_t>(i)] = j.at("facing_corners").at(i).get<int>();
        av.occluded_corners[static_cast<std::size_t>(i)] = j.at("occluded_corners").at(i).get<int>();
      }
      r.aleatoric = av;
    }
    file.reports.push_back(std::move(r));
  }
  if (!have_header && !file.reports.empty())
    throw data_error(path.string() + ": missing header line");
  return file;
}

}  // namespace blidar::uncertainty
