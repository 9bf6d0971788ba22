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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "blidar/nnet.hpp"
#include "blidar/proposals.hpp"

namespace blidar::uncertainty {

/// Number of stochastic forward passes used by default.
inline constexpr int kDefaultNumPasses = 40;

/// Outputs of N dropout forward passes for one region of interest. Boxes are
/// already decoded to the sensor frame (24 corner coordinates in the
/// [x0..x7; y0..y7; z0..z7] layout).
struct McSamples {
  std::vector<double> scores;                          // vehicle softmax per pass
  std::vector<std::array<double, 24>> boxes;           // sensor-frame corners
  std::optional<std::vector<std::array<double, 24>>> log_vars;

  int n() const { return static_cast<int>(scores.size()); }
};

/// Runs n_passes dropout forward passes (dropout_p may be 0, which makes
/// every pass deterministic) and decodes each regression to the sensor
/// frame through the anchor.
McSamples mc_sample(const nnet::Network& net, std::span<const double> feature,
                    const proposals::Anchor& anchor, int n_passes, double dropout_p, Rng& rng);

/// Mean softmax score over the passes.
double vehicle_prob(const McSamples& samples);

double binary_entropy(double p);

/// Entropy of the mean vehicle probability, natural log, in [0, ln 2].
double shannon_entropy(const McSamples& samples);

/// H(mean) minus mean per-pass entropy, clipped below at 0.
double mutual_information(const McSamples& samples);

/// Componentwise mean of the decoded boxes.
std::array<double, 24> mean_box(const McSamples& samples);

struct TotalVariance {
  double total = 0.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// Trace of the (biased, 1/N) sample covariance of the decoded boxes, split
/// by axis: total = x + y + z.
TotalVariance epistemic_total_variance(const McSamples& samples);

struct AleatoricVariance {
  std::array<double, 24> sigma2{};  // exp of the per-dimension mean log-variance
  double sum_x = 0.0, sum_y = 0.0, sum_z = 0.0;
  // Mean-box corners ranked by distance to the sensor: the nearest four form
  // the facing group, the farthest four the occluded group (ties to the
  // lower corner index). Group sums add sigma2 over each member corner's
  // three coordinates.
  std::array<int, 4> facing_corners{};
  std::array<int, 4> occluded_corners{};
  double facing_sum = 0.0;
  double occluded_sum = 0.0;
};

/// Throws numeric_error when the samples carry no log-variances.
AleatoricVariance aleatoric_variance(const McSamples& samples);

struct UncertaintyReport {
  std::string scene_id;
  double veh_prob = 0.0;
  double se = 0.0;
  double mi = 0.0;
  std::array<double, 24> mean_box{};
  double epistemic_tv_total = 0.0;
  double tv_x = 0.0, tv_y = 0.0, tv_z = 0.0;
  std::optional<AleatoricVariance> aleatoric;
  bool detected = false;  // veh_prob > 0.5
  Box3D box;              // fitted from the mean corners
  int n_passes = 0;
};

UncertaintyReport build_report(const McSamples& samples, const std::string& scene_id);

/// JSON Lines report stream: one header object, then one report per line.
struct ReportHeader {
  std::string mode;
  int n_passes = 0;
  double dropout = 0.0;
  std::uint64_t seed = 0;
};

void write_reports_jsonl(const ReportHeader& header,
                         const std::vector<UncertaintyReport>& reports,
                         const std::filesystem::path& path);

struct ReportFile {
  ReportHeader header;
  std::vector<UncertaintyReport> reports;
};

ReportFile read_reports_jsonl(const std::filesystem::path& path);

}  // namespace blidar::uncertainty
