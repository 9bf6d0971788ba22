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

#include "blidar/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>

#include "blidar/error.hpp"

namespace blidar {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_double(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw config_error(where + ": cannot parse number '" + text + "'");
  }
}

long long parse_int(const std::string& text, const std::string& where) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw config_error(where + ": cannot parse integer '" + text + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& text, const std::string& where) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw config_error(where + ": cannot parse unsigned integer '" + text + "'");
  return v;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    const auto add_d = [&t](const std::string& key, double& (*get)(RunConfig&)) {
      t[key] = [get](RunConfig& c, const std::string& v, const std::string& w) {
        get(c) = parse_double(v, w);
      };
    };
    const auto add_i = [&t](const std::string& key, int& (*get)(RunConfig&)) {
      t[key] = [get](RunConfig& c, const std::string& v, const std::string& w) {
        get(c) = static_cast<int>(parse_int(v, w));
      };
    };
#define BLIDAR_D(key, expr) \
  add_d(key, +[](RunConfig& c) -> double& { return expr; })
#define BLIDAR_I(key, expr) \
  add_i(key, +[](RunConfig& c) -> int& { return expr; })

    t["run.mode"] = [](RunConfig& c, const std::string& v, const std::string&) {
      c.mode = mode_from_string(v);
    };
    t["run.seed"] = [](RunConfig& c, const std::string& v, const std::string& w) {
      c.seed = parse_u64(v, w);
    };

    BLIDAR_I("synth.train_scenes", c.synth.train_scenes);
    BLIDAR_I("synth.test_scenes", c.synth.test_scenes);
    BLIDAR_I("synth.min_vehicles", c.synth.min_vehicles);
    BLIDAR_I("synth.max_vehicles", c.synth.max_vehicles);
    BLIDAR_D("synth.noise_sigma", c.synth.noise_sigma);
    BLIDAR_D("synth.noisy_fraction", c.synth.noisy_fraction);
    BLIDAR_D("synth.noisy_sigma", c.synth.noisy_sigma);
    BLIDAR_D("synth.ground_density", c.synth.ground_density);
    BLIDAR_D("synth.distance_min", c.synth.distance_min);
    BLIDAR_D("synth.distance_max", c.synth.distance_max);
    BLIDAR_D("synth.density_min", c.synth.density_min);
    BLIDAR_D("synth.density_max", c.synth.density_max);
    BLIDAR_D("synth.occlusion_pair_prob", c.synth.occlusion_pair_prob);

    BLIDAR_D("bev.x_min", c.bev.x_min);
    BLIDAR_D("bev.x_max", c.bev.x_max);
    BLIDAR_D("bev.y_min", c.bev.y_min);
    BLIDAR_D("bev.y_max", c.bev.y_max);
    BLIDAR_D("bev.z_min", c.bev.z_min);
    BLIDAR_D("bev.z_max", c.bev.z_max);
    BLIDAR_D("bev.resolution", c.bev.resolution);
    BLIDAR_I("bev.num_slices", c.bev.num_slices);

    BLIDAR_I("proposals.stride", c.proposals.stride);
    BLIDAR_I("proposals.pool_bins", c.proposals.pool_bins);
    BLIDAR_I("proposals.top_k", c.proposals.top_k);
    BLIDAR_D("proposals.min_density", c.proposals.min_density);
    BLIDAR_D("proposals.pos_iou", c.proposals.pos_iou);
    BLIDAR_D("proposals.neg_iou", c.proposals.neg_iou);

    BLIDAR_I("train.hidden_width", c.hidden_width);
    BLIDAR_I("train.hidden_layers", c.hidden_layers);
    BLIDAR_D("train.dropout", c.train.dropout_p);
    BLIDAR_D("train.lr", c.train.lr_main);
    BLIDAR_D("train.lr_fine", c.train.lr_fine);
    BLIDAR_I("train.steps", c.train.steps_main);
    BLIDAR_I("train.steps_fine", c.train.steps_fine);
    BLIDAR_I("train.batch_size", c.train.batch_size);
    BLIDAR_D("train.weight_decay", c.train.weight_decay);
    BLIDAR_D("train.gamma_cls", c.train.gamma_cls);
    BLIDAR_D("train.gamma_reg", c.train.gamma_reg);

    BLIDAR_I("detect.n_passes", c.detect.n_passes);
    BLIDAR_D("detect.nms_iou", c.detect.nms_iou);

#undef BLIDAR_D
#undef BLIDAR_I
    return t;
  }();
  return table;
}

}  // namespace

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::non_bayesian: return "non_bayesian";
    case Mode::epistemic: return "epistemic";
    case Mode::aleatoric: return "aleatoric";
    case Mode::epistemic_aleatoric: return "epistemic_aleatoric";
  }
  return "unknown";
}

Mode mode_from_string(const std::string& name) {
  if (name == "non_bayesian") return Mode::non_bayesian;
  if (name == "epistemic") return Mode::epistemic;
  if (name == "aleatoric") return Mode::aleatoric;
  if (name == "epistemic_aleatoric") return Mode::epistemic_aleatoric;
  throw config_error("unknown mode '" + name +
                     "' (expected non_bayesian, epistemic, aleatoric or epistemic_aleatoric)");
}

void RunConfig::validate() const {
  bev.validate();
  train.validate();
  if (synth.train_scenes < 0 || synth.test_scenes < 0)
    throw config_error("synth: negative scene counts");
  if (synth.min_vehicles < 0 || synth.max_vehicles < synth.min_vehicles)
    throw config_error("synth: bad vehicle count range");
  if (!(synth.noise_sigma >= 0.0) || !(synth.noisy_sigma >= 0.0))
    throw config_error("synth: noise sigmas must be >= 0");
  if (!(synth.noisy_fraction >= 0.0 && synth.noisy_fraction <= 1.0))
    throw config_error("synth: noisy_fraction must be in [0, 1]");
  if (!(synth.distance_min > 0.0 && synth.distance_max > synth.distance_min))
    throw config_error("synth: bad distance range");
  if (!(synth.density_min > 0.0 && synth.density_max >= synth.density_min))
    throw config_error("synth: bad density range");
  if (proposals.stride < 1) throw config_error("proposals: stride must be >= 1");
  if (proposals.pool_bins < 1) throw config_error("proposals: pool_bins must be >= 1");
  if (proposals.top_k < 1) throw config_error("proposals: top_k must be >= 1");
  if (!(proposals.neg_iou >= 0.0 && proposals.neg_iou < proposals.pos_iou &&
        proposals.pos_iou <= 1.0))
    throw config_error("proposals: need 0 <= neg_iou < pos_iou <= 1");
  if (hidden_width < 1 || hidden_layers < 1)
    throw config_error("train: hidden architecture must be positive");
  if (detect.n_passes < 1) throw config_error("detect: n_passes must be >= 1");
  if (!(detect.nms_iou > 0.0 && detect.nms_iou <= 1.0))
    throw config_error("detect: nms_iou must be in (0, 1]");
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path.string());
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    const std::string text = trim(line);
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw config_error(where + ": malformed section header");
      section = trim(text.substr(1, text.size() - 2));
      if (section.empty()) throw config_error(where + ": empty section name");
      continue;
    }
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos) throw config_error(where + ": expected key = value");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw config_error(where + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    const auto it = setters().find(full);
    if (it == setters().end()) throw config_error(where + ": unknown setting '" + full + "'");
    it->second(cfg, value, where);
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  RunConfig cfg;
  apply_config_file(cfg, path);
  cfg.validate();
  return cfg;
}

}  // namespace blidar
