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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blidar/rng.hpp"

namespace blidar::nnet {

inline constexpr int kNumClasses = 2;
inline constexpr int kRegDim = 24;
inline constexpr double kProbClamp = 1e-7;     // floor on probabilities under log
inline constexpr double kLogVarClamp = 10.0;   // |lambda| cap inside exp(-lambda)
inline constexpr double kLogVarBiasInit = -3.0;

struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;  // row-major

  static Mat zeros(int r, int c) { return {r, c, std::vector<double>(static_cast<std::size_t>(r) * c, 0.0)}; }
  double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
};

struct LinearLayer {
  Mat W;
  std::vector<double> b;
};

/// Fully connected trunk with ReLU + dropout after every hidden layer, and
/// three linear heads: 2 class logits, 24 corner offsets and (optionally)
/// 24 log-variances. Parameters are doubles end to end.
struct Network {
  int input_dim = 0;
  std::vector<int> hidden_sizes;
  bool aleatoric_head = false;
  std::vector<LinearLayer> hidden;
  LinearLayer cls_head;
  LinearLayer reg_head;
  LinearLayer logvar_head;  // unused unless aleatoric_head
};

/// He-uniform weights, zero biases; the log-variance head bias starts at
/// kLogVarBiasInit so the variance penalty does not dominate early training.
Network make_network(int input_dim, const std::vector<int>& hidden_sizes, bool aleatoric_head,
                     Rng& rng);

/// Same-shaped network with all parameters zero (gradient / moment buffers).
Network zeros_like(const Network& net);

/// Visits every parameter vector as (name, vector). Order is the canonical
/// serialization order.
template <typename F>
void visit_params(Network& net, F&& f) {
  for (std::size_t i = 0; i < net.hidden.size(); ++i) {
    f("hidden" + std::to_string(i) + ".W", net.hidden[i].W.a);
    f("hidden" + std::to_string(i) + ".b", net.hidden[i].b);
  }
  f("cls.W", net.cls_head.W.a);
  f("cls.b", net.cls_head.b);
  f("reg.W", net.reg_head.W.a);
  f("reg.b", net.reg_head.b);
  if (net.aleatoric_head) {
    f("logvar.W", net.logvar_head.W.a);
    f("logvar.b", net.logvar_head.b);
  }
}

template <typename F>
void visit_params(const Network& net, F&& f) {
  visit_params(const_cast<Network&>(net), [&](const std::string& name, std::vector<double>& v) {
    f(name, static_cast<const std::vector<double>&>(v));
  });
}

enum class Mode { train, mc_dropout, deterministic };

struct HeadOutput {
  std::array<double, kNumClasses> class_probs{};
  std::array<double, kRegDim> offsets{};
  std::optional<std::array<double, kRegDim>> log_vars;
};

/// Per-hidden-layer dropout scale factors: 0 for dropped units, 1/(1-p) for
/// survivors (inverted dropout, so deterministic inference needs no rescale).
using SampleMasks = std::vector<std::vector<double>>;

SampleMasks sample_dropout_masks(const Network& net, double dropout_p, Rng& rng);

/// One forward pass. train and mc_dropout sample a fresh dropout mask from
/// rng; deterministic ignores dropout_p and rng. Throws numeric_error naming
/// the layer if an activation goes non-finite.
HeadOutput forward(const Network& net, std::span<const double> feature, Mode mode,
                   double dropout_p, Rng& rng);

/// Forward pass under externally fixed masks (nullptr = no dropout).
HeadOutput forward_masked(const Network& net, std::span<const double> feature,
                          const SampleMasks* masks);

/// Cross-entropy -ln p(true label), probabilities clamped to
/// [kProbClamp, 1-kProbClamp].
double loss_cls(const std::array<double, kNumClasses>& probs, int label);

/// Sum of per-dimension smooth-L1 penalties of v - v_gt.
double loss_reg_smooth_l1(const std::array<double, kRegDim>& v,
                          const std::array<double, kRegDim>& v_gt);

/// Variance-attenuated regression loss, elementwise over the 24 dimensions:
///   sum_d [ 1/2 exp(-lambda_d) rho(v_d - vgt_d) + 1/2 lambda_d ]
/// with rho the smooth-L1 penalty and lambda clamped to +-kLogVarClamp
/// inside the exponential. At lambda = 0 this equals half of
/// loss_reg_smooth_l1 exactly.
double loss_reg_attenuated(const std::array<double, kRegDim>& v,
                           const std::array<double, kRegDim>& v_gt,
                           const std::array<double, kRegDim>& log_vars);

/// One training example: pooled ROI feature, class label (1 = vehicle) and
/// the regression target for positives.
struct Sample {
  std::vector<double> feature;
  int label = 0;
  std::optional<std::array<double, kRegDim>> target;
};

struct TrainConfig {
  double dropout_p = 0.5;
  double lr_main = 1e-4;
  double lr_fine = 1e-5;
  int steps_main = 2000;
  int steps_fine = 500;
  int batch_size = 32;
  double weight_decay = 1e-4;
  double gamma_cls = 1.0;  // gamma_3
  double gamma_reg = 0.05; // gamma_4
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  double decay = 0.0;
};

/// Batch objective: gamma_cls * mean classification loss over all samples
/// + gamma_reg * mean regression loss over positive samples (0 with no
/// positives) + 1/2 * weight_decay * sum of squared weights. The regression
/// term is attenuated when the network has a log-variance head, smooth-L1
/// otherwise. `masks` must hold one SampleMasks per batch entry.
LossBreakdown batch_loss(const Network& net, std::span<const Sample* const> batch,
                         const std::vector<SampleMasks>& masks, const TrainConfig& cfg);

/// Same objective with exact reverse-mode gradients accumulated into
/// `grads` (shaped by zeros_like).
LossBreakdown batch_loss_and_grads(const Network& net, std::span<const Sample* const> batch,
                                   const std::vector<SampleMasks>& masks,
                                   const TrainConfig& cfg, Network& grads);

struct AdamState {
  Network m;
  Network v;
  long long step = 0;
};

AdamState make_adam_state(const Network& net);

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

void adam_step(Network& net, const Network& grads, AdamState& state, double lr);

/// Samples dropout masks, runs the batch, checks gradients for finiteness
/// (throwing numeric_error with the parameter name otherwise) and applies
/// one Adam update. Returns the pre-update loss.
LossBreakdown backward_and_step(Network& net, std::span<const Sample* const> batch,
                                const TrainConfig& cfg, AdamState& state, double lr, Rng& rng);

/// "BLNN" v1 container: architecture table, raw little-endian f64 parameter
/// blocks, optional Adam state. Round-trips exactly.
void save_model(const Network& net, const std::filesystem::path& path,
                const AdamState* adam = nullptr);

struct LoadedModel {
  Network net;
  std::optional<AdamState> adam;
};

LoadedModel load_model(const std::filesystem::path& path);

}  // namespace blidar::nnet
