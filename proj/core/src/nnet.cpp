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

#include "blidar/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "blidar/error.hpp"
#include "binary_io.hpp"

namespace blidar::nnet {

namespace {

constexpr char kMagic[4] = {'B', 'L', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

void matvec(const Mat& W, const std::vector<double>& b, const double* x, double* y) {
  for (int r = 0; r < W.rows; ++r) {
    const double* row = W.a.data() + static_cast<std::size_t>(r) * W.cols;
    double acc = b[static_cast<std::size_t>(r)];
    for (int c = 0; c < W.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

bool all_finite(const double* v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(v[i])) return false;
  }
  return true;
}

// Smooth-L1 penalty and its derivative.
double rho(double r) { return std::abs(r) < 1.0 ? 0.5 * r * r : std::abs(r) - 0.5; }
double rho_prime(double r) { return std::abs(r) < 1.0 ? r : (r > 0.0 ? 1.0 : -1.0); }

struct ForwardTrace {
  std::vector<std::vector<double>> pre;   // pre-activation per hidden layer
  std::vector<std::vector<double>> post;  // relu + mask output per hidden layer
  std::array<double, kNumClasses> logits{};
  HeadOutput out;
};

ForwardTrace forward_trace(const Network& net, std::span<const double> feature,
                           const SampleMasks* masks) {
  if (static_cast<int>(feature.size()) != net.input_dim)
    throw config_error("forward: feature length " + std::to_string(feature.size()) +
                       " does not match network input " + std::to_string(net.input_dim));
  ForwardTrace t;
  t.pre.resize(net.hidden.size());
  t.post.resize(net.hidden.size());
  const double* x = feature.data();
  for (std::size_t l = 0; l < net.hidden.size(); ++l) {
    const auto& layer = net.hidden[l];
    t.pre[l].resize(static_cast<std::size_t>(layer.W.rows));
    matvec(layer.W, layer.b, x, t.pre[l].data());
    if (!all_finite(t.pre[l].data(), t.pre[l].size()))
      throw numeric_error("forward: non-finite activation in hidden layer " + std::to_string(l));
    t.post[l].resize(t.pre[l].size());
    for (std::size_t u = 0; u < t.pre[l].size(); ++u) {
      double a = t.pre[l][u] > 0.0 ? t.pre[l][u] : 0.0;
      if (masks) a *= (*masks)[l][u];
      t.post[l][u] = a;
    }
    x = t.post[l].data();
  }

  matvec(net.cls_head.W, net.cls_head.b, x, t.logits.data());
  std::array<double, kRegDim> offsets;
  matvec(net.reg_head.W, net.reg_head.b, x, offsets.data());
  if (!all_finite(t.logits.data(), kNumClasses) || !all_finite(offsets.data(), kRegDim))
    throw numeric_error("forward: non-finite activation in output heads");

  const double mx = std::max(t.logits[0], t.logits[1]);
  const double e0 = std::exp(t.logits[0] - mx);
  const double e1 = std::exp(t.logits[1] - mx);
  t.out.class_probs = {e0 / (e0 + e1), e1 / (e0 + e1)};
  t.out.offsets = offsets;
  if (net.aleatoric_head) {
    std::array<double, kRegDim> lv;
    matvec(net.logvar_head.W, net.logvar_head.b, x, lv.data());
    if (!all_finite(lv.data(), kRegDim))
      throw numeric_error("forward: non-finite activation in log-variance head");
    t.out.log_vars = lv;
  }
  return t;
}

// Per-dimension attenuated-loss gradient pieces. lambda outside the clamp
// window contributes no gradient through the exponential.
struct AttenGrad {
  double d_res;     // d(loss)/d(residual)
  double d_lambda;  // d(loss)/d(lambda)
};

AttenGrad atten_grad(double residual, double lambda) {
  const double lam_c = std::clamp(lambda, -kLogVarClamp, kLogVarClamp);
  const double att = std::exp(-lam_c);
  AttenGrad g;
  g.d_res = 0.5 * att * rho_prime(residual);
  g.d_lambda = 0.5;
  if (lambda > -kLogVarClamp && lambda < kLogVarClamp) g.d_lambda -= 0.5 * att * rho(residual);
  return g;
}

struct SampleLoss {
  double cls = 0.0;
  double reg = 0.0;
  bool positive = false;
};

SampleLoss sample_loss(const Network& net, const Sample& s, const ForwardTrace& t) {
  SampleLoss out;
  out.cls = loss_cls(t.out.class_probs, s.label);
  out.positive = s.label == 1 && s.target.has_value();
  if (out.positive) {
    out.reg = net.aleatoric_head
                  ? loss_reg_attenuated(t.out.offsets, *s.target, *t.out.log_vars)
                  : loss_reg_smooth_l1(t.out.offsets, *s.target);
  }
  return out;
}

double decay_loss(const Network& net, double weight_decay) {
  if (weight_decay == 0.0) return 0.0;
  double acc = 0.0;
  const auto add = [&](const Mat& W) {
    for (const double w : W.a) acc += w * w;
  };
  for (const auto& layer : net.hidden) add(layer.W);
  add(net.cls_head.W);
  add(net.reg_head.W);
  if (net.aleatoric_head) add(net.logvar_head.W);
  return 0.5 * weight_decay * acc;
}

// Backpropagates one sample's head gradients through the trunk, accumulating
// parameter gradients scaled by the caller's weights.
void backprop_sample(const Network& net, const Sample& s, const ForwardTrace& t,
                     const SampleMasks* masks, double cls_w, double reg_w, Network& grads) {
  const std::size_t nl = net.hidden.size();
  const auto& h_last = nl > 0 ? t.post[nl - 1] : t.post[0];

  // Head deltas.
  std::array<double, kNumClasses> dlogits{};
  const double pt = t.out.class_probs[static_cast<std::size_t>(s.label)];
  if (pt > kProbClamp && pt < 1.0 - kProbClamp) {
    for (int j = 0; j < kNumClasses; ++j)
      dlogits[static_cast<std::size_t>(j)] =
          cls_w * (t.out.class_probs[static_cast<std::size_t>(j)] - (j == s.label ? 1.0 : 0.0));
  }

  std::array<double, kRegDim> dreg{};
  std::array<double, kRegDim> dlogvar{};
  const bool positive = s.label == 1 && s.target.has_value() && reg_w != 0.0;
  if (positive) {
    for (int d = 0; d < kRegDim; ++d) {
      const double r = t.out.offsets[static_cast<std::size_t>(d)] -
                       (*s.target)[static_cast<std::size_t>(d)];
      if (net.aleatoric_head) {
        const auto g = atten_grad(r, (*t.out.log_vars)[static_cast<std::size_t>(d)]);
        dreg[static_cast<std::size_t>(d)] = reg_w * g.d_res;
        dlogvar[static_cast<std::size_t>(d)] = reg_w * g.d_lambda;
      } else {
        dreg[static_cast<std::size_t>(d)] = reg_w * rho_prime(r);
      }
    }
  }

  // Accumulate head parameter grads and the delta reaching the trunk.
  std::vector<double> dh(h_last.size(), 0.0);
  const auto head_back = [&](const LinearLayer& head, LinearLayer& ghead, const double* delta,
                             int dim, bool active) {
    if (!active) return;
    for (int r = 0; r < dim; ++r) {
      const double dr = delta[r];
      if (dr == 0.0) continue;
      ghead.b[static_cast<std::size_t>(r)] += dr;
      double* grow = ghead.W.a.data() + static_cast<std::size_t>(r) * head.W.cols;
      const double* wrow = head.W.a.data() + static_cast<std::size_t>(r) * head.W.cols;
      for (int c = 0; c < head.W.cols; ++c) {
        grow[c] += dr * h_last[static_cast<std::size_t>(c)];
        dh[static_cast<std::size_t>(c)] += dr * wrow[c];
      }
    }
  };
  head_back(net.cls_head, grads.cls_head, dlogits.data(), kNumClasses, true);
  head_back(net.reg_head, grads.reg_head, dreg.data(), kRegDim, positive);
  head_back(net.logvar_head, grads.logvar_head, dlogvar.data(), kRegDim,
            positive && net.aleatoric_head);

  // Trunk.
  for (std::size_t l = nl; l-- > 0;) {
    const auto& layer = net.hidden[l];
    auto& glayer = grads.hidden[l];
    const std::size_t width = t.pre[l].size();
    std::vector<double> dz(width);
    for (std::size_t u = 0; u < width; ++u) {
      double g = dh[u];
      if (masks) g *= (*masks)[l][u];
      dz[u] = t.pre[l][u] > 0.0 ? g : 0.0;
    }
    const double* below = l == 0 ? s.feature.data() : t.post[l - 1].data();
    const std::size_t below_n = l == 0 ? s.feature.size() : t.post[l - 1].size();
    std::vector<double> dnext(below_n, 0.0);
    for (std::size_t u = 0; u < width; ++u) {
      const double du = dz[u];
      glayer.b[u] += du;
      if (du == 0.0) continue;
      double* grow = glayer.W.a.data() + u * below_n;
      const double* wrow = layer.W.a.data() + u * below_n;
      for (std::size_t c = 0; c < below_n; ++c) {
        grow[c] += du * below[c];
        dnext[c] += du * wrow[c];
      }
    }
    dh = std::move(dnext);
  }
}

void init_he_uniform(Mat& W, Rng& rng) {
  const double limit = std::sqrt(6.0 / W.cols);
  for (double& w : W.a) w = rng.uniform(-limit, limit);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw config_error("train: dropout must be in [0,1)");
  if (!(lr_main > 0.0) || !(lr_fine > 0.0)) throw config_error("train: learning rates must be > 0");
  if (steps_main < 0 || steps_fine < 0) throw config_error("train: negative step count");
  if (batch_size < 1) throw config_error("train: batch_size must be >= 1");
  if (gamma_cls < 0.0 || gamma_reg < 0.0) throw config_error("train: loss weights must be >= 0");
  if (weight_decay < 0.0) throw config_error("train: weight_decay must be >= 0");
}

Network make_network(int input_dim, const std::vector<int>& hidden_sizes, bool aleatoric_head,
                     Rng& rng) {
  if (input_dim < 1) throw config_error("network: input_dim must be >= 1");
  if (hidden_sizes.empty()) throw config_error("network: need at least one hidden layer");
  for (const int h : hidden_sizes)
    if (h < 1) throw config_error("network: hidden sizes must be >= 1");

  Network net;
  net.input_dim = input_dim;
  net.hidden_sizes = hidden_sizes;
  net.aleatoric_head = aleatoric_head;
  int below = input_dim;
  for (const int h : hidden_sizes) {
    LinearLayer layer;
    layer.W = Mat::zeros(h, below);
    layer.b.assign(static_cast<std::size_t>(h), 0.0);
    init_he_uniform(layer.W, rng);
    net.hidden.push_back(std::move(layer));
    below = h;
  }
  const auto make_head = [&](int dim, double bias) {
    LinearLayer head;
    head.W = Mat::zeros(dim, below);
    head.b.assign(static_cast<std::size_t>(dim), bias);
    init_he_uniform(head.W, rng);
    return head;
  };
  net.cls_head = make_head(kNumClasses, 0.0);
  net.reg_head = make_head(kRegDim, 0.0);
  if (aleatoric_head) net.logvar_head = make_head(kRegDim, kLogVarBiasInit);
  return net;
}

Network zeros_like(const Network& net) {
  Network z = net;
  visit_params(z, [](const std::string&, std::vector<double>& v) {
    std::fill(v.begin(), v.end(), 0.0);
  });
  return z;
}

SampleMasks sample_dropout_masks(const Network& net, double dropout_p, Rng& rng) {
  SampleMasks masks(net.hidden.size());
  const double scale = 1.0 / (1.0 - dropout_p);
  for (std::size_t l = 0; l < net.hidden.size(); ++l) {
    masks[l].resize(static_cast<std::size_t>(net.hidden[l].W.rows));
    for (double& m : masks[l]) m = rng.uniform() < dropout_p ? 0.0 : scale;
  }
  return masks;
}

HeadOutput forward(const Network& net, std::span<const double> feature, Mode mode,
                   double dropout_p, Rng& rng) {
  if (mode == Mode::deterministic) return forward_masked(net, feature, nullptr);
  const SampleMasks masks = sample_dropout_masks(net, dropout_p, rng);
  return forward_masked(net, feature, &masks);
}

HeadOutput forward_masked(const Network& net, std::span<const double> feature,
                          const SampleMasks* masks) {
  return forward_trace(net, feature, masks).out;
}

double loss_cls(const std::array<double, kNumClasses>& probs, int label) {
  if (label < 0 || label >= kNumClasses) throw config_error("loss_cls: bad label");
  const double p = std::clamp(probs[static_cast<std::size_t>(label)], kProbClamp, 1.0 - kProbClamp);
  return -std::log(p);
}

double loss_reg_smooth_l1(const std::array<double, kRegDim>& v,
                          const std::array<double, kRegDim>& v_gt) {
  double acc = 0.0;
  for (int d = 0; d < kRegDim; ++d)
    acc += rho(v[static_cast<std::size_t>(d)] - v_gt[static_cast<std::size_t>(d)]);
  return acc;
}

double loss_reg_attenuated(const std::array<double, kRegDim>& v,
                           const std::array<double, kRegDim>& v_gt,
                           const std::array<double, kRegDim>& log_vars) {
  // Residual and penalty terms accumulate separately so that lambda = 0
  // reproduces 0.5 * loss_reg_smooth_l1 bit for bit.
  double residual_term = 0.0;
  double penalty_term = 0.0;
  for (int d = 0; d < kRegDim; ++d) {
    const std::size_t i = static_cast<std::size_t>(d);
    const double lam = log_vars[i];
    const double lam_c = std::clamp(lam, -kLogVarClamp, kLogVarClamp);
    residual_term += std::exp(-lam_c) * rho(v[i] - v_gt[i]);
    penalty_term += lam;
  }
  return 0.5 * residual_term + 0.5 * penalty_term;
}

LossBreakdown batch_loss(const Network& net, std::span<const Sample* const> batch,
                         const std::vector<SampleMasks>& masks, const TrainConfig& cfg) {
  if (batch.empty()) throw config_error("batch_loss: empty batch");
  if (masks.size() != batch.size()) throw config_error("batch_loss: mask/batch size mismatch");
  double cls_sum = 0.0, reg_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ForwardTrace t = forward_trace(net, batch[i]->feature, &masks[i]);
    const SampleLoss sl = sample_loss(net, *batch[i], t);
    cls_sum += sl.cls;
    if (sl.positive) {
      reg_sum += sl.reg;
      ++positives;
    }
  }
  LossBreakdown out;
  out.cls = cfg.gamma_cls * cls_sum / static_cast<double>(batch.size());
  out.reg = positives > 0 ? cfg.gamma_reg * reg_sum / static_cast<double>(positives) : 0.0;
  out.decay = decay_loss(net, cfg.weight_decay);
  out.total = out.cls + out.reg + out.decay;
  return out;
}

LossBreakdown batch_loss_and_grads(const Network& net, std::span<const Sample* const> batch,
                                   const std::vector<SampleMasks>& masks,
                                   const TrainConfig& cfg, Network& grads) {
  if (batch.empty()) throw config_error("batch_loss_and_grads: empty batch");
  if (masks.size() != batch.size())
    throw config_error("batch_loss_and_grads: mask/batch size mismatch");

  std::size_t positives = 0;
  for (const Sample* s : batch)
    if (s->label == 1 && s->target.has_value()) ++positives;

  const double cls_w = cfg.gamma_cls / static_cast<double>(batch.size());
  const double reg_w = positives > 0 ? cfg.gamma_reg / static_cast<double>(positives) : 0.0;

  double cls_sum = 0.0, reg_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ForwardTrace t = forward_trace(net, batch[i]->feature, &masks[i]);
    const SampleLoss sl = sample_loss(net, *batch[i], t);
    cls_sum += sl.cls;
    if (sl.positive) reg_sum += sl.reg;
    backprop_sample(net, *batch[i], t, &masks[i], cls_w, reg_w, grads);
  }

  if (cfg.weight_decay > 0.0) {
    const auto add = [&](const Mat& W, Mat& G) {
      for (std::size_t i = 0; i < W.a.size(); ++i) G.a[i] += cfg.weight_decay * W.a[i];
    };
    for (std::size_t l = 0; l < net.hidden.size(); ++l) add(net.hidden[l].W, grads.hidden[l].W);
    add(net.cls_head.W, grads.cls_head.W);
    add(net.reg_head.W, grads.reg_head.W);
    if (net.aleatoric_head) add(net.logvar_head.W, grads.logvar_head.W);
  }

  LossBreakdown out;
  out.cls = cfg.gamma_cls * cls_sum / static_cast<double>(batch.size());
  out.reg = positives > 0 ? cfg.gamma_reg * reg_sum / static_cast<double>(positives) : 0.0;
  out.decay = decay_loss(net, cfg.weight_decay);
  out.total = out.cls + out.reg + out.decay;
  return out;
}

AdamState make_adam_state(const Network& net) {
  return {zeros_like(net), zeros_like(net), 0};
}

void adam_step(Network& net, const Network& grads, AdamState& state, double lr) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));

  std::vector<std::vector<double>*> params, ms, vs;
  std::vector<const std::vector<double>*> gs;
  visit_params(net, [&](const std::string&, std::vector<double>& p) { params.push_back(&p); });
  visit_params(grads, [&](const std::string&, const std::vector<double>& g) { gs.push_back(&g); });
  visit_params(state.m, [&](const std::string&, std::vector<double>& m) { ms.push_back(&m); });
  visit_params(state.v, [&](const std::string&, std::vector<double>& v) { vs.push_back(&v); });

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    const auto& g = *gs[k];
    auto& m = *ms[k];
    auto& v = *vs[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
  }
}

LossBreakdown backward_and_step(Network& net, std::span<const Sample* const> batch,
                                const TrainConfig& cfg, AdamState& state, double lr, Rng& rng) {
  std::vector<SampleMasks> masks;
  masks.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    masks.push_back(sample_dropout_masks(net, cfg.dropout_p, rng));

  Network grads = zeros_like(net);
  const LossBreakdown loss = batch_loss_and_grads(net, batch, masks, cfg, grads);
  if (!std::isfinite(loss.total)) throw numeric_error("training step: non-finite loss");

  std::string bad_param;
  visit_params(grads, [&](const std::string& name, std::vector<double>& g) {
    if (!bad_param.empty()) return;
    for (const double x : g) {
      if (!std::isfinite(x)) {
        bad_param = name;
        return;
      }
    }
  });
  if (!bad_param.empty()) throw numeric_error("training step: non-finite gradient in " + bad_param);

  if (lr != 0.0) adam_step(net, grads, state, lr);
  return loss;
}

void save_model(const Network& net, const std::filesystem::path& path, const AdamState* adam) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write model file: " + path.string());
  out.write(kMagic, 4);
  detail::write_u32le(out, kVersion);
  detail::write_u32le(out, static_cast<std::uint32_t>(net.input_dim));
  detail::write_u32le(out, static_cast<std::uint32_t>(net.hidden_sizes.size()));
  for (const int h : net.hidden_sizes) detail::write_u32le(out, static_cast<std::uint32_t>(h));
  detail::write_u32le(out, net.aleatoric_head ? 1 : 0);

  const auto write_params = [&](const Network& n) {
    visit_params(n, [&](const std::string&, const std::vector<double>& v) {
      for (const double x : v) detail::write_f64le(out, x);
    });
  };
  write_params(net);
  detail::write_u32le(out, adam ? 1 : 0);
  if (adam) {
    detail::write_u64le(out, static_cast<std::uint64_t>(adam->step));
    write_params(adam->m);
    write_params(adam->v);
  }
  if (!out) throw data_error("write failed: " + path.string());
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open model file: " + path.string());
  const auto truncated = [&]() { return data_error(path.string() + ": truncated model file"); };

  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw data_error(path.string() + ": not a BLNN model file");
  std::uint32_t version = 0;
  if (!detail::read_u32le(in, version)) throw truncated();
  if (version != kVersion)
    throw data_error(path.string() + ": unsupported BLNN version " + std::to_string(version));

  std::uint32_t input_dim = 0, n_hidden = 0, aleatoric = 0;
  if (!detail::read_u32le(in, input_dim) || !detail::read_u32le(in, n_hidden)) throw truncated();
  if (input_dim == 0 || n_hidden == 0 || n_hidden > 64)
    throw data_error(path.string() + ": implausible architecture table");
  std::vector<int> hidden_sizes(n_hidden);
  for (auto& h : hidden_sizes) {
    std::uint32_t v = 0;
    if (!detail::read_u32le(in, v)) throw truncated();
    if (v == 0) throw data_error(path.string() + ": zero-width hidden layer");
    h = static_cast<int>(v);
  }
  if (!detail::read_u32le(in, aleatoric)) throw truncated();

  Rng dummy(0);
  Network net = make_network(static_cast<int>(input_dim), hidden_sizes, aleatoric != 0, dummy);
  const auto read_params = [&](Network& n) {
    visit_params(n, [&](const std::string& name, std::vector<double>& v) {
      for (double& x : v) {
        if (!detail::read_f64le(in, x))
          throw data_error(path.string() + ": truncated parameter block " + name);
      }
    });
  };
  read_params(net);

  LoadedModel model;
  std::uint32_t has_adam = 0;
  if (!detail::read_u32le(in, has_adam)) throw truncated();
  if (has_adam != 0) {
    AdamState st = make_adam_state(net);
    std::uint64_t step = 0;
    if (!detail::read_u64le(in, step)) throw truncated();
    st.step = static_cast<long long>(step);
    read_params(st.m);
    read_params(st.v);
    model.adam = std::move(st);
  }
  if (in.peek() != EOF) throw data_error(path.string() + ": trailing bytes");
  model.net = std::move(net);
  return model;
}

}  // namespace blidar::nnet
