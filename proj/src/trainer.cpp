/*
 * Copyright (c) 2026 The adapl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "adapl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <fmt/core.h>

#include "adapl/keyed_rng.hpp"
#include "adapl/similarity.hpp"

namespace adapl {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Stream id for minibatch shuffling; the epoch completes the key.
constexpr std::uint64_t kShuffleStream = 0x5348554646ull;

struct Forward {
  RealMatrix zhat;
  std::vector<double> norms;
  RealMatrix log_probs;  // B x C
  RealMatrix probs;      // B x C
};

Forward forward(const EmbeddingMatrix& strong, const RealMatrix& z, double tau) {
  if (strong.rows() == 0) throw ValidationError("empty batch");
  if (!(tau > 0.0)) throw ValidationError("tau must be positive");
  Forward fw;
  fw.zhat = RealMatrix(z.rows(), z.dim());
  fw.norms.resize(z.rows());
  for (std::size_t c = 0; c < z.rows(); ++c) {
    double sq = 0.0;
    for (double v : z.row(c)) sq += v * v;
    fw.norms[c] = std::sqrt(sq);
    if (!(fw.norms[c] > 0.0)) {
      throw ValidationError(fmt::format("prototype row {} has zero norm", c));
    }
    auto dst = fw.zhat.row(c);
    const auto src = z.row(c);
    for (std::size_t k = 0; k < z.dim(); ++k) dst[k] = src[k] / fw.norms[c];
  }
  fw.log_probs = sim_matrix(strong, fw.zhat);
  fw.probs = RealMatrix(strong.rows(), z.rows());
  for (std::size_t i = 0; i < strong.rows(); ++i) {
    auto s = fw.log_probs.row(i);
    for (double& v : s) v *= tau;
    const double peak = *std::max_element(s.begin(), s.end());
    double total = 0.0;
    for (double v : s) total += std::exp(v - peak);
    const double lse = peak + std::log(total);
    auto p = fw.probs.row(i);
    for (std::size_t c = 0; c < s.size(); ++c) {
      s[c] -= lse;
      p[c] = std::exp(s[c]);
    }
  }
  return fw;
}

void check_states(const EmbeddingMatrix& strong, std::span<const LabelState> states,
                  std::size_t num_classes) {
  if (states.size() != strong.rows()) {
    throw ValidationError(fmt::format("{} states for a batch of {}", states.size(),
                                      strong.rows()));
  }
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& s = states[i];
    if (s.y_hat < 0 || static_cast<std::size_t>(s.y_hat) >= num_classes) {
      throw ValidationError(fmt::format("state {}: label out of range", i));
    }
    if (!s.clean) {
      if (!s.refined) {
        throw ValidationError(
            fmt::format("state {}: noisy sample without refinement fields", i));
      }
      if (s.refined->y_h < 0 || static_cast<std::size_t>(s.refined->y_h) >= num_classes) {
        throw ValidationError(fmt::format("state {}: refined label out of range", i));
      }
    }
  }
}

double st_value(const Forward& fw, std::span<const LabelState> states) {
  double total = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i].clean) total -= fw.log_probs(i, states[i].y_hat);
  }
  return total / static_cast<double>(states.size());
}

double n_value(const Forward& fw, std::span<const LabelState> states) {
  double total = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!states[i].clean) {
      total -= states[i].refined->lambda * fw.log_probs(i, states[i].refined->y_h);
    }
  }
  return total / static_cast<double>(states.size());
}

std::vector<double> mean_prediction(const Forward& fw) {
  const std::size_t b = fw.probs.rows();
  std::vector<double> mean(fw.probs.dim(), 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    const auto p = fw.probs.row(i);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p[c];
  }
  for (double& v : mean) v /= static_cast<double>(b);
  return mean;
}

double reg_value(const std::vector<double>& mean) {
  double total = 0.0;
  for (double v : mean) total -= std::log(std::max(v, kLogEps));
  return total / static_cast<double>(mean.size());
}

double fraction(std::size_t hits, std::size_t total) {
  return total == 0 ? kNaN : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

void TrainConfig::validate() const {
  if (k < 1) throw ValidationError("k must be >= 1");
  if (k_n < 1) throw ValidationError("k_n must be >= 1");
  if (batch < 1) throw ValidationError("batch must be >= 1");
  if (!(tau > 0.0)) throw ValidationError("tau must be positive");
  if (!(lr > 0.0)) throw ValidationError("lr must be positive");
  if (weight_decay < 0.0) throw ValidationError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ValidationError("eps must be positive");
}

double loss_st(const EmbeddingMatrix& strong, const RealMatrix& z,
               std::span<const LabelState> states, double tau) {
  check_states(strong, states, z.rows());
  return st_value(forward(strong, z, tau), states);
}

double loss_n(const EmbeddingMatrix& strong, const RealMatrix& z,
              std::span<const LabelState> states, double tau) {
  check_states(strong, states, z.rows());
  return n_value(forward(strong, z, tau), states);
}

double loss_reg(const EmbeddingMatrix& strong, const RealMatrix& z, double tau) {
  return reg_value(mean_prediction(forward(strong, z, tau)));
}

LossAndGradient loss_and_grad(const EmbeddingMatrix& strong, const RealMatrix& z,
                              std::span<const LabelState> states, double tau,
                              const LossWeights& weights) {
  check_states(strong, states, z.rows());
  const Forward fw = forward(strong, z, tau);
  const std::size_t b = strong.rows();
  const std::size_t num_classes = z.rows();
  const std::size_t d = z.dim();
  const double inv_b = 1.0 / static_cast<double>(b);

  LossAndGradient out;
  const auto mean = mean_prediction(fw);
  out.loss.st = st_value(fw, states);
  out.loss.n = n_value(fw, states);
  out.loss.reg = reg_value(mean);
  out.loss.total =
      weights.st * out.loss.st + weights.n * out.loss.n + weights.reg * out.loss.reg;

  // d(reg)/d(p_ij) is the same for every i; zero where the clamp is active.
  std::vector<double> reg_coef(num_classes, 0.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (mean[c] > kLogEps) {
      reg_coef[c] = -inv_b / (static_cast<double>(num_classes) * mean[c]);
    }
  }

  // Gradient with respect to the logits.
  RealMatrix dlogits(b, num_classes);
  for (std::size_t i = 0; i < b; ++i) {
    const auto p = fw.probs.row(i);
    auto g = dlogits.row(i);
    const auto& s = states[i];
    if (s.clean) {
      const double w = weights.st * inv_b;
      for (std::size_t c = 0; c < num_classes; ++c) g[c] += w * p[c];
      g[s.y_hat] -= w;
    } else {
      const double w = weights.n * inv_b * s.refined->lambda;
      for (std::size_t c = 0; c < num_classes; ++c) g[c] += w * p[c];
      g[s.refined->y_h] -= w;
    }
    double expected = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) expected += reg_coef[c] * p[c];
    for (std::size_t c = 0; c < num_classes; ++c) {
      g[c] += weights.reg * p[c] * (reg_coef[c] - expected);
    }
  }

  // Through the logits (tau * <x, zhat>) and then the row normalization.
  out.grad = RealMatrix(num_classes, d);
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<double> dzhat(d, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
      const double coef = tau * dlogits(i, c);
      if (coef == 0.0) continue;
      const auto x = strong.row(i);
      for (std::size_t k = 0; k < d; ++k) dzhat[k] += coef * static_cast<double>(x[k]);
    }
    const auto zc = fw.zhat.row(c);
    double radial = 0.0;
    for (std::size_t k = 0; k < d; ++k) radial += zc[k] * dzhat[k];
    auto g = out.grad.row(c);
    for (std::size_t k = 0; k < d; ++k) {
      g[k] = (dzhat[k] - zc[k] * radial) / fw.norms[c];
    }
  }
  return out;
}

void adamw_step(RealMatrix& z, const RealMatrix& grad, AdamWState& state, double lr,
                const AdamWConfig& config) {
  if (grad.rows() != z.rows() || grad.dim() != z.dim()) {
    throw ValidationError("adamw_step: gradient shape differs from parameters");
  }
  if (state.m.rows() != z.rows() || state.m.dim() != z.dim()) {
    state.m = RealMatrix(z.rows(), z.dim());
    state.v = RealMatrix(z.rows(), z.dim());
    state.step = 0;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2 = 1.0 - std::pow(config.beta2, t);

  auto w = z.data();
  auto g = grad.data();
  auto m = state.m.data();
  auto v = state.v.data();
  for (std::size_t k = 0; k < w.size(); ++k) {
    m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
    v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
    const double m_hat = m[k] / bias1;
    const double v_hat = v[k] / bias2;
    w[k] *= 1.0 - lr * config.weight_decay;
    w[k] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
  z = normalize_rows(z);
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
  if (total_steps == 0) return lr0;
  if (step > total_steps) {
    throw ValidationError(fmt::format("step {} beyond schedule of {}", step, total_steps));
  }
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

EpochLabels label_epoch(const EmbeddingBundle& bundle, const RealMatrix& z,
                        std::optional<MemoryBank>& bank, const TrainConfig& config,
                        std::size_t epoch) {
  EpochLabels out;
  out.records = zero_shot_label(bundle.weak, z, config.tau, config.omega_mode);
  if (!bank) {
    std::vector<BankEntry> entries(out.records.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      entries[i] = {out.records[i].y_hat, out.records[i].omega};
    }
    bank = init_bank(bundle.weak, entries, bundle.num_classes());
  }
  out.prototypes = compute_prototypes(*bank, z);
  out.scores = score_samples(*bank, out.prototypes, out.records,
                             {config.strategy, config.k, {config.seed, epoch}});

  std::vector<LabelState> states(out.records.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    auto& s = states[i];
    s.y_hat = out.records[i].y_hat;
    s.omega = out.records[i].omega;
    s.y_second = out.records[i].y_second;
    s.phi = out.scores.phi[i];
    s.psi = out.scores.psi[i];
    s.clean = out.scores.clean[i];
    s.cross_set = out.scores.cross_set[i];
  }
  out.states = refine_noisy(std::move(states), bundle,
                            {config.k_n, config.neighbor_metric});
  return out;
}

TrainResult run_training(const EmbeddingBundle& bundle, const TrainConfig& config) {
  config.validate();
  validate_bundle(bundle);

  TrainResult result;
  result.z = to_real(bundle.catalog.z);
  const bool has_test = bundle.test && bundle.truth_test;
  result.zero_shot_test_acc =
      has_test ? evaluate_accuracy(*bundle.test, result.z, *bundle.truth_test) : kNaN;

  const std::size_t n = bundle.weak.rows();
  const std::size_t d = bundle.dim();
  const std::size_t batches_per_epoch = (n + config.batch - 1) / config.batch;
  const std::size_t total_steps = batches_per_epoch * config.epochs;
  const AdamWConfig adam{config.beta1, config.beta2, config.eps, config.weight_decay};
  AdamWState opt;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochLabels labels = label_epoch(bundle, result.z, result.bank, config, epoch);
    result.bank = update_bank(std::move(*result.bank), labels.states);

    EpochMetrics m;
    m.epoch = epoch;
    if (bundle.truth_train) {
      const auto& truth = *bundle.truth_train;
      std::size_t hits = 0, clean_hits = 0, refined_hits = 0, noisy = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& s = labels.states[i];
        const bool hit = s.y_hat == truth[i];
        hits += hit;
        if (s.clean) {
          ++m.clean_count;
          clean_hits += hit;
        } else {
          ++noisy;
          refined_hits += s.refined->y_h == truth[i];
        }
      }
      m.pseudo_acc = fraction(hits, n);
      m.clean_acc = fraction(clean_hits, m.clean_count);
      m.refined_acc = fraction(refined_hits, noisy);
    } else {
      for (const auto& s : labels.states) m.clean_count += s.clean;
      m.pseudo_acc = m.clean_acc = m.refined_acc = kNaN;
    }

    // Fixed-seed shuffle, Fisher-Yates on a keyed stream.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    KeyedStream shuffle(config.seed, kShuffleStream, epoch);
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.uniform_below(i)]);
    }

    LossValues sum;
    for (std::size_t start = 0; start < n; start += config.batch) {
      const std::size_t b = std::min(config.batch, n - start);
      EmbeddingMatrix strong(b, d);
      std::vector<LabelState> batch_states(b);
      for (std::size_t r = 0; r < b; ++r) {
        const std::size_t idx = order[start + r];
        const auto src = bundle.strong.row(idx);
        std::copy(src.begin(), src.end(), strong.row(r).begin());
        batch_states[r] = labels.states[idx];
      }
      const auto lg = loss_and_grad(strong, result.z, batch_states, config.tau,
                                    config.weights);
      sum.st += lg.loss.st;
      sum.n += lg.loss.n;
      sum.reg += lg.loss.reg;
      adamw_step(result.z, lg.grad, opt, cosine_lr(step, total_steps, config.lr), adam);
      ++step;
    }
    m.loss_st = sum.st / static_cast<double>(batches_per_epoch);
    m.loss_n = sum.n / static_cast<double>(batches_per_epoch);
    m.loss_reg = sum.reg / static_cast<double>(batches_per_epoch);
    m.test_acc =
        has_test ? evaluate_accuracy(*bundle.test, result.z, *bundle.truth_test) : kNaN;
    result.metrics.push_back(m);
  }
  return result;
}

}  // namespace adapl
