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
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "adapl/embedding_store.hpp"
#include "adapl/label_state.hpp"
#include "adapl/memory_bank.hpp"
#include "adapl/nalr.hpp"
#include "adapl/pics.hpp"
#include "adapl/pseudo_labeler.hpp"

namespace adapl {

struct LossWeights {
  double st = 1.0;
  double n = 1.0;
  double reg = 1.0;
};

struct TrainConfig {
  CrossSetStrategy strategy = CrossSetStrategy::kConfidence;
  std::size_t k = 3;
  std::size_t k_n = 3;
  double tau = 100.0;
  std::size_t epochs = 15;
  std::size_t batch = 64;
  double lr = 5e-5;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  OmegaMode omega_mode = OmegaMode::kSoftmax;
  NeighborMetric neighbor_metric = NeighborMetric::kText;
  LossWeights weights;

  /// Throws ValidationError on k, k_n, batch < 1 or non-positive tau, lr.
  void validate() const;
};

/// Clamp applied inside the log of the batch-mean prediction.
inline constexpr double kLogEps = 1e-12;

// All losses take raw prototypes and normalize their rows internally, so the
// gradient below is the derivative of exactly these functions. `strong` holds
// the batch rows and `states` is aligned with it.
double loss_st(const EmbeddingMatrix& strong, const RealMatrix& z,
               std::span<const LabelState> states, double tau);
double loss_n(const EmbeddingMatrix& strong, const RealMatrix& z,
              std::span<const LabelState> states, double tau);
double loss_reg(const EmbeddingMatrix& strong, const RealMatrix& z, double tau);

struct LossValues {
  double st = 0.0;
  double n = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

struct LossAndGradient {
  LossValues loss;
  RealMatrix grad;  // C x d, with respect to the raw prototype entries
};

/// Weighted total loss and its analytic gradient, including the chain through
/// row normalization of z.
LossAndGradient loss_and_grad(const EmbeddingMatrix& strong, const RealMatrix& z,
                              std::span<const LabelState> states, double tau,
                              const LossWeights& weights);

inline RealMatrix grad_total(const EmbeddingMatrix& strong, const RealMatrix& z,
                             std::span<const LabelState> states, double tau,
                             const LossWeights& weights) {
  return loss_and_grad(strong, z, states, tau, weights).grad;
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  RealMatrix m;
  RealMatrix v;
  std::size_t step = 0;
};

/// One decoupled-weight-decay Adam update in place, then row renormalization.
void adamw_step(RealMatrix& z, const RealMatrix& grad, AdamWState& state, double lr,
                const AdamWConfig& config);

/// lr0 * (1 + cos(pi * step / total_steps)) / 2.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

/// Phases (1)-(4) of an epoch: zero-shot labels from weak views, prototypes
/// from the bank, PICS scores, and refinement of noisy samples. Initializes the
/// bank from the zero-shot labels when it is empty.
struct EpochLabels {
  std::vector<PseudoLabelRecord> records;
  PrototypeSet prototypes;
  PicsScores scores;
  std::vector<LabelState> states;
};

EpochLabels label_epoch(const EmbeddingBundle& bundle, const RealMatrix& z,
                        std::optional<MemoryBank>& bank, const TrainConfig& config,
                        std::size_t epoch);

struct EpochMetrics {
  std::size_t epoch = 0;
  // Accuracies are NaN when ground truth is absent or the subset is empty.
  double pseudo_acc = 0.0;
  std::size_t clean_count = 0;
  double clean_acc = 0.0;
  double refined_acc = 0.0;
  double test_acc = 0.0;
  double loss_st = 0.0;
  double loss_n = 0.0;
  double loss_reg = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  RealMatrix z;
  std::optional<MemoryBank> bank;
  // Test accuracy of the initial prototypes (NaN without a labeled test split).
  double zero_shot_test_acc = 0.0;
};

TrainResult run_training(const EmbeddingBundle& bundle, const TrainConfig& config);

}  // namespace adapl
