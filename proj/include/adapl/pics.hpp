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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adapl/memory_bank.hpp"
#include "adapl/pseudo_labeler.hpp"

namespace adapl {

/// How the cross-class comparison set is drawn from the memory bank.
enum class CrossSetStrategy {
  kConfidence,  // CS: top-k by weight among other-label records
  kRandom,      // RS: k uniform draws among other-label records
  kConfusion,   // FS: top-k by weight among records of the runner-up class
};

std::string_view to_string(CrossSetStrategy s);
/// Accepts "cs", "rs", "fs" (any case).
CrossSetStrategy parse_strategy(std::string_view name);

/// Keys the RS generator; the sample index completes the key.
struct RandomSetKey {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
};

/// Sentinel separation for an empty comparison set.
inline constexpr double kEmptySetSeparation = -1.0;

struct PicsScores {
  std::vector<double> phi;
  std::vector<double> psi;
  std::vector<bool> clean;
  std::vector<std::vector<std::size_t>> cross_set;
};

struct PicsConfig {
  CrossSetStrategy strategy = CrossSetStrategy::kConfidence;
  std::size_t k = 3;
  RandomSetKey key;
};

/// cos(f, mu[y_hat]).
double in_class_score(std::span<const float> f, const PrototypeSet& protos, int y_hat);

// The three builders never return sample i itself. `own_label` is the
// sample's current pseudo-label.
std::vector<std::size_t> build_cross_set_cs(const MemoryBank& bank, std::size_t i,
                                            int own_label, std::size_t k);
std::vector<std::size_t> build_cross_set_rs(const MemoryBank& bank, std::size_t i,
                                            int own_label, std::size_t k,
                                            RandomSetKey key);
std::vector<std::size_t> build_cross_set_fs(const MemoryBank& bank, std::size_t i,
                                            int own_label, int y_second,
                                            std::size_t k);

/// Partial Fisher-Yates over `pool` (consumed), drawing from the stream keyed
/// by (key.seed, key.epoch, sample).
std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool,
                                                    std::size_t k, RandomSetKey key,
                                                    std::size_t sample);

/// Mean cosine between f and the set members; -1 for an empty set.
double cross_class_separation(std::span<const float> f,
                              std::span<const std::size_t> cross_set,
                              const MemoryBank& bank);

/// mask[i] = phi[i] > psi[i].
std::vector<bool> clean_mask(std::span<const double> phi, std::span<const double> psi);

/// Confidence-threshold baseline: mask[i] = max(probs_i) >= threshold.
std::vector<bool> threshold_filter(std::span<const PseudoLabelRecord> records,
                                   double threshold);

/// Scores every sample against the bank and prototypes.
PicsScores score_samples(const MemoryBank& bank, const PrototypeSet& protos,
                         std::span<const PseudoLabelRecord> records,
                         const PicsConfig& config);

}  // namespace adapl
