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

#include <cmath>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "adapl/embedding_store.hpp"
#include "adapl/label_state.hpp"

namespace adapl {

/// Similarity used to rank a noisy sample's neighbors.
enum class NeighborMetric {
  kText,   // cosine between the assigned description embeddings
  kImage,  // cosine between the image features
};

std::string_view to_string(NeighborMetric m);
NeighborMetric parse_neighbor_metric(std::string_view name);

struct DescriptionLabel {
  std::size_t r_hat = 0;
  int y_h = 0;
};

/// Most similar description row (lowest index on ties) and its owning class.
DescriptionLabel assign_description_label(std::span<const float> f,
                                          const EmbeddingMatrix& text_desc,
                                          std::span<const int> owner);

/// Row i of `assigned_text` is the description embedding assigned to sample
/// i. Returns the k_n other samples whose assigned embeddings are closest.
std::vector<std::size_t> neighbor_set(std::size_t i, const EmbeddingMatrix& assigned_text,
                                      std::size_t k_n);

struct AdaptiveWeight {
  double delta_zeta = 0.0;
  double lambda = 0.5;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// delta = cos(f_i, t_i) - mean over neighbors j of cos(f_j, t_j);
/// lambda = sigmoid(delta).
AdaptiveWeight adaptive_weight(std::span<const float> f_i, std::span<const float> text_i,
                               std::span<const std::size_t> neighbors,
                               const EmbeddingMatrix& features,
                               const EmbeddingMatrix& assigned_text);

struct NalrConfig {
  std::size_t k_n = 3;
  NeighborMetric metric = NeighborMetric::kText;
};

/// Fills `refined` for every non-clean sample, using weak-view features.
/// Clean samples are returned untouched.
std::vector<LabelState> refine_noisy(std::vector<LabelState> state,
                                     const EmbeddingBundle& bundle,
                                     const NalrConfig& config);

}  // namespace adapl
