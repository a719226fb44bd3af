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
#include "adapl/nalr.hpp"

#include <cctype>
#include <string>

#include <fmt/core.h>

#include "adapl/similarity.hpp"

namespace adapl {

std::string_view to_string(NeighborMetric m) {
  return m == NeighborMetric::kText ? "text" : "image";
}

NeighborMetric parse_neighbor_metric(std::string_view name) {
  std::string lower(name);
  for (char& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "text") return NeighborMetric::kText;
  if (lower == "image") return NeighborMetric::kImage;
  throw ValidationError(
      fmt::format("unknown neighbor metric '{}' (expected text or image)", name));
}

DescriptionLabel assign_description_label(std::span<const float> f,
                                          const EmbeddingMatrix& text_desc,
                                          std::span<const int> owner) {
  if (text_desc.empty()) throw ValidationError("no descriptions");
  if (owner.size() != text_desc.rows()) {
    throw ValidationError("owner map does not cover the description rows");
  }
  std::size_t best = 0;
  double best_sim = cosine(f, text_desc.row(0));
  for (std::size_t t = 1; t < text_desc.rows(); ++t) {
    const double s = cosine(f, text_desc.row(t));
    if (s > best_sim) {
      best = t;
      best_sim = s;
    }
  }
  return {best, owner[best]};
}

std::vector<std::size_t> neighbor_set(std::size_t i, const EmbeddingMatrix& assigned_text,
                                      std::size_t k_n) {
  if (i >= assigned_text.rows()) {
    throw ValidationError(fmt::format("sample {} out of range", i));
  }
  const std::size_t exclude[] = {i};
  return top_k_neighbors(assigned_text.row(i), assigned_text, k_n, exclude);
}

AdaptiveWeight adaptive_weight(std::span<const float> f_i, std::span<const float> text_i,
                               std::span<const std::size_t> neighbors,
                               const EmbeddingMatrix& features,
                               const EmbeddingMatrix& assigned_text) {
  if (neighbors.empty()) throw ValidationError("adaptive_weight: empty neighbor list");
  double mean = 0.0;
  for (std::size_t j : neighbors) mean += cosine(features.row(j), assigned_text.row(j));
  mean /= static_cast<double>(neighbors.size());
  AdaptiveWeight w;
  w.delta_zeta = cosine(f_i, text_i) - mean;
  w.lambda = sigmoid(w.delta_zeta);
  return w;
}

std::vector<LabelState> refine_noisy(std::vector<LabelState> state,
                                     const EmbeddingBundle& bundle,
                                     const NalrConfig& config) {
  const EmbeddingMatrix& features = bundle.weak;
  const std::size_t n = features.rows();
  if (state.size() != n) {
    throw ValidationError(fmt::format("refine_noisy: {} states for {} samples",
                                      state.size(), n));
  }
  if (config.k_n == 0) throw ValidationError("k_n must be >= 1");

  bool any_noisy = false;
  for (const auto& s : state) any_noisy = any_noisy || !s.clean;
  if (!any_noisy) return state;
  if (n < 2) throw ValidationError("no neighbors");

  // Every sample gets a description so that neighbor pools span the whole
  // dataset, clean and noisy alike.
  const RealMatrix image_text = sim_matrix(features, bundle.text_desc);
  std::vector<std::size_t> r_hat(n);
  std::vector<double> pair_sim(n);
  for (std::size_t j = 0; j < n; ++j) {
    r_hat[j] = argmax(image_text.row(j));
    pair_sim[j] = image_text(j, r_hat[j]);
  }
  // Assigned embeddings are description rows, so text-side neighbor
  // similarity is a lookup into the description Gram matrix.
  const RealMatrix text_text = config.metric == NeighborMetric::kText
                                   ? sim_matrix(bundle.text_desc, bundle.text_desc)
                                   : RealMatrix();

  parallel_for(n, [&](std::size_t i) {
    auto& s = state[i];
    if (s.clean) return;
    std::vector<double> score(n);
    std::vector<std::size_t> pool;
    pool.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      pool.push_back(j);
      score[j] = config.metric == NeighborMetric::kText
                     ? text_text(r_hat[i], r_hat[j])
                     : cosine(features.row(i), features.row(j));
    }
    RefinedLabel r;
    r.r_hat = r_hat[i];
    r.y_h = bundle.catalog.owner[r.r_hat];
    r.neighbors = top_k_by_weight(pool, score, config.k_n).indices;
    double mean = 0.0;
    for (std::size_t j : r.neighbors) mean += pair_sim[j];
    mean /= static_cast<double>(r.neighbors.size());
    r.delta_zeta = pair_sim[i] - mean;
    r.lambda = sigmoid(r.delta_zeta);
    s.refined = std::move(r);
  });
  return state;
}

}  // namespace adapl
