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
#include "adapl/similarity.hpp"

#include <cmath>

namespace adapl {

std::vector<double> softmax_probs(std::span<const double> sims, double tau) {
  if (!(tau > 0.0)) {
    throw ValidationError(fmt::format("tau must be positive, got {}", tau));
  }
  std::vector<double> out(sims.size());
  if (sims.empty()) return out;
  const double peak = tau * *std::max_element(sims.begin(), sims.end());
  double total = 0.0;
  for (std::size_t c = 0; c < sims.size(); ++c) {
    out[c] = std::exp(tau * sims[c] - peak);
    total += out[c];
  }
  for (double& p : out) p /= total;
  return out;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < values.size(); ++c) {
    if (values[c] > values[best]) best = c;
  }
  return best;
}

TopK top_k_by_weight(std::span<const std::size_t> candidates,
                     std::span<const double> weights, std::size_t k) {
  if (k == 0) throw ValidationError("k must be >= 1");
  TopK result;
  result.indices.assign(candidates.begin(), candidates.end());
  result.clamped = result.indices.size() < k;
  const std::size_t take = std::min(k, result.indices.size());
  auto before = [&](std::size_t a, std::size_t b) {
    if (weights[a] != weights[b]) return weights[a] > weights[b];
    return a < b;
  };
  std::partial_sort(result.indices.begin(), result.indices.begin() + take,
                    result.indices.end(), before);
  result.indices.resize(take);
  return result;
}

}  // namespace adapl
