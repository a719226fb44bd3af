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
#include "adapl/pseudo_labeler.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "adapl/similarity.hpp"

namespace adapl {

RealMatrix init_text_prototypes(const EmbeddingMatrix& text_desc,
                                const ClassCatalog& catalog) {
  const std::size_t num_classes = catalog.num_classes();
  const std::size_t d = text_desc.dim();
  if (catalog.owner.size() != text_desc.rows()) {
    throw ValidationError("owner map does not cover the description rows");
  }
  RealMatrix z(num_classes, d);
  std::vector<std::size_t> count(num_classes, 0);
  for (std::size_t t = 0; t < text_desc.rows(); ++t) {
    const int c = catalog.owner[t];
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
      throw ValidationError(fmt::format("description {} has invalid owner {}", t, c));
    }
    auto dst = z.row(c);
    const auto src = text_desc.row(t);
    for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
    ++count[c];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (count[c] == 0) {
      throw ValidationError(fmt::format("class {} has no descriptions", c));
    }
    auto row = z.row(c);
    double sq = 0.0;
    for (double& v : row) {
      v /= static_cast<double>(count[c]);
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm < 1e-8) {
      throw ValidationError(fmt::format(
          "class {}: description mean has near-zero norm {:.3g}", c, norm));
    }
    for (double& v : row) v /= norm;
  }
  return z;
}

std::vector<PseudoLabelRecord> zero_shot_label(const EmbeddingMatrix& features,
                                               const RealMatrix& z, double tau,
                                               OmegaMode mode) {
  if (z.rows() < 2) throw ValidationError("zero-shot labeling needs C >= 2");
  const RealMatrix sims = sim_matrix(features, z);
  std::vector<PseudoLabelRecord> out(features.rows());
  parallel_for(features.rows(), [&](std::size_t i) {
    const auto row = sims.row(i);
    auto& rec = out[i];
    rec.probs = softmax_probs(row, tau);
    rec.y_hat = static_cast<int>(argmax(row));
    std::size_t second = rec.y_hat == 0 ? 1 : 0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (static_cast<int>(c) != rec.y_hat && row[c] > row[second]) second = c;
    }
    rec.y_second = static_cast<int>(second);
    rec.omega = mode == OmegaMode::kSoftmax
                    ? rec.probs[rec.y_hat]
                    : std::max(row[rec.y_hat], kMinRawOmega);
  });
  return out;
}

std::vector<int> predict(const EmbeddingMatrix& features, const RealMatrix& z) {
  const RealMatrix sims = sim_matrix(features, z);
  std::vector<int> out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    out[i] = static_cast<int>(argmax(sims.row(i)));
  }
  return out;
}

double evaluate_accuracy(const EmbeddingMatrix& features, const RealMatrix& z,
                         const LabelVector& truth) {
  if (truth.size() != features.rows()) {
    throw ValidationError(fmt::format("truth has {} labels for {} rows",
                                      truth.size(), features.rows()));
  }
  if (truth.empty()) return 0.0;
  const auto predicted = predict(features, z);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace adapl
