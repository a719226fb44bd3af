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
#include <vector>

#include "adapl/embedding_store.hpp"

namespace adapl {

enum class OmegaMode {
  // Winning softmax probability (nonnegative, usable as a prototype weight).
  kSoftmax,
  // Raw maximum cosine, floored at kMinRawOmega so it stays a valid weight.
  kRawCosine,
};

inline constexpr double kMinRawOmega = 1e-6;

struct PseudoLabelRecord {
  int y_hat = 0;
  double omega = 0.0;
  std::vector<double> probs;
  int y_second = 0;
};

/// Z_c = normalize(mean of the description embeddings owned by c).
RealMatrix init_text_prototypes(const EmbeddingMatrix& text_desc,
                                const ClassCatalog& catalog);

/// Nearest-prototype labeling of each feature row against Z.
std::vector<PseudoLabelRecord> zero_shot_label(
    const EmbeddingMatrix& features, const RealMatrix& z, double tau,
    OmegaMode mode = OmegaMode::kSoftmax);

/// Argmax-cosine predictions, without computing probabilities.
std::vector<int> predict(const EmbeddingMatrix& features, const RealMatrix& z);

/// Fraction of rows whose argmax-cosine class equals truth.
double evaluate_accuracy(const EmbeddingMatrix& features, const RealMatrix& z,
                         const LabelVector& truth);

}  // namespace adapl
