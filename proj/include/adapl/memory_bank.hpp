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
#include <filesystem>
#include <span>
#include <vector>

#include "adapl/embedding_store.hpp"
#include "adapl/label_state.hpp"

namespace adapl {

struct BankEntry {
  int label = 0;
  double weight = 1.0;
};

/// Per-sample (feature, working label, working weight) store. Features are
/// fixed at construction; labels and weights are replaced once per epoch.
class MemoryBank {
 public:
  MemoryBank(EmbeddingMatrix features, std::span<const BankEntry> entries,
             std::size_t num_classes);

  std::size_t size() const { return features_.rows(); }
  std::size_t num_classes() const { return num_classes_; }
  const EmbeddingMatrix& features() const { return features_; }
  std::span<const float> feature(std::size_t i) const { return features_.row(i); }
  int label(std::size_t i) const { return labels_[i]; }
  double weight(std::size_t i) const { return weights_[i]; }
  std::span<const int> labels() const { return labels_; }
  std::span<const double> weights() const { return weights_; }

 private:
  friend MemoryBank update_bank(MemoryBank bank, std::span<const LabelState> state);

  EmbeddingMatrix features_;
  std::size_t num_classes_ = 0;
  std::vector<int> labels_;
  std::vector<double> weights_;
};

struct PrototypeSet {
  RealMatrix mu;
  std::vector<std::size_t> support;
};

MemoryBank init_bank(EmbeddingMatrix features, std::span<const BankEntry> records,
                     std::size_t num_classes);

/// Confidence-weighted class means, L2-normalized. Classes with no members
/// fall back to the matching row of `fallback`.
PrototypeSet compute_prototypes(const MemoryBank& bank, const RealMatrix& fallback);

/// Clean samples keep (y_hat, omega); the rest take (y_h, lambda).
MemoryBank update_bank(MemoryBank bank, std::span<const LabelState> state);

// Checkpoint: features in blob format plus a JSON sidecar with labels,
// weights and the class count.
void save_bank(const MemoryBank& bank, const std::filesystem::path& blob,
               const std::filesystem::path& sidecar);
MemoryBank load_bank(const std::filesystem::path& blob,
                     const std::filesystem::path& sidecar);

}  // namespace adapl
