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
#include <optional>
#include <vector>

namespace adapl {

/// Output of neighbor-guided refinement for one noisy sample.
struct RefinedLabel {
  std::size_t r_hat = 0;  // most similar description
  int y_h = 0;            // owner(r_hat)
  double delta_zeta = 0.0;
  double lambda = 0.5;    // sigmoid(delta_zeta)
  std::vector<std::size_t> neighbors;
};

/// Per-sample pipeline state for one epoch. `refined` is present exactly when
/// the sample is not clean.
struct LabelState {
  int y_hat = 0;
  double omega = 0.0;
  int y_second = 0;
  double phi = 0.0;
  double psi = -1.0;
  bool clean = true;
  std::vector<std::size_t> cross_set;
  std::optional<RefinedLabel> refined;
};

}  // namespace adapl
