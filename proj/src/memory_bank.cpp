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
#include "adapl/memory_bank.hpp"

#include <cmath>
#include <fstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

namespace adapl {
namespace {

void check_entry(const BankEntry& e, std::size_t i, std::size_t num_classes) {
  if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
    throw ValidationError(
        fmt::format("bank record {}: weight {} is not positive", i, e.weight));
  }
  if (e.label < 0 || static_cast<std::size_t>(e.label) >= num_classes) {
    throw ValidationError(fmt::format("bank record {}: label {} outside [0, {})",
                                      i, e.label, num_classes));
  }
}

}  // namespace

MemoryBank::MemoryBank(EmbeddingMatrix features, std::span<const BankEntry> entries,
                       std::size_t num_classes)
    : features_(std::move(features)), num_classes_(num_classes) {
  if (entries.size() != features_.rows()) {
    throw ValidationError(fmt::format("bank: {} records for {} features",
                                      entries.size(), features_.rows()));
  }
  labels_.reserve(entries.size());
  weights_.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    check_entry(entries[i], i, num_classes_);
    labels_.push_back(entries[i].label);
    weights_.push_back(entries[i].weight);
  }
}

MemoryBank init_bank(EmbeddingMatrix features, std::span<const BankEntry> records,
                     std::size_t num_classes) {
  return MemoryBank(std::move(features), records, num_classes);
}

PrototypeSet compute_prototypes(const MemoryBank& bank, const RealMatrix& fallback) {
  if (bank.size() == 0) throw ValidationError("bank is empty");
  const std::size_t num_classes = bank.num_classes();
  const std::size_t d = bank.features().dim();
  if (fallback.rows() != num_classes || fallback.dim() != d) {
    throw ValidationError("fallback prototypes have the wrong shape");
  }
  PrototypeSet out{RealMatrix(num_classes, d), std::vector<std::size_t>(num_classes, 0)};
  std::vector<double> mass(num_classes, 0.0);
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const int c = bank.label(i);
    const double w = bank.weight(i);
    auto dst = out.mu.row(c);
    const auto f = bank.feature(i);
    for (std::size_t k = 0; k < d; ++k) dst[k] += w * static_cast<double>(f[k]);
    mass[c] += w;
    ++out.support[c];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto row = out.mu.row(c);
    double sq = 0.0;
    if (out.support[c] > 0) {
      for (double& v : row) {
        v /= mass[c];
        sq += v * v;
      }
    }
    const double norm = std::sqrt(sq);
    // Empty class, or members that cancel exactly: use the text prototype.
    if (out.support[c] == 0 || norm < 1e-12) {
      const auto src = fallback.row(c);
      std::copy(src.begin(), src.end(), row.begin());
      continue;
    }
    for (double& v : row) v /= norm;
  }
  return out;
}

MemoryBank update_bank(MemoryBank bank, std::span<const LabelState> state) {
  if (state.size() != bank.size()) {
    throw ValidationError(fmt::format("update_bank: {} states for {} records",
                                      state.size(), bank.size()));
  }
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto& s = state[i];
    BankEntry e;
    if (s.clean) {
      e = {s.y_hat, s.omega};
    } else {
      if (!s.refined) {
        throw ValidationError(
            fmt::format("update_bank: noisy sample {} has no refinement", i));
      }
      const double lambda = s.refined->lambda;
      if (!(lambda > 0.0 && lambda < 1.0)) {
        throw ValidationError(
            fmt::format("update_bank: lambda {} of sample {} outside (0, 1)", lambda, i));
      }
      e = {s.refined->y_h, lambda};
    }
    check_entry(e, i, bank.num_classes_);
    bank.labels_[i] = e.label;
    bank.weights_[i] = e.weight;
  }
  return bank;
}

void save_bank(const MemoryBank& bank, const std::filesystem::path& blob,
               const std::filesystem::path& sidecar) {
  write_blob(blob, bank.features());
  nlohmann::json meta;
  meta["version"] = kFormatVersion;
  meta["N"] = bank.size();
  meta["d"] = bank.features().dim();
  meta["C"] = bank.num_classes();
  meta["labels"] = std::vector<int>(bank.labels().begin(), bank.labels().end());
  meta["weights"] = std::vector<double>(bank.weights().begin(), bank.weights().end());
  std::ofstream out(sidecar, std::ios::trunc);
  out << meta.dump(2) << "\n";
  if (!out) throw IoError(fmt::format("write failure on {}", sidecar.string()));
}

MemoryBank load_bank(const std::filesystem::path& blob,
                     const std::filesystem::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) throw ValidationError(fmt::format("missing file {}", sidecar.string()));
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("{}: {}", sidecar.string(), e.what()));
  }
  std::size_t n = 0, d = 0, c = 0;
  std::vector<int> labels;
  std::vector<double> weights;
  try {
    n = meta.at("N").get<std::size_t>();
    d = meta.at("d").get<std::size_t>();
    c = meta.at("C").get<std::size_t>();
    labels = meta.at("labels").get<std::vector<int>>();
    weights = meta.at("weights").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("{}: {}", sidecar.string(), e.what()));
  }
  if (labels.size() != n || weights.size() != n) {
    throw ValidationError(fmt::format("{}: label/weight count differs from N={}",
                                      sidecar.string(), n));
  }
  std::vector<BankEntry> entries(n);
  for (std::size_t i = 0; i < n; ++i) entries[i] = {labels[i], weights[i]};
  return MemoryBank(read_blob(blob, n, d), entries, c);
}

}  // namespace adapl
