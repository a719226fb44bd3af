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
#include "adapl/pics.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include <fmt/core.h>

#include "adapl/keyed_rng.hpp"
#include "adapl/similarity.hpp"

namespace adapl {
namespace {

void check_sample(const MemoryBank& bank, std::size_t i, int own_label) {
  if (i >= bank.size()) {
    throw ValidationError(fmt::format("sample {} outside bank of {}", i, bank.size()));
  }
  if (own_label < 0 || static_cast<std::size_t>(own_label) >= bank.num_classes()) {
    throw ValidationError(fmt::format("label {} out of range", own_label));
  }
}

// Bank indices ordered by (weight desc, index asc).
std::vector<std::size_t> weight_order(const MemoryBank& bank) {
  std::vector<std::size_t> order(bank.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto w = bank.weights();
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (w[a] != w[b]) return w[a] > w[b];
    return a < b;
  });
  return order;
}

template <typename Accept>
std::vector<std::size_t> first_k(std::span<const std::size_t> order, std::size_t k,
                                 Accept accept) {
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t j : order) {
    if (out.size() == k) break;
    if (accept(j)) out.push_back(j);
  }
  return out;
}

std::vector<std::size_t> other_label_pool(const MemoryBank& bank, std::size_t i,
                                          int own_label) {
  std::vector<std::size_t> pool;
  for (std::size_t j = 0; j < bank.size(); ++j) {
    if (j != i && bank.label(j) != own_label) pool.push_back(j);
  }
  return pool;
}

}  // namespace

std::string_view to_string(CrossSetStrategy s) {
  switch (s) {
    case CrossSetStrategy::kConfidence: return "cs";
    case CrossSetStrategy::kRandom: return "rs";
    case CrossSetStrategy::kConfusion: return "fs";
  }
  return "?";
}

CrossSetStrategy parse_strategy(std::string_view name) {
  std::string lower(name);
  for (char& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "cs") return CrossSetStrategy::kConfidence;
  if (lower == "rs") return CrossSetStrategy::kRandom;
  if (lower == "fs") return CrossSetStrategy::kConfusion;
  throw ValidationError(fmt::format("unknown strategy '{}' (expected cs, rs or fs)", name));
}

double in_class_score(std::span<const float> f, const PrototypeSet& protos, int y_hat) {
  if (y_hat < 0 || static_cast<std::size_t>(y_hat) >= protos.mu.rows()) {
    throw ValidationError(fmt::format("class index {} out of range", y_hat));
  }
  return cosine(f, protos.mu.row(y_hat));
}

std::vector<std::size_t> build_cross_set_cs(const MemoryBank& bank, std::size_t i,
                                            int own_label, std::size_t k) {
  check_sample(bank, i, own_label);
  const auto pool = other_label_pool(bank, i, own_label);
  return top_k_by_weight(pool, bank.weights(), k).indices;
}

std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool,
                                                    std::size_t k, RandomSetKey key,
                                                    std::size_t sample) {
  if (pool.size() <= k) return pool;
  KeyedStream stream(key.seed, key.epoch, sample);
  for (std::size_t t = 0; t < k; ++t) {
    const std::size_t j = t + stream.uniform_below(pool.size() - t);
    std::swap(pool[t], pool[j]);
  }
  pool.resize(k);
  return pool;
}

std::vector<std::size_t> build_cross_set_rs(const MemoryBank& bank, std::size_t i,
                                            int own_label, std::size_t k,
                                            RandomSetKey key) {
  check_sample(bank, i, own_label);
  if (k == 0) throw ValidationError("k must be >= 1");
  return sample_without_replacement(other_label_pool(bank, i, own_label), k, key, i);
}

std::vector<std::size_t> build_cross_set_fs(const MemoryBank& bank, std::size_t i,
                                            int own_label, int y_second,
                                            std::size_t k) {
  check_sample(bank, i, own_label);
  if (y_second == own_label) {
    throw ValidationError("confused class must differ from the sample's label");
  }
  std::vector<std::size_t> pool;
  for (std::size_t j = 0; j < bank.size(); ++j) {
    if (j != i && bank.label(j) == y_second) pool.push_back(j);
  }
  return top_k_by_weight(pool, bank.weights(), k).indices;
}

double cross_class_separation(std::span<const float> f,
                              std::span<const std::size_t> cross_set,
                              const MemoryBank& bank) {
  if (cross_set.empty()) return kEmptySetSeparation;
  double total = 0.0;
  for (std::size_t j : cross_set) total += cosine(f, bank.feature(j));
  return total / static_cast<double>(cross_set.size());
}

std::vector<bool> clean_mask(std::span<const double> phi, std::span<const double> psi) {
  if (phi.size() != psi.size()) {
    throw ValidationError("clean_mask: phi and psi lengths differ");
  }
  std::vector<bool> mask(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) mask[i] = phi[i] > psi[i];
  return mask;
}

std::vector<bool> threshold_filter(std::span<const PseudoLabelRecord> records,
                                   double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ValidationError(fmt::format("threshold {} outside (0, 1)", threshold));
  }
  std::vector<bool> mask(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& p = records[i].probs;
    mask[i] = !p.empty() && *std::max_element(p.begin(), p.end()) >= threshold;
  }
  return mask;
}

PicsScores score_samples(const MemoryBank& bank, const PrototypeSet& protos,
                         std::span<const PseudoLabelRecord> records,
                         const PicsConfig& config) {
  const std::size_t n = bank.size();
  if (records.size() != n) {
    throw ValidationError(fmt::format("score_samples: {} records for bank of {}",
                                      records.size(), n));
  }
  if (config.k == 0) throw ValidationError("k must be >= 1");

  // One ordering per epoch serves every top-k query.
  const auto order = weight_order(bank);
  std::vector<std::vector<std::size_t>> class_order(bank.num_classes());
  for (std::size_t j : order) class_order[bank.label(j)].push_back(j);

  PicsScores out;
  out.phi.resize(n);
  out.psi.resize(n);
  out.cross_set.resize(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& rec = records[i];
    const int own = rec.y_hat;
    check_sample(bank, i, own);
    std::vector<std::size_t> set;
    switch (config.strategy) {
      case CrossSetStrategy::kConfidence:
        set = first_k(order, config.k, [&](std::size_t j) {
          return j != i && bank.label(j) != own;
        });
        break;
      case CrossSetStrategy::kRandom:
        set = sample_without_replacement(other_label_pool(bank, i, own), config.k,
                                         config.key, i);
        break;
      case CrossSetStrategy::kConfusion:
        if (rec.y_second == own) {
          throw ValidationError("confused class must differ from the sample's label");
        }
        set = first_k(class_order[rec.y_second], config.k,
                      [&](std::size_t j) { return j != i; });
        break;
    }
    const auto f = bank.feature(i);
    out.phi[i] = in_class_score(f, protos, own);
    out.psi[i] = cross_class_separation(f, set, bank);
    out.cross_set[i] = std::move(set);
  });
  out.clean = clean_mask(out.phi, out.psi);
  return out;
}

}  // namespace adapl
