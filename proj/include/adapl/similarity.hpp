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

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include <fmt/core.h>

#include "adapl/embedding_store.hpp"
#include "adapl/errors.hpp"
#include "adapl/parallel.hpp"

namespace adapl {

namespace detail {

// Below this length the reduction is a plain left-to-right sum; above it the
// range is halved recursively. The split points depend only on the length,
// so results are reproducible regardless of threading.
inline constexpr std::size_t kPairwiseBlock = 128;

template <typename A, typename B>
double pairwise_dot(const A* u, const B* v, std::size_t n) {
  if (n <= kPairwiseBlock) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      acc += static_cast<double>(u[k]) * static_cast<double>(v[k]);
    }
    return acc;
  }
  const std::size_t half = n / 2;
  return pairwise_dot(u, v, half) + pairwise_dot(u + half, v + half, n - half);
}

}  // namespace detail

/// Dot product with f64 accumulation. For unit vectors this is the cosine.
template <typename A, typename B>
double dot(std::span<const A> u, std::span<const B> v) {
  if (u.size() != v.size()) {
    throw ValidationError(fmt::format("dimension mismatch: {} vs {}", u.size(), v.size()));
  }
  return detail::pairwise_dot(u.data(), v.data(), u.size());
}

/// Cosine similarity of two unit vectors.
template <typename A, typename B>
double cosine(std::span<const A> u, std::span<const B> v) {
  return dot(u, v);
}

/// (i, j) -> cosine(a_i, b_j). Row-parallel; each entry uses the same
/// reduction as the scalar kernel.
template <typename A, typename B>
RealMatrix sim_matrix(const Matrix<A>& a, const Matrix<B>& b) {
  if (a.dim() != b.dim() && !a.empty() && !b.empty()) {
    throw ValidationError(
        fmt::format("dimension mismatch: {} vs {}", a.dim(), b.dim()));
  }
  RealMatrix out(a.rows(), b.rows());
  parallel_for(a.rows(), [&](std::size_t i) {
    const auto ai = a.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      dst[j] = detail::pairwise_dot(ai.data(), b.row(j).data(), ai.size());
    }
  });
  return out;
}

/// softmax(tau * sims), computed with max subtraction.
std::vector<double> softmax_probs(std::span<const double> sims, double tau);

/// Index of the largest value; the lowest index wins ties.
std::size_t argmax(std::span<const double> values);

struct TopK {
  std::vector<std::size_t> indices;
  // True when fewer than k candidates were available.
  bool clamped = false;
};

/// The min(k, |candidates|) candidates with the largest weights[candidate],
/// in descending weight order, ties broken by the smaller index.
TopK top_k_by_weight(std::span<const std::size_t> candidates,
                     std::span<const double> weights, std::size_t k);

/// Rows of `pool` most cosine-similar to `query`, skipping `exclude`.
/// Descending similarity, ties by smaller row index.
template <typename A, typename B>
std::vector<std::size_t> top_k_neighbors(std::span<const A> query,
                                         const Matrix<B>& pool, std::size_t k,
                                         std::span<const std::size_t> exclude) {
  if (k == 0) throw ValidationError("k must be >= 1");
  if (query.size() != pool.dim()) {
    throw ValidationError(
        fmt::format("dimension mismatch: {} vs {}", query.size(), pool.dim()));
  }
  std::vector<std::size_t> candidates;
  std::vector<double> sims(pool.rows());
  candidates.reserve(pool.rows());
  for (std::size_t j = 0; j < pool.rows(); ++j) {
    if (std::find(exclude.begin(), exclude.end(), j) != exclude.end()) continue;
    candidates.push_back(j);
    sims[j] = detail::pairwise_dot(query.data(), pool.row(j).data(), query.size());
  }
  if (candidates.empty()) throw ValidationError("no neighbors");
  return top_k_by_weight(candidates, sims, k).indices;
}

}  // namespace adapl
