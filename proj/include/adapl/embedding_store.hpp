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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adapl/errors.hpp"

namespace adapl {

/// Dense row-major matrix. Rows are exposed as spans so kernels never
/// touch raw pointers.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t dim)
      : rows_(rows), dim_(dim), data_(rows * dim, T{}) {}
  Matrix(std::size_t rows, std::size_t dim, std::vector<T> data)
      : rows_(rows), dim_(dim), data_(std::move(data)) {
    if (data_.size() != rows_ * dim_) {
      throw ValidationError("matrix payload size does not match shape");
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return rows_ == 0; }

  std::span<const T> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  std::span<T> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

  const T& operator()(std::size_t i, std::size_t j) const {
    return data_[i * dim_ + j];
  }
  T& operator()(std::size_t i, std::size_t j) { return data_[i * dim_ + j]; }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<T> data_;
};

/// Storage precision for embeddings (cosine space, unitless).
using EmbeddingMatrix = Matrix<float>;
/// Accumulation precision for prototypes, parameters, and gradients.
using RealMatrix = Matrix<double>;

RealMatrix to_real(const EmbeddingMatrix& m);
EmbeddingMatrix to_embedding(const RealMatrix& m);

using LabelVector = std::vector<int>;

struct ClassCatalog {
  std::vector<std::string> class_names;
  std::vector<std::string> descriptions;
  // owner[t] is the class that description t belongs to.
  std::vector<int> owner;
  // Learnable text prototypes, one row per class.
  EmbeddingMatrix z;

  std::size_t num_classes() const { return class_names.size(); }
};

struct EmbeddingBundle {
  EmbeddingMatrix weak;
  EmbeddingMatrix strong;
  std::optional<EmbeddingMatrix> test;
  EmbeddingMatrix text_desc;
  ClassCatalog catalog;
  // Evaluation only. Nothing on the training path reads these.
  std::optional<LabelVector> truth_train;
  std::optional<LabelVector> truth_test;

  std::size_t num_classes() const { return catalog.num_classes(); }
  std::size_t dim() const { return weak.dim(); }
};

inline constexpr double kUnitNormTolerance = 1e-5;

/// Returns a copy with every row scaled to unit Euclidean norm.
/// Throws ValidationError naming the first all-zero row.
EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m);
RealMatrix normalize_rows(const RealMatrix& m);

/// Throws ValidationError unless every entry is finite and every row norm is
/// within `tol` of 1. `what` prefixes the message.
void check_unit_rows(const EmbeddingMatrix& m, const std::string& what,
                     double tol = kUnitNormTolerance);

/// Full invariant check: shapes, finiteness, unit norms, catalog ownership,
/// truth ranges.
void validate_bundle(const EmbeddingBundle& bundle);

struct LoadOptions {
  // Normalize rows on load even when the manifest claims they already are.
  bool renormalize = false;
};

EmbeddingBundle load_bundle(const std::filesystem::path& dir,
                            const LoadOptions& options = {});
void save_bundle(const EmbeddingBundle& bundle,
                 const std::filesystem::path& dir);

// Single blob I/O: 8-byte header (magic "ALPE", u16 version, u16 reserved)
// followed by little-endian f32 row-major payload.
inline constexpr char kBlobMagic[4] = {'A', 'L', 'P', 'E'};
inline constexpr std::uint16_t kFormatVersion = 1;

void write_blob(const std::filesystem::path& file, const EmbeddingMatrix& m);
EmbeddingMatrix read_blob(const std::filesystem::path& file, std::size_t rows,
                          std::size_t dim);

}  // namespace adapl
