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
#include "adapl/embedding_store.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

namespace adapl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(sizeof(float) == 4);
static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

constexpr std::size_t kHeaderBytes = 8;

std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) |
         (v >> 24);
}

void put_u16_le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

std::uint16_t get_u16_le(const std::string& in, std::size_t at) {
  return static_cast<std::uint16_t>(
      static_cast<unsigned char>(in[at]) |
      (static_cast<unsigned char>(in[at + 1]) << 8));
}

std::string read_file(const fs::path& file) {
  std::error_code ec;
  if (!fs::exists(file, ec)) {
    throw ValidationError(fmt::format("missing file {}", file.string()));
  }
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw IoError(fmt::format("cannot open {}", file.string()));
  }
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw IoError(fmt::format("read failure on {}", file.string()));
  }
  return bytes;
}

void write_file(const fs::path& file, const std::string& bytes) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError(fmt::format("cannot open {} for writing", file.string()));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) {
    throw IoError(fmt::format("write failure on {}", file.string()));
  }
}

template <typename T>
Matrix<T> normalize_impl(const Matrix<T>& m) {
  Matrix<T> out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sq = 0.0;
    for (T v : m.row(i)) sq += static_cast<double>(v) * static_cast<double>(v);
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw ValidationError(
          fmt::format("cannot normalize row {}: zero or non-finite norm", i));
    }
    for (T& v : out.row(i)) {
      v = static_cast<T>(static_cast<double>(v) / norm);
    }
  }
  return out;
}

void check_labels(const LabelVector& labels, std::size_t expected_size,
                  std::size_t num_classes, const std::string& what) {
  if (labels.size() != expected_size) {
    throw ValidationError(fmt::format("{}: {} labels for {} rows", what,
                                      labels.size(), expected_size));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ValidationError(fmt::format("{}: label {} at index {} outside [0, {})",
                                        what, labels[i], i, num_classes));
    }
  }
}

template <typename T>
T required(const json& manifest, const char* key) {
  if (!manifest.contains(key)) {
    throw ValidationError(fmt::format("manifest.json: missing key '{}'", key));
  }
  try {
    return manifest.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(
        fmt::format("manifest.json: bad value for '{}': {}", key, e.what()));
  }
}

}  // namespace

RealMatrix to_real(const EmbeddingMatrix& m) {
  RealMatrix out(m.rows(), m.dim());
  auto src = m.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
  return out;
}

EmbeddingMatrix to_embedding(const RealMatrix& m) {
  EmbeddingMatrix out(m.rows(), m.dim());
  auto src = m.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<float>(src[i]);
  }
  return out;
}

EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m) {
  return normalize_impl(m);
}

RealMatrix normalize_rows(const RealMatrix& m) { return normalize_impl(m); }

void check_unit_rows(const EmbeddingMatrix& m, const std::string& what,
                     double tol) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sq = 0.0;
    for (float v : m.row(i)) {
      if (!std::isfinite(v)) {
        throw ValidationError(fmt::format("{}: non-finite entry in row {}", what, i));
      }
      sq += static_cast<double>(v) * v;
    }
    const double norm = std::sqrt(sq);
    if (std::abs(norm - 1.0) > tol) {
      throw ValidationError(
          fmt::format("{}: row {} has norm {:.9g}, expected unit norm", what, i,
                      norm));
    }
  }
}

void validate_bundle(const EmbeddingBundle& b) {
  const std::size_t d = b.weak.dim();
  const std::size_t num_classes = b.catalog.num_classes();
  if (b.weak.rows() < 1) throw ValidationError("weak: N must be >= 1");
  if (d < 2) throw ValidationError("weak: d must be >= 2");
  if (b.strong.rows() != b.weak.rows()) {
    throw ValidationError(fmt::format("strong has {} rows, weak has {}",
                                      b.strong.rows(), b.weak.rows()));
  }
  if (num_classes < 1) throw ValidationError("catalog: no classes");
  auto check_dim = [d](const EmbeddingMatrix& m, const char* what) {
    if (m.dim() != d) {
      throw ValidationError(
          fmt::format("dimension mismatch: {} has d={}, weak has d={}", what,
                      m.dim(), d));
    }
  };
  check_dim(b.strong, "strong");
  check_dim(b.text_desc, "textdesc");
  check_dim(b.catalog.z, "z_init");
  if (b.test) check_dim(*b.test, "test");

  const auto& cat = b.catalog;
  if (cat.descriptions.size() != b.text_desc.rows() ||
      cat.owner.size() != b.text_desc.rows()) {
    throw ValidationError(fmt::format(
        "catalog: {} descriptions and {} owners for {} description rows",
        cat.descriptions.size(), cat.owner.size(), b.text_desc.rows()));
  }
  if (cat.z.rows() != num_classes) {
    throw ValidationError(fmt::format("z_init has {} rows for {} classes",
                                      cat.z.rows(), num_classes));
  }
  if (b.text_desc.rows() % num_classes != 0) {
    throw ValidationError(fmt::format(
        "catalog: {} descriptions is not a multiple of C={}",
        b.text_desc.rows(), num_classes));
  }
  std::vector<int> owned(num_classes, 0);
  for (std::size_t t = 0; t < cat.owner.size(); ++t) {
    const int c = cat.owner[t];
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
      throw ValidationError(
          fmt::format("catalog: description {} owned by invalid class {}", t, c));
    }
    ++owned[c];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (owned[c] == 0) {
      throw ValidationError(
          fmt::format("catalog: class {} owns no descriptions", c));
    }
  }

  check_unit_rows(b.weak, "weak");
  check_unit_rows(b.strong, "strong");
  check_unit_rows(b.text_desc, "textdesc");
  check_unit_rows(cat.z, "z_init");
  if (b.test) check_unit_rows(*b.test, "test");

  if (b.truth_train) {
    check_labels(*b.truth_train, b.weak.rows(), num_classes, "truth_train");
  }
  if (b.truth_test) {
    if (!b.test) throw ValidationError("truth_test present without test split");
    check_labels(*b.truth_test, b.test->rows(), num_classes, "truth_test");
  }
}

void write_blob(const fs::path& file, const EmbeddingMatrix& m) {
  std::string bytes;
  bytes.reserve(kHeaderBytes + m.data().size() * 4);
  bytes.append(kBlobMagic, 4);
  put_u16_le(bytes, kFormatVersion);
  put_u16_le(bytes, 0);
  for (float v : m.data()) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
    std::array<char, 4> raw;
    std::memcpy(raw.data(), &bits, 4);
    bytes.append(raw.data(), 4);
  }
  write_file(file, bytes);
}

EmbeddingMatrix read_blob(const fs::path& file, std::size_t rows,
                          std::size_t dim) {
  const std::string bytes = read_file(file);
  const std::string name = file.filename().string();
  if (bytes.size() < kHeaderBytes) {
    throw ValidationError(fmt::format(
        "{}: truncated header at offset 0 ({} bytes)", name, bytes.size()));
  }
  if (std::memcmp(bytes.data(), kBlobMagic, 4) != 0) {
    throw ValidationError(fmt::format("{}: bad magic at offset 0", name));
  }
  if (const auto version = get_u16_le(bytes, 4); version != kFormatVersion) {
    throw ValidationError(
        fmt::format("{}: unsupported version {} at offset 4", name, version));
  }
  if (const auto reserved = get_u16_le(bytes, 6); reserved != 0) {
    throw ValidationError(
        fmt::format("{}: nonzero reserved field at offset 6", name));
  }

  const std::size_t payload = bytes.size() - kHeaderBytes;
  const std::size_t expected = rows * dim * 4;
  if (payload != expected) {
    if (rows > 0 && payload % (rows * 4) == 0) {
      throw ValidationError(fmt::format(
          "{}: dimension mismatch: manifest d={}, blob holds d={} for {} rows",
          name, dim, payload / (rows * 4), rows));
    }
    if (payload < expected) {
      throw ValidationError(fmt::format(
          "{}: truncated blob: payload ends at offset {}, expected {}", name,
          bytes.size(), kHeaderBytes + expected));
    }
    throw ValidationError(fmt::format("{}: trailing bytes after offset {}", name,
                                      kHeaderBytes + expected));
  }

  EmbeddingMatrix m(rows, dim);
  auto out = m.data();
  for (std::size_t k = 0; k < out.size(); ++k) {
    const std::size_t offset = kHeaderBytes + 4 * k;
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + offset, 4);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
    const float v = std::bit_cast<float>(bits);
    if (!std::isfinite(v)) {
      throw ValidationError(
          fmt::format("{}: non-finite value at offset {} (row {}, col {})", name,
                      offset, k / dim, k % dim));
    }
    out[k] = v;
  }
  return m;
}

EmbeddingBundle load_bundle(const fs::path& dir, const LoadOptions& options) {
  const std::string text = read_file(dir / "manifest.json");
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("manifest.json: parse error at byte {}: {}",
                                      e.byte, e.what()));
  }

  const auto version = required<int>(manifest, "version");
  if (version != kFormatVersion) {
    throw ValidationError(
        fmt::format("manifest.json: unsupported version {}", version));
  }
  const auto n = required<std::size_t>(manifest, "N");
  const auto d = required<std::size_t>(manifest, "d");
  const auto c = required<std::size_t>(manifest, "C");
  const auto m = required<std::size_t>(manifest, "M");

  EmbeddingBundle b;
  b.catalog.class_names = required<std::vector<std::string>>(manifest, "class_names");
  b.catalog.descriptions = required<std::vector<std::string>>(manifest, "descriptions");
  b.catalog.owner = required<std::vector<int>>(manifest, "owner");
  if (b.catalog.class_names.size() != c) {
    throw ValidationError(fmt::format("manifest.json: C={} but {} class names", c,
                                      b.catalog.class_names.size()));
  }
  if (b.catalog.descriptions.size() != c * m) {
    throw ValidationError(fmt::format(
        "manifest.json: C*M={} but {} descriptions", c * m,
        b.catalog.descriptions.size()));
  }

  const json blobs = manifest.value("blobs", json::object());
  auto blob_name = [&](const char* key, const char* fallback) {
    return blobs.value(key, std::string(fallback));
  };
  b.weak = read_blob(dir / blob_name("weak", "weak.f32"), n, d);
  b.strong = read_blob(dir / blob_name("strong", "strong.f32"), n, d);
  b.text_desc = read_blob(dir / blob_name("textdesc", "textdesc.f32"), c * m, d);
  b.catalog.z = read_blob(dir / blob_name("z_init", "z_init.f32"), c, d);
  if (blobs.contains("test")) {
    const auto n_test = required<std::size_t>(manifest, "N_test");
    b.test = read_blob(dir / blobs.at("test").get<std::string>(), n_test, d);
  }
  if (manifest.contains("truth_train")) {
    b.truth_train = required<LabelVector>(manifest, "truth_train");
  }
  if (manifest.contains("truth_test")) {
    b.truth_test = required<LabelVector>(manifest, "truth_test");
  }

  const bool normalized =
      manifest.value("flags", json::object()).value("normalized", true);
  if (!normalized || options.renormalize) {
    b.weak = normalize_rows(b.weak);
    b.strong = normalize_rows(b.strong);
    b.text_desc = normalize_rows(b.text_desc);
    b.catalog.z = normalize_rows(b.catalog.z);
    if (b.test) b.test = normalize_rows(*b.test);
  }
  validate_bundle(b);
  return b;
}

void save_bundle(const EmbeddingBundle& b, const fs::path& dir) {
  validate_bundle(b);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  }

  const std::size_t c = b.num_classes();
  json manifest;
  manifest["version"] = kFormatVersion;
  manifest["N"] = b.weak.rows();
  manifest["N_test"] = b.test ? b.test->rows() : 0;
  manifest["d"] = b.dim();
  manifest["C"] = c;
  manifest["M"] = b.text_desc.rows() / c;
  manifest["class_names"] = b.catalog.class_names;
  manifest["descriptions"] = b.catalog.descriptions;
  manifest["owner"] = b.catalog.owner;
  manifest["flags"] = {{"normalized", true}};
  json blobs = {{"weak", "weak.f32"},
                {"strong", "strong.f32"},
                {"textdesc", "textdesc.f32"},
                {"z_init", "z_init.f32"}};
  if (b.test) blobs["test"] = "test.f32";
  manifest["blobs"] = blobs;
  if (b.truth_train) manifest["truth_train"] = *b.truth_train;
  if (b.truth_test) manifest["truth_test"] = *b.truth_test;

  write_blob(dir / "weak.f32", b.weak);
  write_blob(dir / "strong.f32", b.strong);
  write_blob(dir / "textdesc.f32", b.text_desc);
  write_blob(dir / "z_init.f32", b.catalog.z);
  if (b.test) write_blob(dir / "test.f32", *b.test);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace adapl
