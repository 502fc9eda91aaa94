#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "jam/linalg.hpp"

namespace jam {

/// Id-aligned dense embedding matrix: row r holds the vector of ids[r].
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::vector<std::string> ids, DenseMatrix matrix);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return matrix_.cols(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const DenseMatrix& matrix() const noexcept { return matrix_; }
  std::span<const float> row(std::size_t r) const { return matrix_.row(r); }

  std::optional<std::size_t> find(std::string_view id) const;
  /// Like find but throws Error(NotFound).
  std::size_t index_of(std::string_view id) const;

  bool operator==(const EmbeddingTable& o) const {
    return ids_ == o.ids_ && matrix_ == o.matrix_;
  }

 private:
  std::vector<std::string> ids_;
  DenseMatrix matrix_;
  std::unordered_map<std::string, std::size_t> index_;
};

// JAMB binary matrix format, all integers little-endian:
//   "JAMB" | u32 version (=1) | u32 rows | u32 dim | rows*dim float32 row-major
inline constexpr char kJambMagic[4] = {'J', 'A', 'M', 'B'};
inline constexpr std::uint32_t kJambVersion = 1;

void write_jamb(std::ostream& out, const DenseMatrix& m);
/// Reads one JAMB block. If `exact_payload` is set, trailing bytes are a
/// format error (used for standalone files).
DenseMatrix read_jamb(std::istream& in, bool exact_payload = false);

DenseMatrix load_jamb(const std::filesystem::path& path);
void save_jamb(const std::filesystem::path& path, const DenseMatrix& m);

std::vector<std::string> load_ids(const std::filesystem::path& path);
void save_ids(const std::filesystem::path& path, const std::vector<std::string>& ids);

EmbeddingTable load_embedding_table(const std::filesystem::path& matrix_path,
                                    const std::filesystem::path& ids_path);
void save_embedding_table(const EmbeddingTable& table, const std::filesystem::path& matrix_path,
                          const std::filesystem::path& ids_path);

/// Per-modality item embeddings sharing one item ordering.
class Catalog {
 public:
  Catalog() = default;
  Catalog(std::vector<std::string> item_ids, std::vector<std::string> modality_names,
          std::vector<DenseMatrix> modalities);

  std::size_t size() const noexcept { return item_ids_.size(); }
  std::size_t n_modalities() const noexcept { return modalities_.size(); }
  const std::vector<std::string>& item_ids() const noexcept { return item_ids_; }
  const std::vector<std::string>& modality_names() const noexcept { return names_; }
  const DenseMatrix& modality(std::size_t i) const { return modalities_.at(i); }
  std::size_t modality_dim(std::size_t i) const { return modalities_.at(i).cols(); }
  std::vector<std::size_t> modality_dims() const;
  std::size_t concat_dim() const;

  /// Raw embedding of `item` in modality `m`.
  std::span<const float> raw(std::size_t m, std::size_t item) const {
    return modalities_[m].row(item);
  }

  std::optional<std::size_t> find(std::string_view id) const;
  std::size_t index_of(std::string_view id) const;

  bool operator==(const Catalog& o) const {
    return item_ids_ == o.item_ids_ && names_ == o.names_ && modalities_ == o.modalities_;
  }

 private:
  std::vector<std::string> item_ids_;
  std::vector<std::string> names_;
  std::vector<DenseMatrix> modalities_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Manifest: {"item_ids": path, "modalities": [{"name": str, "matrix": path}, ...]}.
/// Relative paths resolve against the manifest's directory.
Catalog load_catalog(const std::filesystem::path& manifest_path);
/// Writes the manifest plus one .jamb per modality and an ids file next to it.
void save_catalog(const Catalog& catalog, const std::filesystem::path& manifest_path);

}  // namespace jam
