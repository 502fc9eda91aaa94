#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "jam/embedding_table.hpp"
#include "jam/model.hpp"
#include "jam/ranking.hpp"

namespace jam::testing {

inline DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& gen,
                                   double sigma = 1.0) {
  std::normal_distribution<double> nd(0.0, sigma);
  DenseMatrix m(rows, cols);
  for (auto& v : m.values()) v = static_cast<float>(nd(gen));
  return m;
}

inline std::vector<std::string> make_ids(const std::string& prefix, std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i));
  return ids;
}

/// Small random world: catalog with `dims.size()` modalities plus user and
/// query tables.
struct TinyWorld {
  Catalog catalog;
  EmbeddingTable users;
  EmbeddingTable queries;
};

inline TinyWorld tiny_world(std::size_t n_items, std::vector<std::size_t> dims, std::size_t user_dim,
                            std::size_t query_dim, std::uint64_t seed, std::size_t n_users = 6,
                            std::size_t n_queries = 4) {
  std::mt19937_64 gen(seed);
  std::vector<DenseMatrix> mods;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    mods.push_back(gaussian_matrix(n_items, dims[i], gen));
    names.push_back("m" + std::to_string(i));
  }
  return {Catalog(make_ids("item", n_items), names, std::move(mods)),
          EmbeddingTable(make_ids("user", n_users), gaussian_matrix(n_users, user_dim, gen)),
          EmbeddingTable(make_ids("query", n_queries), gaussian_matrix(n_queries, query_dim, gen))};
}

inline std::vector<std::span<const float>> item_views(const Catalog& c, std::size_t item) {
  std::vector<std::span<const float>> v;
  for (std::size_t m = 0; m < c.n_modalities(); ++m) v.push_back(c.raw(m, item));
  return v;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("jam-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace jam::testing
