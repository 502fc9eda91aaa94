#pragma once

#include <cstdint>
#include <vector>

#include "jam/dataset.hpp"

namespace jam {

/// Planted-structure world. Ground-truth latents live in a `latent_dim`
/// generating space; every observable embedding is a noisy affine image of a
/// latent, so a model has to learn the inverse maps to recover relevance.
struct SynthConfig {
  std::size_t n_users = 500;
  std::size_t n_queries = 50;
  std::size_t n_items = 2000;
  std::size_t latent_dim = 32;
  std::size_t n_mod = 3;
  double noise_sigma = 0.05;
  /// Probability that a non-preferred modality of a planted item encodes an
  /// unrelated latent instead of the item's own. Each query prefers modality
  /// (query index mod n_mod), so informativeness becomes query-dependent.
  double distractor_overlap = 0.0;
  std::uint64_t seed = 7;

  /// Interaction records to draw; 0 means 3 * n_items. Pairs recur across
  /// days, the way repeated searches do.
  std::size_t n_records = 0;
  /// Share of the catalog that is planted for some (user, query) pair.
  double planted_fraction = 0.75;
  std::size_t n_days = 7;
  std::int64_t start_timestamp = 1740787200;  // 2025-03-01T00:00:00Z

  void validate() const;
};

struct SynthWorld {
  Catalog catalog;
  EmbeddingTable users;
  EmbeddingTable queries;
  TripletDataset triplets;

  // Generating-space ground truth (not visible to models).
  Matrix<double> user_latents;   // n_users x latent_dim
  Matrix<double> query_latents;  // n_queries x latent_dim
  Matrix<double> item_latents;   // n_items x latent_dim, unit rows
  /// Planted item for each record, parallel to triplets.records.
  std::vector<std::uint32_t> planted_item;
};

SynthWorld synth_generate(const SynthConfig& cfg);

/// Writes catalog.json (+ modality files), users/queries tables and
/// triplets.jsonl into `dir`.
void save_world(const SynthWorld& world, const std::filesystem::path& dir);

}  // namespace jam
