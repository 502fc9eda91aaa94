#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "jam/checkpoint.hpp"
#include "jam/dataset.hpp"
#include "jam/ranking.hpp"
#include "jam/rng.hpp"
#include "jam/train.hpp"

namespace jam {

// ---- Random ---------------------------------------------------------------

/// Uniform random permutation prefix of [0, n_items). Throws when k > n_items.
RankedList random_rank(SeededRng& rng, std::size_t n_items, std::size_t k);

/// Draws each ranking from a generator keyed by (seed, query salt). Scores are
/// descending placeholders (k - position).
class RandomRanker final : public Recommender {
 public:
  RandomRanker(std::size_t n_items, std::uint64_t seed) : n_items_(n_items), seed_(seed) {}
  std::string name() const override { return "Random"; }
  bool uses_query() const override { return false; }
  bool uses_user() const override { return false; }
  RankedList rank(const RankQuery& query, std::size_t k) const override;

 private:
  std::size_t n_items_;
  std::uint64_t seed_;
};

// ---- Pop ------------------------------------------------------------------

struct PopModel {
  std::vector<std::uint64_t> counts;  // one per catalog item
};

/// Counts every item once per train record that lists it.
PopModel build_pop(const TripletDataset& train, std::size_t n_items);

/// Count descending, ties by ascending index.
RankedList pop_rank(const PopModel& pm, std::size_t k);

class PopRanker final : public Recommender {
 public:
  explicit PopRanker(PopModel pm);
  std::string name() const override { return "Pop"; }
  bool uses_query() const override { return false; }
  bool uses_user() const override { return false; }
  RankedList rank(const RankQuery&, std::size_t k) const override;

 private:
  PopModel pm_;
  RankedList full_;
};

// ---- TwoTower -------------------------------------------------------------

/// Two affine layers per tower with a ReLU between. The item tower reads the
/// concatenation of all modality embeddings; there is no query input.
struct TwoTowerParams {
  DenseMatrix user1, user1_bias, user2, user2_bias;  // h x du, h x 1, d x h, d x 1
  DenseMatrix item1, item1_bias, item2, item2_bias;  // h x dc, h x 1, d x h, d x 1

  std::size_t d() const noexcept { return user2.rows(); }
  std::size_t hidden() const noexcept { return user1.rows(); }
  std::vector<DenseMatrix*> tensors();
  std::vector<const DenseMatrix*> tensors() const;
};

inline constexpr std::size_t kTwoTowerHidden = 256;

TwoTowerParams init_twotower(std::size_t user_dim, std::size_t concat_dim, std::size_t d,
                             std::size_t hidden, SeededRng& rng);

std::vector<float> concat_item(const Catalog& catalog, std::size_t item);
std::vector<double> user_tower(const TwoTowerParams& p, std::span<const float> raw_user);
std::vector<double> item_tower(const TwoTowerParams& p, std::span<const float> concat);
double twotower_score(const TwoTowerParams& p, std::span<const float> raw_user,
                      std::span<const float> concat);

/// Precomputes the item tower over the catalog.
class TwoTowerRanker final : public Recommender {
 public:
  TwoTowerRanker(const TwoTowerParams& p, const Catalog& catalog, std::size_t threads = 1);
  std::string name() const override { return "TwoTower"; }
  bool uses_query() const override { return false; }
  bool uses_user() const override { return true; }
  RankedList rank(const RankQuery& query, std::size_t k) const override;

 private:
  const TwoTowerParams& params_;
  Matrix<double> item_out_;  // n_items x d
  std::size_t threads_;
};

/// BPR over twotower_score with the shared epoch loop.
class TwoTowerTrainable final : public Trainable {
 public:
  explicit TwoTowerTrainable(TwoTowerParams p) : params_(std::move(p)) {}
  std::string name() const override { return "TwoTower"; }
  std::vector<DenseMatrix*> parameters() override { return params_.tensors(); }
  double batch_loss(const TrainData& data, const Batch& batch,
                    std::vector<Matrix<double>>& grads) override;
  std::unique_ptr<Recommender> ranker(const TrainData& data) const override;
  const TwoTowerParams& params() const noexcept { return params_; }

 private:
  TwoTowerParams params_;
};

// ---- TalkRec --------------------------------------------------------------

/// Per-modality projections plus a query projection into a shared space.
/// Views are L2-normalised, so similarities are cosines scaled by 1/tau.
struct TalkRecParams {
  std::vector<DenseMatrix> item;  // d x dim_i
  DenseMatrix query;              // d x dim_q
  double tau = 0.07;

  std::size_t d() const noexcept { return query.rows(); }
  std::vector<DenseMatrix*> tensors();
  std::vector<const DenseMatrix*> tensors() const;
};

TalkRecParams init_talkrec(std::size_t query_dim, const std::vector<std::size_t>& item_dims,
                           std::size_t d, double tau, SeededRng& rng);

/// Aligned (query, item) pairs; items[b][m] is modality m of pair b.
struct TalkRecBatch {
  std::vector<std::span<const float>> queries;
  std::vector<std::vector<std::span<const float>>> items;
};

/// Symmetric InfoNCE with in-batch negatives, averaged over every unordered
/// pair of views (the item modalities plus the query) and both directions.
/// Writes gradients parallel to tensors() when `grads` is non-null.
double talkrec_loss(const TalkRecParams& p, const TalkRecBatch& batch,
                    std::vector<Matrix<double>>* grads = nullptr);

/// Unit-normalised query projection.
std::vector<double> talkrec_query(const TalkRecParams& p, std::span<const float> raw_query);
/// Mean over modalities of the unit-normalised modality projections.
std::vector<double> talkrec_item(const TalkRecParams& p,
                                 std::span<const std::span<const float>> raw_item);

RankedList talkrec_rank(const TalkRecParams& p, const Catalog& catalog,
                        std::span<const float> raw_query, std::size_t k);

class TalkRecRanker final : public Recommender {
 public:
  TalkRecRanker(const TalkRecParams& p, const Catalog& catalog, std::size_t threads = 1);
  std::string name() const override { return "TalkRec"; }
  bool uses_query() const override { return true; }
  bool uses_user() const override { return false; }
  RankedList rank(const RankQuery& query, std::size_t k) const override;

 private:
  const TalkRecParams& params_;
  Matrix<double> item_out_;
  std::size_t threads_;
};

class TalkRecTrainable final : public Trainable {
 public:
  explicit TalkRecTrainable(TalkRecParams p) : params_(std::move(p)) {}
  std::string name() const override { return "TalkRec"; }
  std::vector<DenseMatrix*> parameters() override { return params_.tensors(); }
  std::size_t negatives_needed(const TrainConfig&) const override { return 0; }
  /// Batches of one pair carry no in-batch negatives and contribute nothing.
  double batch_loss(const TrainData& data, const Batch& batch,
                    std::vector<Matrix<double>>& grads) override;
  std::unique_ptr<Recommender> ranker(const TrainData& data) const override;
  const TalkRecParams& params() const noexcept { return params_; }

 private:
  TalkRecParams params_;
};

// ---- Checkpoints ----------------------------------------------------------

Checkpoint twotower_checkpoint(const TwoTowerParams& p);
TwoTowerParams twotower_from(const Checkpoint& ckpt);
Checkpoint talkrec_checkpoint(const TalkRecParams& p);
TalkRecParams talkrec_from(const Checkpoint& ckpt);
Checkpoint pop_checkpoint(const PopModel& pm);
PopModel pop_from(const Checkpoint& ckpt);
Checkpoint random_checkpoint(std::size_t n_items, std::uint64_t seed);

}  // namespace jam
