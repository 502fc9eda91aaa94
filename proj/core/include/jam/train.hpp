#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "jam/dataset.hpp"
#include "jam/model.hpp"
#include "jam/ranking.hpp"
#include "jam/rng.hpp"

namespace jam {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 512;
  std::size_t n_negatives = 4;
  double lr_max = 1e-3;
  double lr_min = 0.0;
  double weight_decay = 1e-2;
  std::size_t patience = 10;
  std::uint64_t seed = 1;
  std::size_t d = 128;
  /// Worker threads for validation ranking. Does not change results.
  std::size_t threads = 1;

  /// Throws Error(Usage) on out-of-range values.
  void validate() const;
};

/// One (user, query, positive item) training example. `record` indexes the
/// source record, whose full relevant set is excluded from negatives.
struct TrainTriplet {
  std::uint32_t user = 0;
  std::uint32_t query = 0;
  std::uint32_t pos = 0;
  std::uint32_t record = 0;

  bool operator==(const TrainTriplet&) const = default;
};

/// One triplet per (record, relevant item), in record order then item index.
std::vector<TrainTriplet> expand_triplets(const TripletDataset& ds);

/// `n` distinct indices drawn uniformly from [0, n_items) minus `exclude`
/// (sorted, unique). Throws Error(Contract) when infeasible.
std::vector<std::uint32_t> sample_negatives(SeededRng& rng, std::size_t n_items,
                                            std::span<const std::uint32_t> exclude, std::size_t n);

/// -sum_n log sigma(pos - neg_n)
double bpr_loss(double pos, std::span<const double> negs);

/// lr_min + 0.5 (lr_max - lr_min)(1 + cos(pi t / T)), no restarts.
double cosine_lr(double t, double T, double lr_max, double lr_min);

/// AdamW moments for a fixed list of tensors.
struct AdamWState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// Decoupled decay p -= lr*wd*p, then the bias-corrected Adam update.
void adamw_step(std::span<DenseMatrix* const> params, std::span<const Matrix<double>> grads,
                AdamWState& state, double lr, double weight_decay);

/// Shared inputs of a training run.
struct TrainData {
  const TripletDataset& train;
  const Catalog& catalog;
  const EmbeddingTable& users;
  const EmbeddingTable& queries;
};

struct Batch {
  std::span<const TrainTriplet> triplets;
  std::span<const std::vector<std::uint32_t>> negatives;  // one list per triplet
  SeededRng& noise;                                        // stochastic forward passes
};

/// A model the epoch loop can optimise.
class Trainable {
 public:
  virtual ~Trainable() = default;
  virtual std::string name() const = 0;
  /// Trainable tensors in a fixed order.
  virtual std::vector<DenseMatrix*> parameters() = 0;
  /// Negatives per triplet the loss needs (0 for in-batch objectives).
  virtual std::size_t negatives_needed(const TrainConfig& cfg) const { return cfg.n_negatives; }
  /// Returns the summed per-triplet loss; writes gradients of the mean loss,
  /// parallel to parameters().
  virtual double batch_loss(const TrainData& data, const Batch& batch,
                            std::vector<Matrix<double>>& grads) = 0;
  /// Full-catalog ranker over the current parameters.
  virtual std::unique_ptr<Recommender> ranker(const TrainData& data) const = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean per-triplet training loss
  double val_ndcg10 = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; its parameters are the ones returned
  double best_val_ndcg10 = 0.0;
  bool stopped_early = false;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Replaces validation NDCG@10 (epoch is 1-based).
  std::function<double(Trainable&, std::size_t epoch)> validate;
};

/// Epoch loop: shuffle, fresh negatives, AdamW with per-epoch cosine rate,
/// validation NDCG@10 over the full catalog, early stopping on patience.
/// Leaves the model holding its best-epoch parameters.
TrainHistory train_model(Trainable& model, const TrainConfig& cfg, const TrainData& data,
                         const TripletDataset& val, const TrainHooks& hooks = {});

/// BPR over the JAM score.
class JamTrainable final : public Trainable {
 public:
  explicit JamTrainable(JamParams params) : params_(std::move(params)) {}
  std::string name() const override { return "JAM-" + params_.mixer.name(); }
  std::vector<DenseMatrix*> parameters() override;
  double batch_loss(const TrainData& data, const Batch& batch,
                    std::vector<Matrix<double>>& grads) override;
  std::unique_ptr<Recommender> ranker(const TrainData& data) const override;

  const JamParams& params() const noexcept { return params_; }
  JamParams& params() noexcept { return params_; }

 private:
  JamParams params_;
};

struct JamTrainResult {
  JamParams params;
  TrainHistory history;
};

/// Initialises JAM from cfg.seed and trains it.
JamTrainResult train_jam(const TrainConfig& cfg, const MixerKind& mixer, const TrainData& data,
                         const TripletDataset& val, const TrainHooks& hooks = {},
                         bool use_bias = false);

/// Largest relative error between analytic gradients and central differences
/// of the summed BPR loss, over `trials` random float64 instances. MoE runs
/// with noise off and the top-k mask of the unperturbed forward pass.
/// Relative error: |a - n| / max(|a|, |n|, kGradCheckFloor).
inline constexpr double kGradCheckFloor = 1e-3;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t n_checked = 0;
};

GradCheckResult grad_check(const MixerKind& mixer, std::size_t d, std::size_t n_mod,
                           std::size_t trials, double eps, std::uint64_t seed,
                           std::size_t batch = 4, std::size_t n_negatives = 2);

struct GridPoint {
  std::size_t d = 0;
  double lr_max = 0.0;
  double best_val_ndcg10 = 0.0;
  std::size_t best_epoch = 0;
};

inline constexpr std::size_t kGridDims[] = {64, 128, 256};
inline constexpr double kGridLrs[] = {1e-4, 3e-4, 1e-3};

/// Trains one JAM model per (d, lr_max) and reports its best validation NDCG@10.
std::vector<GridPoint> grid_search(const TrainConfig& base, const MixerKind& mixer,
                                   const TrainData& data, const TripletDataset& val,
                                   std::span<const std::size_t> dims = kGridDims,
                                   std::span<const double> lrs = kGridLrs);

}  // namespace jam
