#include "jam/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "jam/evaluate.hpp"
#include "jam/kernel.hpp"

namespace jam {

namespace {

// Sub-stream tags derived from the run seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kNegativeStream = 3;
constexpr std::uint64_t kNoiseStream = 4;

std::vector<std::span<const float>> item_views(const Catalog& catalog, std::uint32_t item) {
  std::vector<std::span<const float>> out(catalog.n_modalities());
  for (std::size_t m = 0; m < out.size(); ++m) out[m] = catalog.raw(m, item);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  auto usage = [](const std::string& what) { fail(ErrorKind::Usage, "train config: " + what); };
  if (epochs < 1) usage("epochs must be >= 1");
  if (batch_size < 1) usage("batch_size must be >= 1");
  if (patience < 1) usage("patience must be >= 1");
  if (d < 1) usage("d must be >= 1");
  if (!(lr_min >= 0.0)) usage("lr_min must be >= 0");
  if (!(lr_max > lr_min)) usage("lr_max must exceed lr_min");
  if (!(weight_decay >= 0.0)) usage("weight_decay must be >= 0");
}

std::vector<TrainTriplet> expand_triplets(const TripletDataset& ds) {
  std::vector<TrainTriplet> out;
  for (std::size_t r = 0; r < ds.records.size(); ++r) {
    const auto& rec = ds.records[r];
    for (auto item : rec.relevant_items) {
      out.push_back({rec.user_idx, rec.query_idx, item, static_cast<std::uint32_t>(r)});
    }
  }
  return out;
}

std::vector<std::uint32_t> sample_negatives(SeededRng& rng, std::size_t n_items,
                                            std::span<const std::uint32_t> exclude, std::size_t n) {
  const auto excluded_in_range = static_cast<std::size_t>(
      std::lower_bound(exclude.begin(), exclude.end(), static_cast<std::uint64_t>(n_items)) -
      exclude.begin());
  const std::size_t available = n_items - excluded_in_range;
  if (n > available) {
    fail(ErrorKind::Contract, "sample_negatives: need " + std::to_string(n) + " negatives but only " +
                                  std::to_string(available) + " items are eligible");
  }
  std::vector<std::uint32_t> out;
  out.reserve(n);
  auto excluded = [&](std::uint32_t i) { return std::binary_search(exclude.begin(), exclude.end(), i); };

  if (2 * n <= available) {
    // Rejection sampling; acceptance probability stays above 1/2.
    while (out.size() < n) {
      const auto i = static_cast<std::uint32_t>(rng.uniform_index(n_items));
      if (excluded(i) || std::find(out.begin(), out.end(), i) != out.end()) continue;
      out.push_back(i);
    }
    return out;
  }
  std::vector<std::uint32_t> pool;
  pool.reserve(available);
  for (std::uint32_t i = 0; i < n_items; ++i) {
    if (!excluded(i)) pool.push_back(i);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  return pool;
}

double bpr_loss(double pos, std::span<const double> negs) {
  double loss = 0.0;
  for (double s : negs) loss -= log_sigmoid(pos - s);
  return loss;
}

double cosine_lr(double t, double T, double lr_max, double lr_min) {
  if (!(T > 0.0) || t < 0.0 || t > T) fail(ErrorKind::Contract, "cosine_lr: need 0 <= t <= T, T > 0");
  if (t == 0.0) return lr_max;
  if (t == T) return lr_min;
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t / T));
}

void adamw_step(std::span<DenseMatrix* const> params, std::span<const Matrix<double>> grads,
                AdamWState& state, double lr, double weight_decay) {
  require(params.size() == grads.size(), "adamw: params/grads count mismatch");
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  }
  require(state.m.size() == params.size(), "adamw: state does not match params");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->values();
    const auto g = grads[k].values();
    require(p.size() == g.size(), "adamw: gradient shape mismatch");
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      double w = double(p[i]);
      w -= lr * weight_decay * w;
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w -= lr * mhat / (std::sqrt(vhat) + state.eps);
      p[i] = static_cast<float>(w);
    }
  }
}

TrainHistory train_model(Trainable& model, const TrainConfig& cfg, const TrainData& data,
                         const TripletDataset& val, const TrainHooks& hooks) {
  cfg.validate();
  if (val.empty() && !hooks.validate) fail(ErrorKind::Data, "train: empty validation split");
  const auto triplets = expand_triplets(data.train);
  if (triplets.empty()) fail(ErrorKind::Data, "train: empty training split");

  const auto params = model.parameters();
  const std::size_t n_neg = model.negatives_needed(cfg);
  const SeededRng root(cfg.seed);
  AdamWState state;
  TrainHistory history;
  std::vector<DenseMatrix> best;
  std::size_t since_best = 0;

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const double lr = cosine_lr(double(e), double(cfg.epochs), cfg.lr_max, cfg.lr_min);
    auto order = triplets;
    SeededRng shuffle_rng = root.fork(kShuffleStream).fork(e);
    shuffle_rng.shuffle(order);
    SeededRng neg_rng = root.fork(kNegativeStream).fork(e);
    SeededRng noise_rng = root.fork(kNoiseStream).fork(e);

    double loss_sum = 0.0;
    std::vector<std::vector<std::uint32_t>> negatives;
    std::vector<Matrix<double>> grads;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const TrainTriplet> batch(order.data() + start, end - start);
      negatives.assign(batch.size(), {});
      if (n_neg > 0) {
        for (std::size_t b = 0; b < batch.size(); ++b) {
          const auto& rel = data.train.records[batch[b].record].relevant_items;
          negatives[b] = sample_negatives(neg_rng, data.catalog.size(), rel, n_neg);
        }
      }
      loss_sum += model.batch_loss(data, Batch{batch, negatives, noise_rng}, grads);
      adamw_step(params, grads, state, lr, cfg.weight_decay);
    }
    EpochRecord rec;
    rec.epoch = e + 1;
    rec.loss = loss_sum / double(order.size());
    rec.lr = lr;
    if (!std::isfinite(rec.loss)) fail(ErrorKind::Data, "train: loss became non-finite at epoch " + std::to_string(e + 1));
    if (hooks.validate) {
      rec.val_ndcg10 = hooks.validate(model, rec.epoch);
    } else {
      EvalOptions opts;
      opts.ks = {10};
      opts.threads = cfg.threads;
      rec.val_ndcg10 = evaluate(*model.ranker(data), val, data.users, data.queries, opts).ndcg[0];
    }
    history.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    if (history.best_epoch == 0 || rec.val_ndcg10 > history.best_val_ndcg10) {
      history.best_epoch = rec.epoch;
      history.best_val_ndcg10 = rec.val_ndcg10;
      best.clear();
      for (auto* p : params) best.push_back(*p);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      history.stopped_early = e + 1 < cfg.epochs;
      break;
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) *params[k] = best[k];
  return history;
}

std::vector<DenseMatrix*> JamTrainable::parameters() {
  std::vector<DenseMatrix*> out;
  params_.for_each_tensor([&](const std::string&, DenseMatrix& m) { out.push_back(&m); });
  return out;
}

double JamTrainable::batch_loss(const TrainData& data, const Batch& batch,
                                std::vector<Matrix<double>>& grads) {
  const JamParams& p = params_;
  const std::size_t n_mod = p.n_modalities();
  JamGradients g = zeros_like<double>(p);
  const double inv_batch = 1.0 / double(batch.triplets.size());

  double total = 0.0;
  std::vector<kernel::ItemEval> evals;
  std::vector<std::vector<std::span<const float>>> raws;
  std::vector<double> scores, dscores, eps(n_mod, 0.0);
  for (std::size_t b = 0; b < batch.triplets.size(); ++b) {
    const auto& t = batch.triplets[b];
    const auto user = data.users.row(t.user);
    const auto query = data.queries.row(t.query);
    const auto ctx = kernel::make_context(p, user, query, /*with_noise=*/true);

    const auto& negs = batch.negatives[b];
    const std::size_t n_items = 1 + negs.size();
    evals.resize(n_items);
    raws.resize(n_items);
    scores.resize(n_items);
    for (std::size_t j = 0; j < n_items; ++j) {
      raws[j] = item_views(data.catalog, j == 0 ? t.pos : negs[j - 1]);
      if (ctx.noisy) {
        for (auto& x : eps) x = batch.noise.normal();
      }
      kernel::eval_item<float, float>(p, ctx, raws[j], eps, nullptr, evals[j]);
      scores[j] = evals[j].score;
    }
    total += kernel::bpr_loss_and_dscores(scores, dscores);
    for (double& x : dscores) x *= inv_batch;
    kernel::accumulate_gradients<float, float>(p, ctx, user, query, raws, evals, dscores, g);
  }
  grads.clear();
  g.for_each_tensor([&](const std::string&, Matrix<double>& m) { grads.push_back(std::move(m)); });
  return total;
}

std::unique_ptr<Recommender> JamTrainable::ranker(const TrainData& data) const {
  return std::make_unique<JamRanker>(params_, data.catalog);
}

JamTrainResult train_jam(const TrainConfig& cfg, const MixerKind& mixer, const TrainData& data,
                         const TripletDataset& val, const TrainHooks& hooks, bool use_bias) {
  cfg.validate();
  ModelShape shape;
  shape.d = cfg.d;
  shape.user_dim = data.users.dim();
  shape.query_dim = data.queries.dim();
  shape.item_dims = data.catalog.modality_dims();
  shape.use_bias = use_bias;
  SeededRng init_rng = SeededRng(cfg.seed).fork(kInitStream);
  JamTrainable model(init_params(shape, mixer, init_rng));
  auto history = train_model(model, cfg, data, val, hooks);
  return {std::move(model.params()), std::move(history)};
}

namespace {

struct CheckInstance {
  std::vector<double> user, query;
  std::vector<std::vector<std::vector<double>>> items;  // [item][modality]
};

struct CheckBatch {
  std::vector<CheckInstance> instances;
  std::vector<std::vector<std::vector<std::uint8_t>>> masks;  // [instance][item]
};

// Entries N(0, 1/n): roughly unit-norm inputs, like normalised upstream embeddings.
std::vector<double> normal_vector(SeededRng& rng, std::size_t n) {
  std::vector<double> v(n);
  const double scale = 1.0 / std::sqrt(double(n));
  for (double& x : v) x = rng.normal() * scale;
  return v;
}

double check_loss(const JamGradients& p, CheckBatch& batch, bool record_masks,
                  JamGradients* grads) {
  double loss = 0.0;
  const std::size_t n_mod = p.n_modalities();
  if (record_masks) batch.masks.assign(batch.instances.size(), {});
  for (std::size_t b = 0; b < batch.instances.size(); ++b) {
    const auto& inst = batch.instances[b];
    const std::span<const double> user(inst.user), query(inst.query);
    const auto ctx = kernel::make_context(p, user, query, /*with_noise=*/false);
    std::vector<kernel::ItemEval> evals(inst.items.size());
    std::vector<std::vector<std::span<const double>>> raws(inst.items.size());
    std::vector<double> scores(inst.items.size()), dscores;
    if (record_masks) batch.masks[b].resize(inst.items.size());
    for (std::size_t j = 0; j < inst.items.size(); ++j) {
      for (std::size_t m = 0; m < n_mod; ++m) raws[j].emplace_back(inst.items[j][m]);
      const std::vector<std::uint8_t>* mask =
          (!record_masks && p.mixer.type == MixerType::MoE) ? &batch.masks[b][j] : nullptr;
      kernel::eval_item<double, double>(p, ctx, raws[j], {}, mask, evals[j]);
      if (record_masks) batch.masks[b][j] = evals[j].kept;
      scores[j] = evals[j].score;
    }
    loss += kernel::bpr_loss_and_dscores(scores, dscores);
    if (grads != nullptr) {
      kernel::accumulate_gradients<double, double>(p, ctx, user, query, raws, evals, dscores,
                                                   *grads);
    }
  }
  return loss;
}

}  // namespace

GradCheckResult grad_check(const MixerKind& mixer_in, std::size_t d, std::size_t n_mod,
                           std::size_t trials, double eps, std::uint64_t seed, std::size_t batch,
                           std::size_t n_negatives) {
  MixerKind mixer = mixer_in;
  mixer.noise_enabled = false;
  GradCheckResult result;
  SeededRng rng(seed);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    ModelShape shape;
    shape.d = d;
    shape.user_dim = 5;
    shape.query_dim = 6;
    for (std::size_t i = 0; i < n_mod; ++i) shape.item_dims.push_back(4 + i);
    JamGradients p = init_params(shape, mixer, rng).cast<double>();

    CheckBatch cb;
    for (std::size_t b = 0; b < batch; ++b) {
      CheckInstance inst;
      inst.user = normal_vector(rng, shape.user_dim);
      inst.query = normal_vector(rng, shape.query_dim);
      for (std::size_t j = 0; j < 1 + n_negatives; ++j) {
        std::vector<std::vector<double>> views;
        for (std::size_t m = 0; m < n_mod; ++m) views.push_back(normal_vector(rng, shape.item_dims[m]));
        inst.items.push_back(std::move(views));
      }
      cb.instances.push_back(std::move(inst));
    }

    JamGradients analytic = zeros_like<double>(p);
    check_loss(p, cb, /*record_masks=*/true, &analytic);

    std::vector<std::pair<std::string, Matrix<double>*>> tensors;
    p.for_each_tensor([&](const std::string& name, Matrix<double>& m) { tensors.emplace_back(name, &m); });
    std::vector<const Matrix<double>*> grads;
    analytic.for_each_tensor([&](const std::string&, const Matrix<double>& m) { grads.push_back(&m); });

    for (std::size_t t = 0; t < tensors.size(); ++t) {
      auto values = tensors[t].second->values();
      const auto g = grads[t]->values();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + eps;
        const double lp = check_loss(p, cb, false, nullptr);
        values[i] = saved - eps;
        const double lm = check_loss(p, cb, false, nullptr);
        values[i] = saved;
        const double numeric = (lp - lm) / (2.0 * eps);
        const double denom = std::max({std::abs(g[i]), std::abs(numeric), kGradCheckFloor});
        const double rel = std::abs(g[i] - numeric) / denom;
        ++result.n_checked;
        if (rel > result.max_rel_error) {
          result.max_rel_error = rel;
          result.worst_tensor = tensors[t].first;
        }
      }
    }
  }
  return result;
}

std::vector<GridPoint> grid_search(const TrainConfig& base, const MixerKind& mixer,
                                   const TrainData& data, const TripletDataset& val,
                                   std::span<const std::size_t> dims, std::span<const double> lrs) {
  std::vector<GridPoint> out;
  for (auto d : dims) {
    for (auto lr : lrs) {
      TrainConfig cfg = base;
      cfg.d = d;
      cfg.lr_max = lr;
      const auto run = train_jam(cfg, mixer, data, val);
      out.push_back({d, lr, run.history.best_val_ndcg10, run.history.best_epoch});
    }
  }
  return out;
}

}  // namespace jam
