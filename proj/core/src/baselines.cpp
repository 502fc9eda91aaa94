#include "jam/baselines.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "jam/kernel.hpp"

namespace jam {

namespace {

DenseMatrix uniform_matrix(std::size_t rows, std::size_t cols, SeededRng& rng) {
  DenseMatrix m(rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  for (float& x : m.values()) x = static_cast<float>(rng.uniform(-bound, bound));
  return m;
}

std::vector<double> affine(const DenseMatrix& w, const DenseMatrix& b, std::span<const double> x) {
  std::vector<double> out(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) out[r] = dot(w.row(r), x) + double(b(r, 0));
  return out;
}

template <typename V>
std::vector<double> as_double(std::span<const V> v) {
  return std::vector<double>(v.begin(), v.end());
}

RankedList rank_cached(const Matrix<double>& item_out, std::span<const double> probe,
                       std::size_t k, std::size_t threads) {
  if (item_out.rows() == 0) fail(ErrorKind::Contract, "rank: empty catalog");
  require(k >= 1, "rank: k must be >= 1");
  return parallel_top_k(item_out.rows(), k, threads,
                        [&](std::size_t begin, std::size_t end, std::span<double> out) {
                          for (std::size_t i = begin; i < end; ++i) out[i - begin] = dot(item_out.row(i), probe);
                        });
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const char* field) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(ErrorKind::Format, std::string("checkpoint: bad number for '") + field + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& s, const char* field) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(ErrorKind::Format, std::string("checkpoint: bad integer for '") + field + "'");
  }
  return v;
}

void expect_kind(const Checkpoint& ckpt, const char* kind) {
  if (ckpt.kind != kind) {
    fail(ErrorKind::Format, "checkpoint holds a '" + ckpt.kind + "' model, not " + kind);
  }
}

}  // namespace

// ---- Random ---------------------------------------------------------------

RankedList random_rank(SeededRng& rng, std::size_t n_items, std::size_t k) {
  if (k > n_items) {
    fail(ErrorKind::Contract, "random_rank: k=" + std::to_string(k) + " exceeds catalog size " +
                                  std::to_string(n_items));
  }
  std::vector<std::uint32_t> perm(n_items);
  std::iota(perm.begin(), perm.end(), 0u);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(n_items - i));
    std::swap(perm[i], perm[j]);
  }
  RankedList out;
  out.items.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t i = 0; i < k; ++i) out.scores.push_back(static_cast<double>(k - i));
  return out;
}

RankedList RandomRanker::rank(const RankQuery& query, std::size_t k) const {
  if (n_items_ == 0) fail(ErrorKind::Contract, "rank: empty catalog");
  SeededRng rng(hash_combine(seed_, query.salt));
  return random_rank(rng, n_items_, std::min(k, n_items_));
}

// ---- Pop ------------------------------------------------------------------

PopModel build_pop(const TripletDataset& train, std::size_t n_items) {
  PopModel pm;
  pm.counts.assign(n_items, 0);
  for (const auto& r : train.records) {
    for (auto item : r.relevant_items) {
      if (item >= n_items) fail(ErrorKind::Data, "pop: item index out of range");
      ++pm.counts[item];
    }
  }
  return pm;
}

RankedList pop_rank(const PopModel& pm, std::size_t k) {
  std::vector<double> scores(pm.counts.begin(), pm.counts.end());
  return top_k(scores, k);
}

PopRanker::PopRanker(PopModel pm) : pm_(std::move(pm)), full_(pop_rank(pm_, pm_.counts.size())) {}

RankedList PopRanker::rank(const RankQuery&, std::size_t k) const {
  if (full_.size() == 0) fail(ErrorKind::Contract, "rank: empty catalog");
  k = std::min(k, full_.size());
  RankedList out;
  out.items.assign(full_.items.begin(), full_.items.begin() + static_cast<std::ptrdiff_t>(k));
  out.scores.assign(full_.scores.begin(), full_.scores.begin() + static_cast<std::ptrdiff_t>(k));
  return out;
}

// ---- TwoTower -------------------------------------------------------------

std::vector<DenseMatrix*> TwoTowerParams::tensors() {
  return {&user1, &user1_bias, &user2, &user2_bias, &item1, &item1_bias, &item2, &item2_bias};
}

std::vector<const DenseMatrix*> TwoTowerParams::tensors() const {
  return {&user1, &user1_bias, &user2, &user2_bias, &item1, &item1_bias, &item2, &item2_bias};
}

TwoTowerParams init_twotower(std::size_t user_dim, std::size_t concat_dim, std::size_t d,
                             std::size_t hidden, SeededRng& rng) {
  if (user_dim == 0 || concat_dim == 0 || d == 0 || hidden == 0) {
    fail(ErrorKind::Config, "twotower: all dimensions must be > 0");
  }
  TwoTowerParams p;
  p.user1 = uniform_matrix(hidden, user_dim, rng);
  p.user1_bias = DenseMatrix(hidden, 1);
  p.user2 = uniform_matrix(d, hidden, rng);
  p.user2_bias = DenseMatrix(d, 1);
  p.item1 = uniform_matrix(hidden, concat_dim, rng);
  p.item1_bias = DenseMatrix(hidden, 1);
  p.item2 = uniform_matrix(d, hidden, rng);
  p.item2_bias = DenseMatrix(d, 1);
  return p;
}

std::vector<float> concat_item(const Catalog& catalog, std::size_t item) {
  std::vector<float> out;
  out.reserve(catalog.concat_dim());
  for (std::size_t m = 0; m < catalog.n_modalities(); ++m) {
    const auto raw = catalog.raw(m, item);
    out.insert(out.end(), raw.begin(), raw.end());
  }
  return out;
}

namespace {

struct TowerPass {
  std::vector<double> input, pre, hidden, out;
};

TowerPass tower_forward(const DenseMatrix& w1, const DenseMatrix& b1, const DenseMatrix& w2,
                        const DenseMatrix& b2, std::span<const float> x) {
  if (x.size() != w1.cols()) {
    fail(ErrorKind::Contract, "twotower: input dim " + std::to_string(x.size()) + ", expected " +
                                  std::to_string(w1.cols()));
  }
  TowerPass t;
  t.input = as_double(x);
  t.pre = affine(w1, b1, t.input);
  t.hidden.resize(t.pre.size());
  for (std::size_t i = 0; i < t.pre.size(); ++i) t.hidden[i] = std::max(0.0, t.pre[i]);
  t.out = affine(w2, b2, t.hidden);
  return t;
}

/// Accumulates tower gradients for d(loss)/d(out) = dout into g[base..base+3].
void tower_backward(const DenseMatrix& w2, const TowerPass& t, std::span<const double> dout,
                    std::vector<Matrix<double>>& g, std::size_t base) {
  add_outer(g[base + 2], dout, std::span<const double>(t.hidden));
  for (std::size_t r = 0; r < dout.size(); ++r) g[base + 3](r, 0) += dout[r];
  std::vector<double> dpre = matvec_transposed(w2, dout);
  for (std::size_t i = 0; i < dpre.size(); ++i) {
    if (t.pre[i] <= 0.0) dpre[i] = 0.0;
  }
  add_outer(g[base], std::span<const double>(dpre), std::span<const double>(t.input));
  for (std::size_t r = 0; r < dpre.size(); ++r) g[base + 1](r, 0) += dpre[r];
}

}  // namespace

std::vector<double> user_tower(const TwoTowerParams& p, std::span<const float> raw_user) {
  return tower_forward(p.user1, p.user1_bias, p.user2, p.user2_bias, raw_user).out;
}

std::vector<double> item_tower(const TwoTowerParams& p, std::span<const float> concat) {
  return tower_forward(p.item1, p.item1_bias, p.item2, p.item2_bias, concat).out;
}

double twotower_score(const TwoTowerParams& p, std::span<const float> raw_user,
                      std::span<const float> concat) {
  return dot(user_tower(p, raw_user), item_tower(p, concat));
}

TwoTowerRanker::TwoTowerRanker(const TwoTowerParams& p, const Catalog& catalog, std::size_t threads)
    : params_(p), item_out_(catalog.size(), p.d()), threads_(std::max<std::size_t>(1, threads)) {
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    const auto out = item_tower(p, concat_item(catalog, i));
    std::copy(out.begin(), out.end(), item_out_.row(i).begin());
  }
}

RankedList TwoTowerRanker::rank(const RankQuery& query, std::size_t k) const {
  std::vector<double> u;
  if (query.user.empty()) {
    // Anonymous: the user tower of an all-zero input.
    const std::vector<float> zero(params_.user1.cols(), 0.0f);
    u = user_tower(params_, zero);
  } else {
    u = user_tower(params_, query.user);
  }
  return rank_cached(item_out_, u, k, threads_);
}

double TwoTowerTrainable::batch_loss(const TrainData& data, const Batch& batch,
                                     std::vector<Matrix<double>>& grads) {
  const auto& p = params_;
  grads.clear();
  for (const auto* t : p.tensors()) grads.emplace_back(t->rows(), t->cols());
  const double inv_batch = 1.0 / double(batch.triplets.size());
  double total = 0.0;
  std::vector<TowerPass> items;
  std::vector<double> scores, dscores;
  for (std::size_t b = 0; b < batch.triplets.size(); ++b) {
    const auto& t = batch.triplets[b];
    const auto user = tower_forward(p.user1, p.user1_bias, p.user2, p.user2_bias,
                                    data.users.row(t.user));
    const auto& negs = batch.negatives[b];
    items.clear();
    scores.clear();
    for (std::size_t j = 0; j <= negs.size(); ++j) {
      const auto concat = concat_item(data.catalog, j == 0 ? t.pos : negs[j - 1]);
      items.push_back(tower_forward(p.item1, p.item1_bias, p.item2, p.item2_bias, concat));
      scores.push_back(dot(user.out, items.back().out));
    }
    total += kernel::bpr_loss_and_dscores(scores, dscores);
    std::vector<double> du(p.d(), 0.0);
    for (std::size_t j = 0; j < items.size(); ++j) {
      const double s = dscores[j] * inv_batch;
      std::vector<double> di(p.d());
      for (std::size_t r = 0; r < p.d(); ++r) {
        du[r] += s * items[j].out[r];
        di[r] = s * user.out[r];
      }
      tower_backward(p.item2, items[j], di, grads, 4);
    }
    tower_backward(p.user2, user, du, grads, 0);
  }
  return total;
}

std::unique_ptr<Recommender> TwoTowerTrainable::ranker(const TrainData& data) const {
  return std::make_unique<TwoTowerRanker>(params_, data.catalog);
}

// ---- TalkRec --------------------------------------------------------------

std::vector<DenseMatrix*> TalkRecParams::tensors() {
  std::vector<DenseMatrix*> out;
  for (auto& m : item) out.push_back(&m);
  out.push_back(&query);
  return out;
}

std::vector<const DenseMatrix*> TalkRecParams::tensors() const {
  std::vector<const DenseMatrix*> out;
  for (const auto& m : item) out.push_back(&m);
  out.push_back(&query);
  return out;
}

TalkRecParams init_talkrec(std::size_t query_dim, const std::vector<std::size_t>& item_dims,
                           std::size_t d, double tau, SeededRng& rng) {
  if (!(tau > 0.0)) fail(ErrorKind::Config, "talkrec: temperature must be > 0");
  if (d == 0 || query_dim == 0 || item_dims.empty()) fail(ErrorKind::Config, "talkrec: bad dimensions");
  TalkRecParams p;
  p.tau = tau;
  for (auto dim : item_dims) p.item.push_back(uniform_matrix(d, dim, rng));
  p.query = uniform_matrix(d, query_dim, rng);
  return p;
}

namespace {

constexpr double kMinNorm = 1e-12;

struct View {
  std::vector<std::vector<double>> z;  // raw projections, one per batch row
  std::vector<std::vector<double>> v;  // unit vectors
  std::vector<double> norm;
};

std::vector<double> project(const DenseMatrix& w, std::span<const float> x) {
  if (x.size() != w.cols()) {
    fail(ErrorKind::Contract, "talkrec: input dim " + std::to_string(x.size()) + ", expected " +
                                  std::to_string(w.cols()));
  }
  std::vector<double> out(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) out[r] = dot(w.row(r), x);
  return out;
}

double normalize_into(const std::vector<double>& z, std::vector<double>& v) {
  double n = 0.0;
  for (double x : z) n += x * x;
  n = std::max(std::sqrt(n), kMinNorm);
  v.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) v[i] = z[i] / n;
  return n;
}

}  // namespace

double talkrec_loss(const TalkRecParams& p, const TalkRecBatch& batch,
                    std::vector<Matrix<double>>* grads) {
  const std::size_t B = batch.queries.size();
  if (B < 2) fail(ErrorKind::Contract, "talkrec_loss: batch must hold at least 2 pairs");
  if (batch.items.size() != B) fail(ErrorKind::Contract, "talkrec_loss: queries/items size mismatch");
  const std::size_t n_mod = p.item.size();
  const std::size_t n_views = n_mod + 1;
  const std::size_t d = p.d();

  // View 0 is the query; view m+1 is item modality m.
  std::vector<View> views(n_views);
  for (std::size_t a = 0; a < n_views; ++a) {
    views[a].z.resize(B);
    views[a].v.resize(B);
    views[a].norm.resize(B);
    for (std::size_t b = 0; b < B; ++b) {
      if (a == 0) {
        views[a].z[b] = project(p.query, batch.queries[b]);
      } else {
        if (batch.items[b].size() != n_mod) fail(ErrorKind::Contract, "talkrec_loss: modality count mismatch");
        views[a].z[b] = project(p.item[a - 1], batch.items[b][a - 1]);
      }
      views[a].norm[b] = normalize_into(views[a].z[b], views[a].v[b]);
    }
  }

  const double n_pairs = double(n_views * (n_views - 1) / 2);
  std::vector<std::vector<std::vector<double>>> dv;
  if (grads) dv.assign(n_views, std::vector<std::vector<double>>(B, std::vector<double>(d, 0.0)));

  double loss = 0.0;
  Matrix<double> S(B, B), dS(B, B);
  for (std::size_t a = 0; a < n_views; ++a) {
    for (std::size_t c = a + 1; c < n_views; ++c) {
      for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < B; ++j) S(i, j) = dot(views[a].v[i], views[c].v[j]) / p.tau;
      }
      dS.fill(0.0);
      const double w = 0.5 / (double(B) * n_pairs);
      std::vector<double> line(B);
      for (std::size_t i = 0; i < B; ++i) {  // a -> c
        for (std::size_t j = 0; j < B; ++j) line[j] = S(i, j);
        const auto prob = softmax(line);
        loss -= w * std::log(std::max(prob[i], 1e-300));
        for (std::size_t j = 0; j < B; ++j) dS(i, j) += w * (prob[j] - (i == j ? 1.0 : 0.0));
      }
      for (std::size_t j = 0; j < B; ++j) {  // c -> a
        for (std::size_t i = 0; i < B; ++i) line[i] = S(i, j);
        const auto prob = softmax(line);
        loss -= w * std::log(std::max(prob[j], 1e-300));
        for (std::size_t i = 0; i < B; ++i) dS(i, j) += w * (prob[i] - (i == j ? 1.0 : 0.0));
      }
      if (!grads) continue;
      for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < B; ++j) {
          const double g = dS(i, j) / p.tau;
          if (g == 0.0) continue;
          for (std::size_t r = 0; r < d; ++r) {
            dv[a][i][r] += g * views[c].v[j][r];
            dv[c][j][r] += g * views[a].v[i][r];
          }
        }
      }
    }
  }

  if (grads) {
    grads->clear();
    for (const auto* t : p.tensors()) grads->emplace_back(t->rows(), t->cols());
    for (std::size_t a = 0; a < n_views; ++a) {
      auto& g = a == 0 ? grads->back() : (*grads)[a - 1];
      for (std::size_t b = 0; b < B; ++b) {
        const auto& v = views[a].v[b];
        const double proj = dot(std::span<const double>(v), std::span<const double>(dv[a][b]));
        std::vector<double> dz(d);
        for (std::size_t r = 0; r < d; ++r) dz[r] = (dv[a][b][r] - v[r] * proj) / views[a].norm[b];
        const auto raw = a == 0 ? batch.queries[b] : batch.items[b][a - 1];
        add_outer(g, std::span<const double>(dz), raw);
      }
    }
  }
  return loss;
}

std::vector<double> talkrec_query(const TalkRecParams& p, std::span<const float> raw_query) {
  std::vector<double> v;
  normalize_into(project(p.query, raw_query), v);
  return v;
}

std::vector<double> talkrec_item(const TalkRecParams& p,
                                 std::span<const std::span<const float>> raw_item) {
  if (raw_item.size() != p.item.size()) fail(ErrorKind::Contract, "talkrec: modality count mismatch");
  std::vector<double> out(p.d(), 0.0), v;
  for (std::size_t m = 0; m < p.item.size(); ++m) {
    normalize_into(project(p.item[m], raw_item[m]), v);
    for (std::size_t r = 0; r < out.size(); ++r) out[r] += v[r] / double(p.item.size());
  }
  return out;
}

RankedList talkrec_rank(const TalkRecParams& p, const Catalog& catalog,
                        std::span<const float> raw_query, std::size_t k) {
  return TalkRecRanker(p, catalog).rank(RankQuery{{}, raw_query, 0}, k);
}

TalkRecRanker::TalkRecRanker(const TalkRecParams& p, const Catalog& catalog, std::size_t threads)
    : params_(p), item_out_(catalog.size(), p.d()), threads_(std::max<std::size_t>(1, threads)) {
  if (catalog.n_modalities() != p.item.size()) fail(ErrorKind::Contract, "talkrec: catalog modality count mismatch");
  std::vector<std::span<const float>> raw(catalog.n_modalities());
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    for (std::size_t m = 0; m < raw.size(); ++m) raw[m] = catalog.raw(m, i);
    const auto out = talkrec_item(p, raw);
    std::copy(out.begin(), out.end(), item_out_.row(i).begin());
  }
}

RankedList TalkRecRanker::rank(const RankQuery& query, std::size_t k) const {
  return rank_cached(item_out_, talkrec_query(params_, query.query), k, threads_);
}

double TalkRecTrainable::batch_loss(const TrainData& data, const Batch& batch,
                                    std::vector<Matrix<double>>& grads) {
  if (batch.triplets.size() < 2) {
    grads.clear();
    for (const auto* t : params_.tensors()) grads.emplace_back(t->rows(), t->cols());
    return 0.0;
  }
  TalkRecBatch tb;
  for (const auto& t : batch.triplets) {
    tb.queries.push_back(data.queries.row(t.query));
    std::vector<std::span<const float>> views(data.catalog.n_modalities());
    for (std::size_t m = 0; m < views.size(); ++m) views[m] = data.catalog.raw(m, t.pos);
    tb.items.push_back(std::move(views));
  }
  return talkrec_loss(params_, tb, &grads) * double(batch.triplets.size());
}

std::unique_ptr<Recommender> TalkRecTrainable::ranker(const TrainData& data) const {
  return std::make_unique<TalkRecRanker>(params_, data.catalog);
}

// ---- Checkpoints ----------------------------------------------------------

namespace {

const char* const kTwoTowerNames[] = {"user1", "user1_bias", "user2", "user2_bias",
                                      "item1", "item1_bias", "item2", "item2_bias"};

}  // namespace

Checkpoint twotower_checkpoint(const TwoTowerParams& p) {
  Checkpoint c;
  c.kind = "twotower";
  c.meta = {{"d", std::to_string(p.d())}, {"hidden", std::to_string(p.hidden())}};
  const auto ts = p.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    c.tensor_names.push_back(kTwoTowerNames[i]);
    c.tensors.push_back(*ts[i]);
  }
  return c;
}

TwoTowerParams twotower_from(const Checkpoint& ckpt) {
  expect_kind(ckpt, "twotower");
  TwoTowerParams p;
  const auto ts = p.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) *ts[i] = ckpt.tensor(kTwoTowerNames[i]);
  const std::size_t h = p.user1.rows(), d = p.user2.rows();
  const bool ok = h > 0 && d > 0 && p.user1_bias.rows() == h && p.user2.cols() == h &&
                  p.user2_bias.rows() == d && p.item1.rows() == h && p.item1_bias.rows() == h &&
                  p.item2.rows() == d && p.item2.cols() == h && p.item2_bias.rows() == d;
  if (!ok) fail(ErrorKind::Format, "twotower checkpoint: inconsistent tensor shapes");
  return p;
}

Checkpoint talkrec_checkpoint(const TalkRecParams& p) {
  Checkpoint c;
  c.kind = "talkrec";
  c.meta = {{"d", std::to_string(p.d())},
            {"tau", format_double(p.tau)},
            {"n_modalities", std::to_string(p.item.size())}};
  for (std::size_t i = 0; i < p.item.size(); ++i) {
    c.tensor_names.push_back("item." + std::to_string(i));
    c.tensors.push_back(p.item[i]);
  }
  c.tensor_names.push_back("query");
  c.tensors.push_back(p.query);
  return c;
}

TalkRecParams talkrec_from(const Checkpoint& ckpt) {
  expect_kind(ckpt, "talkrec");
  TalkRecParams p;
  p.tau = parse_double(ckpt.meta_at("tau"), "tau");
  const auto n_mod = parse_u64(ckpt.meta_at("n_modalities"), "n_modalities");
  for (std::uint64_t i = 0; i < n_mod; ++i) p.item.push_back(ckpt.tensor("item." + std::to_string(i)));
  p.query = ckpt.tensor("query");
  if (!(p.tau > 0.0)) fail(ErrorKind::Format, "talkrec checkpoint: temperature must be > 0");
  for (const auto& m : p.item) {
    if (m.rows() != p.query.rows()) fail(ErrorKind::Format, "talkrec checkpoint: inconsistent d");
  }
  return p;
}

Checkpoint pop_checkpoint(const PopModel& pm) {
  Checkpoint c;
  c.kind = "pop";
  std::string counts;
  for (std::size_t i = 0; i < pm.counts.size(); ++i) counts += (i ? "," : "") + std::to_string(pm.counts[i]);
  c.meta = {{"n_items", std::to_string(pm.counts.size())}, {"counts", counts}};
  return c;
}

PopModel pop_from(const Checkpoint& ckpt) {
  expect_kind(ckpt, "pop");
  PopModel pm;
  const auto n = parse_u64(ckpt.meta_at("n_items"), "n_items");
  const std::string& text = ckpt.meta_at("counts");
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    pm.counts.push_back(parse_u64(text.substr(start, end - start), "counts"));
    start = end + 1;
  }
  if (pm.counts.size() != n) fail(ErrorKind::Format, "pop checkpoint: count list length mismatch");
  return pm;
}

Checkpoint random_checkpoint(std::size_t n_items, std::uint64_t seed) {
  Checkpoint c;
  c.kind = "random";
  c.meta = {{"n_items", std::to_string(n_items)}, {"seed", std::to_string(seed)}};
  return c;
}

}  // namespace jam
