#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "jam/baselines.hpp"
#include "jam/synth.hpp"

namespace jam {
namespace {

TEST(Random, PrefixOfAPermutation) {
  SeededRng rng(1);
  const auto r = random_rank(rng, 50, 50);
  std::set<std::uint32_t> s(r.items.begin(), r.items.end());
  EXPECT_EQ(s.size(), 50u);
  EXPECT_TRUE(std::is_sorted(r.scores.rbegin(), r.scores.rend()));
  EXPECT_THROW(random_rank(rng, 5, 6), Error);
}

TEST(Random, FirstPositionIsUniform) {
  SeededRng rng(2);
  std::vector<double> counts(10);
  constexpr int draws = 50000;
  for (int i = 0; i < draws; ++i) counts[random_rank(rng, 10, 3).items[0]] += 1;
  double chi2 = 0;
  for (double c : counts) chi2 += (c - draws / 10.0) * (c - draws / 10.0) / (draws / 10.0);
  EXPECT_LT(chi2, 27.88);  // 9 dof, p = 0.001
}

TEST(Random, RankerIsKeyedBySalt) {
  RandomRanker rr(100, 4);
  const auto a = rr.rank({{}, {}, 11}, 10);
  EXPECT_EQ(a.items, rr.rank({{}, {}, 11}, 10).items);
  EXPECT_NE(a.items, rr.rank({{}, {}, 12}, 10).items);
  EXPECT_EQ(rr.rank({{}, {}, 1}, 500).size(), 100u);
}

TEST(Pop, CountsOncePerRecordAndBreaksTiesByIndex) {
  TripletDataset train;
  train.records = {make_record(0, 0, {3, 1}, 0), make_record(1, 0, {3}, 0), make_record(0, 1, {0, 1}, 0)};
  const auto pm = build_pop(train, 5);
  EXPECT_EQ(pm.counts, (std::vector<std::uint64_t>{1, 2, 0, 2, 0}));
  const auto r = pop_rank(pm, 5);
  EXPECT_EQ(r.items, (std::vector<std::uint32_t>{1, 3, 0, 2, 4}));
  PopRanker ranker(pm);
  EXPECT_EQ(ranker.rank({}, 2).items, (std::vector<std::uint32_t>{1, 3}));
}

// ---- gradient checks through Trainable::batch_loss ----------------------------

struct Fixture {
  SynthWorld world;
  SplitResult split;
};

Fixture fixture() {
  SynthConfig sc;
  sc.n_users = 12;
  sc.n_queries = 4;
  sc.n_items = 40;
  sc.latent_dim = 6;
  auto w = synth_generate(sc);
  auto s = chronological_split(w.triplets);
  return {std::move(w), std::move(s)};
}

/// Compares the analytic gradient of the mean batch loss against central
/// differences taken in float storage.
void fd_check(Trainable& model, const TrainData& data, const Batch& batch, std::size_t n_probe) {
  std::vector<Matrix<double>> grads;
  const double b = double(batch.triplets.size());
  model.batch_loss(data, batch, grads);
  auto params = model.parameters();
  ASSERT_EQ(grads.size(), params.size());
  std::mt19937_64 gen(3);
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto vals = params[t]->values();
    for (std::size_t probe = 0; probe < n_probe; ++probe) {
      const std::size_t i = gen() % vals.size();
      const float orig = vals[i];
      const float hi = orig + 1e-3f, lo = orig - 1e-3f;
      std::vector<Matrix<double>> scratch;
      vals[i] = hi;
      const double fp = model.batch_loss(data, batch, scratch) / b;
      vals[i] = lo;
      const double fm = model.batch_loss(data, batch, scratch) / b;
      vals[i] = orig;
      const double numeric = (fp - fm) / (double(hi) - double(lo));
      const double analytic = grads[t].values()[i];
      EXPECT_NEAR(analytic, numeric, 2e-3 * std::max(std::abs(analytic), std::abs(numeric)) + 2e-5)
          << model.name() << " tensor " << t << " index " << i;
    }
  }
}

TEST(TwoTower, GradientMatchesFiniteDifferences) {
  auto f = fixture();
  const TrainData data{f.split.train, f.world.catalog, f.world.users, f.world.queries};
  SeededRng rng(5);
  TwoTowerTrainable model(init_twotower(f.world.users.dim(), f.world.catalog.concat_dim(), 6, 10, rng));
  const auto triplets = expand_triplets(f.split.train);
  const std::span<const TrainTriplet> batch_t(triplets.data(), 5);
  std::vector<std::vector<std::uint32_t>> negs;
  for (const auto& t : batch_t) {
    negs.push_back(sample_negatives(rng, 40, f.split.train.records[t.record].relevant_items, 3));
  }
  SeededRng noise(1);
  fd_check(model, data, Batch{batch_t, negs, noise}, 6);
}

TEST(TalkRec, GradientMatchesFiniteDifferences) {
  auto f = fixture();
  const TrainData data{f.split.train, f.world.catalog, f.world.users, f.world.queries};
  SeededRng rng(6);
  TalkRecTrainable model(init_talkrec(f.world.queries.dim(), f.world.catalog.modality_dims(), 6, 0.5, rng));
  const auto triplets = expand_triplets(f.split.train);
  const std::span<const TrainTriplet> batch_t(triplets.data(), 6);
  SeededRng noise(1);
  fd_check(model, data, Batch{batch_t, {}, noise}, 6);
}

TEST(TalkRec, IdenticalViewsGiveLogTwo) {
  TalkRecParams p;
  p.item = {DenseMatrix(3, 2, 1.0f), DenseMatrix(3, 4, 1.0f)};
  p.query = DenseMatrix(3, 5, 1.0f);
  const std::vector<float> q1(5, 1.0f), q2(5, 2.0f), a(2, 0.5f), b(4, 3.0f);
  TalkRecBatch batch;
  batch.queries = {q1, q2};
  batch.items = {{a, b}, {a, b}};
  EXPECT_NEAR(talkrec_loss(p, batch), std::log(2.0), 1e-12);
  batch.queries.pop_back();
  batch.items.pop_back();
  EXPECT_THROW(talkrec_loss(p, batch), Error);
}

TEST(TalkRec, RankingIgnoresTheUser) {
  const auto w = testing::tiny_world(60, {3, 4}, 2, 5, 7);
  SeededRng rng(8);
  const auto p = init_talkrec(5, {3, 4}, 6, 0.07, rng);
  TalkRecRanker ranker(p, w.catalog, 2);
  const auto a = ranker.rank({w.users.row(0), w.queries.row(1), 0}, 10);
  const auto b = ranker.rank({w.users.row(3), w.queries.row(1), 0}, 10);
  EXPECT_EQ(a.items, b.items);
  EXPECT_EQ(a.items, talkrec_rank(p, w.catalog, w.queries.row(1), 10).items);
  const auto qv = talkrec_query(p, w.queries.row(1));
  EXPECT_NEAR(dot(qv, qv), 1.0, 1e-12);
}

TEST(TwoTower, AnonymousUserAndQueryBlindness) {
  const auto w = testing::tiny_world(60, {3, 4}, 2, 5, 9);
  SeededRng rng(10);
  const auto p = init_twotower(2, 7, 6, 8, rng);
  TwoTowerRanker ranker(p, w.catalog, 2);
  const auto a = ranker.rank({w.users.row(0), w.queries.row(0), 0}, 10);
  EXPECT_EQ(a.items, ranker.rank({w.users.row(0), w.queries.row(2), 0}, 10).items);
  EXPECT_EQ(ranker.rank({{}, w.queries.row(0), 0}, 10).size(), 10u);
  EXPECT_NEAR(a.scores[0], twotower_score(p, w.users.row(0), concat_item(w.catalog, a.items[0])), 1e-6);
}

TEST(Baselines, CheckpointsRoundTrip) {
  testing::TempDir dir("baseline-ckpt");
  SeededRng rng(3);
  const auto tt = init_twotower(4, 9, 5, 7, rng);
  save_checkpoint(dir / "tt.ckpt", twotower_checkpoint(tt));
  const auto tt2 = twotower_from(load_checkpoint(dir / "tt.ckpt"));
  EXPECT_EQ(tt2.user1, tt.user1);
  EXPECT_EQ(tt2.item2_bias, tt.item2_bias);

  const auto tr = init_talkrec(5, {3, 4}, 6, 0.25, rng);
  save_checkpoint(dir / "tr.ckpt", talkrec_checkpoint(tr));
  const auto tr2 = talkrec_from(load_checkpoint(dir / "tr.ckpt"));
  EXPECT_EQ(tr2.item, tr.item);
  EXPECT_EQ(tr2.query, tr.query);
  EXPECT_EQ(tr2.tau, 0.25);

  PopModel pm{{3, 0, 7}};
  EXPECT_EQ(pop_from(pop_checkpoint(pm)).counts, pm.counts);
  EXPECT_EQ(random_checkpoint(10, 4).meta_at("seed"), "4");
}

}  // namespace
}  // namespace jam
