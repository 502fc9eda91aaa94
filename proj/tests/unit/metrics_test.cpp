#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "jam/baselines.hpp"
#include "jam/evaluate.hpp"
#include "jam/metrics.hpp"
#include "metric_oracle.hpp"

namespace jam {
namespace {

RankedList list_of(std::vector<std::uint32_t> items) {
  RankedList r;
  r.items = std::move(items);
  for (std::size_t i = 0; i < r.items.size(); ++i) r.scores.push_back(double(r.items.size() - i));
  return r;
}

TEST(Metrics, HitsAtRanksOneAndThree) {
  const auto r = list_of({7, 1, 9, 4, 5});
  const std::vector<std::uint32_t> rel{7, 9};
  EXPECT_NEAR(ndcg_at_k(r, rel, 10), 0.91972, 5e-6);
  EXPECT_NEAR(ndcg_at_k(r, rel, 10), 1.5 / (1.0 + 1.0 / std::log2(3.0)), 1e-15);
  EXPECT_DOUBLE_EQ(recall_at_k(r, rel, 10), 1.0);
  EXPECT_DOUBLE_EQ(recall_at_k(r, rel, 2), 0.5);
  EXPECT_DOUBLE_EQ(ndcg_at_k(r, rel, 1), 1.0);
}

TEST(Metrics, RecallDenominatorIsFullRelevantSet) {
  const auto r = list_of({0, 1});
  const std::vector<std::uint32_t> rel{0, 1, 2, 3};
  EXPECT_DOUBLE_EQ(recall_at_k(r, rel, 2), 0.5);
  EXPECT_DOUBLE_EQ(ndcg_at_k(r, rel, 2), 1.0);  // ideal is capped at k
}

TEST(Metrics, NoHitsIsZero) {
  const auto r = list_of({5, 6});
  const std::vector<std::uint32_t> rel{1};
  EXPECT_EQ(recall_at_k(r, rel, 10), 0.0);
  EXPECT_EQ(ndcg_at_k(r, rel, 10), 0.0);
}

TEST(Metrics, AgreesWithOracleOnRandomInstances) {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::uint32_t n = 5 + gen() % 200;
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    std::shuffle(perm.begin(), perm.end(), gen);
    perm.resize(1 + gen() % n);
    std::set<std::uint32_t> rs;
    const std::size_t n_rel = 1 + gen() % 12;
    while (rs.size() < std::min<std::size_t>(n_rel, n)) rs.insert(gen() % n);
    const std::vector<std::uint32_t> rel(rs.begin(), rs.end());
    const std::size_t k = 1 + gen() % 120;
    const auto ranked = list_of(perm);
    EXPECT_NEAR(ndcg_at_k(ranked, rel, k), oracle::ndcg(perm, rel, k), 1e-12);
    EXPECT_NEAR(recall_at_k(ranked, rel, k), oracle::recall(perm, rel, k), 1e-12);
  }
}

TEST(Format, MeanStdDropsLeadingZero) {
  EXPECT_EQ(format_mean_std(0.0864, 0.0021), ".086_{.002}");
  EXPECT_EQ(format_mean_std(0.0, 0.0), ".000_{.000}");
  EXPECT_EQ(format_mean_std(1.0, 0.0), "1.000_{.000}");
  EXPECT_EQ(format_mean_std(0.9996, 0.0004), "1.000_{.000}");
}

MetricValues values(double r10, double n10) {
  return {{10, 100}, {r10, r10}, {n10, n10}, 5};
}

TEST(Aggregate, MeanAndPopulationStd) {
  const auto rep = aggregate("X", true, false, {1, 2, 3}, {values(0.1, 0.2), values(0.2, 0.4), values(0.3, 0.6)});
  EXPECT_NEAR(rep.mean.recall_at(10), 0.2, 1e-15);
  EXPECT_NEAR(rep.stddev.recall_at(10), std::sqrt(2.0 / 3.0) * 0.1, 1e-15);
  EXPECT_NEAR(rep.stddev.ndcg_at(100), std::sqrt(2.0 / 3.0) * 0.2, 1e-15);
  EXPECT_THROW(rep.mean.recall_at(20), Error);
}

TEST(Aggregate, JsonRoundTripAndTable) {
  const auto rep = aggregate("JAM-avg", true, true, {1, 2}, {values(0.1, 0.2), values(0.2, 0.4)},
                             Coverage{10, 0.9, 0.8});
  const auto back = report_from_json(report_to_json(rep));
  EXPECT_EQ(back.method, "JAM-avg");
  EXPECT_EQ(back.seeds, rep.seeds);
  EXPECT_EQ(back.mean.ndcg, rep.mean.ndcg);
  EXPECT_EQ(back.coverage.test_records, 10u);
  EXPECT_EQ(back.averaging, "per-record");
  EXPECT_NE(report_to_json(rep).find(".150_{.050}"), std::string::npos);

  const auto table = format_table({rep});
  EXPECT_NE(table.find("NDCG@100"), std::string::npos);
  EXPECT_NE(table.find(".300_{.100}"), std::string::npos);
}

// ---- evaluation harness -------------------------------------------------

class FixedRanker final : public Recommender {
 public:
  std::string name() const override { return "Fixed"; }
  bool uses_query() const override { return false; }
  bool uses_user() const override { return false; }
  RankedList rank(const RankQuery&, std::size_t k) const override {
    std::vector<std::uint32_t> items;
    for (std::uint32_t i = 0; i < k && i < 20; ++i) items.push_back(i);
    return list_of(items);
  }
};

TEST(Evaluate, AveragesPerRecordAgainstOracle) {
  const auto w = testing::tiny_world(20, {2}, 2, 2, 1, 3, 2);
  TripletDataset test;
  test.records = {make_record(0, 0, {0, 2}, 0), make_record(1, 1, {15}, 0), make_record(2, 0, {19, 3}, 0)};
  const auto mv = evaluate(FixedRanker{}, test, w.users, w.queries, {{10, 100}, 2, 0});
  std::vector<std::uint32_t> ranked(20);
  std::iota(ranked.begin(), ranked.end(), 0u);
  for (std::size_t k : {10u, 100u}) {
    double r = 0, n = 0;
    for (const auto& rec : test.records) {
      r += oracle::recall(std::vector<std::uint32_t>(ranked.begin(), ranked.begin() + std::min<std::size_t>(k, 20)),
                          rec.relevant_items, k);
      n += oracle::ndcg(ranked, rec.relevant_items, k);
    }
    EXPECT_NEAR(mv.recall_at(k), r / 3, 1e-12);
    EXPECT_NEAR(mv.ndcg_at(k), n / 3, 1e-12);
  }
  EXPECT_EQ(mv.n_records, 3u);
}

TEST(Evaluate, StochasticRankerIsThreadAndOrderInvariant) {
  const auto w = testing::tiny_world(100, {2}, 2, 2, 1, 10, 5);
  TripletDataset test;
  for (std::uint32_t i = 0; i < 40; ++i) test.records.push_back(make_record(i % 10, i % 5, {i, i + 1}, i));
  RandomRanker rr(100, 9);
  const auto a = evaluate(rr, test, w.users, w.queries, {{10, 100}, 1, 0});
  const auto b = evaluate(rr, test, w.users, w.queries, {{10, 100}, 4, 0});
  EXPECT_EQ(a.ndcg, b.ndcg);
  std::reverse(test.records.begin(), test.records.end());
  const auto c = evaluate(rr, test, w.users, w.queries, {{10, 100}, 3, 0});
  EXPECT_NEAR(a.ndcg[0], c.ndcg[0], 1e-12);
  EXPECT_NEAR(a.recall[1], c.recall[1], 1e-12);
}

TEST(Evaluate, CoverageCounts) {
  TripletDataset train, test;
  train.records = {make_record(0, 0, {1, 2}, 0)};
  test.records = {make_record(0, 0, {1, 5}, 0), make_record(3, 0, {2}, 0)};
  const auto c = compute_coverage(train, test);
  EXPECT_EQ(c.test_records, 2u);
  EXPECT_DOUBLE_EQ(c.users_seen_in_train, 0.5);
  EXPECT_DOUBLE_EQ(c.items_seen_in_train, 2.0 / 3.0);
}

}  // namespace
}  // namespace jam
