#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jam/dataset.hpp"
#include "jam/metrics.hpp"
#include "jam/ranking.hpp"

namespace jam {

/// Recall/NDCG at each cutoff, averaged over records.
struct MetricValues {
  std::vector<std::size_t> ks;
  std::vector<double> recall;
  std::vector<double> ndcg;
  std::size_t n_records = 0;

  double recall_at(std::size_t k) const;
  double ndcg_at(std::size_t k) const;
};

struct Coverage {
  std::size_t test_records = 0;
  double users_seen_in_train = 0.0;  // share of test records whose user occurs in train
  double items_seen_in_train = 0.0;  // share of test relevant items occurring in train
};

struct MetricsReport {
  std::string method;
  bool uses_query = false;
  bool uses_user = false;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricValues> per_seed;
  MetricValues mean;
  MetricValues stddev;  // population standard deviation across seeds
  Coverage coverage;
  std::string averaging = "per-record";
};

struct EvalOptions {
  std::vector<std::size_t> ks{10, 100};
  std::size_t threads = 1;
  /// Mixed into each record's ranking salt (only stochastic rankers use it).
  std::uint64_t salt = 0;
};

/// Ranks the full catalog for every record (no filtering of seen items) and
/// averages each metric over records. Deterministic for any thread count.
MetricValues evaluate(const Recommender& model, const TripletDataset& test,
                      const EmbeddingTable& users, const EmbeddingTable& queries,
                      const EvalOptions& options = {});

/// Per-record salt: depends only on the record's content, so evaluation is
/// invariant to record order.
std::uint64_t record_salt(const TripletRecord& r, std::uint64_t salt);

Coverage compute_coverage(const TripletDataset& train, const TripletDataset& test);

MetricsReport aggregate(std::string method, bool uses_query, bool uses_user,
                        std::vector<std::uint64_t> seeds, std::vector<MetricValues> per_seed,
                        Coverage coverage = {});

/// Three-decimal mean with standard-deviation subscript, leading zeros
/// dropped: ".086_{.002}".
std::string format_mean_std(double mean, double stddev);

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);

/// Aligned text table: method | q | u | Recall@10 | Recall@100 | NDCG@10 | NDCG@100.
std::string format_table(const std::vector<MetricsReport>& reports);

}  // namespace jam
