#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "jam/embedding_table.hpp"
#include "jam/model.hpp"

namespace jam {

/// Top-k result: scores non-increasing, ties broken by ascending item index.
struct RankedList {
  std::vector<std::uint32_t> items;
  std::vector<double> scores;

  std::size_t size() const noexcept { return items.size(); }
};

/// True when (score_a, a) ranks before (score_b, b) under the global tie rule.
inline bool ranks_before(double score_a, std::uint32_t a, double score_b, std::uint32_t b) {
  return score_a > score_b || (score_a == score_b && a < b);
}

/// Exact top-k of scores[0..n). k is clamped to n.
RankedList top_k(std::span<const double> scores, std::size_t k);

/// Scores items [0, n) with `score_fn(begin, end, out)` across `threads`
/// workers, takes a per-partition top-k and merges with the global tie rule.
/// The result is identical for every thread count.
RankedList parallel_top_k(std::size_t n, std::size_t k, std::size_t threads,
                          const std::function<void(std::size_t, std::size_t, std::span<double>)>&
                              score_range);

/// A ranking request over raw (upstream) embeddings. An empty `user` means
/// the anonymous origin user; `salt` seeds stochastic rankers.
struct RankQuery {
  std::span<const float> user;
  std::span<const float> query;
  std::uint64_t salt = 0;
};

/// Anything that can rank a full catalog for a (user, query).
class Recommender {
 public:
  virtual ~Recommender() = default;
  virtual std::string name() const = 0;
  virtual bool uses_query() const = 0;
  virtual bool uses_user() const = 0;
  virtual RankedList rank(const RankQuery& query, std::size_t k) const = 0;
};

/// Full-catalog JAM ranking. Holds references: params and catalog must
/// outlive it. MoE gates are deterministic here (no noise).
class JamRanker final : public Recommender {
 public:
  JamRanker(const JamParams& params, const Catalog& catalog, std::size_t threads = 1);

  std::string name() const override { return "JAM-" + params_.mixer.name(); }
  bool uses_query() const override { return true; }
  bool uses_user() const override { return true; }
  RankedList rank(const RankQuery& query, std::size_t k) const override;

  /// Score of every catalog item (used by tests and export).
  std::vector<double> score_all(const RankQuery& query) const;

 private:
  const JamParams& params_;
  const Catalog& catalog_;
  std::size_t threads_;
};

/// Convenience wrapper: ranks `catalog` for raw user/query embeddings.
RankedList rank_catalog(const JamParams& params, const Catalog& catalog,
                        std::span<const float> raw_user, std::span<const float> raw_query,
                        std::size_t k, std::size_t threads = 1);

}  // namespace jam
